#include "fingerpose/rigid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fingerpose/errors.hpp"

namespace fingerpose {

RigidTransform2D fit_rigid(const PointSet& p, const PointSet& q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("fit_rigid: point sets differ in size");
    }
    const std::size_t n = p.size();
    if (n < 2) {
        throw degenerate_error("fit_rigid: need at least 2 point pairs");
    }
    double pmx = 0.0, pmy = 0.0, qmx = 0.0, qmy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i].x) || !std::isfinite(p[i].y) ||
            !std::isfinite(q[i].x) || !std::isfinite(q[i].y)) {
            throw std::invalid_argument("fit_rigid: non-finite point");
        }
        pmx += p[i].x;
        pmy += p[i].y;
        qmx += q[i].x;
        qmy += q[i].y;
    }
    pmx /= double(n);
    pmy /= double(n);
    qmx /= double(n);
    qmy /= double(n);

    // With R = [[c, s], [-s, c]] the objective reduces to maximizing
    // cos(theta)*D + sin(theta)*C over the centered sets.
    double D = 0.0, C = 0.0, sp2 = 0.0, sq2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double px = p[i].x - pmx, py = p[i].y - pmy;
        const double qx = q[i].x - qmx, qy = q[i].y - qmy;
        D += px * qx + py * qy;
        C += px * qy - py * qx;
        sp2 += px * px + py * py;
        sq2 += qx * qx + qy * qy;
    }
    const double mag = std::hypot(C, D);
    if (mag < 1e-9 * (1.0 + std::sqrt(sp2 * sq2))) {
        throw degenerate_error("fit_rigid: degenerate configuration (zero covariance)");
    }
    RigidTransform2D xf;
    const double th = std::atan2(C, D);
    xf.theta = normalize_angle(rad_to_deg(th));
    const double ct = std::cos(th);
    const double st = std::sin(th);
    xf.tx = pmx - (ct * qmx + st * qmy);
    xf.ty = pmy - (-st * qmx + ct * qmy);

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double rx = p[i].x - (ct * q[i].x + st * q[i].y + xf.tx);
        const double ry = p[i].y - (-st * q[i].x + ct * q[i].y + xf.ty);
        ss += rx * rx + ry * ry;
    }
    xf.rms_residual = std::sqrt(ss / double(n));
    return xf;
}

PointSet apply_rigid(const RigidTransform2D& xf, const PointSet& pts) {
    const double th = deg_to_rad(xf.theta);
    const double ct = std::cos(th);
    const double st = std::sin(th);
    PointSet out;
    out.reserve(pts.size());
    for (const Point2& pt : pts) {
        out.push_back({ct * pt.x + st * pt.y + xf.tx,
                       -st * pt.x + ct * pt.y + xf.ty});
    }
    return out;
}

Pose2D transfer_pose(const Pose2D& pose, const RigidTransform2D& xf) {
    const PointSet center = apply_rigid(xf, {{pose.c, pose.r}});
    Pose2D out;
    out.c = center[0].x;
    out.r = center[0].y;
    out.theta = normalize_angle(pose.theta + xf.theta);
    return out;
}

std::pair<PointSet, PointSet> load_matched_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open matched-point file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw data_error("empty matched-point file: " + path);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "px,py,qx,qy") {
        throw data_error("bad matched-point header in " + path + ": " + line);
    }
    PointSet p, q;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        double vals[4];
        char comma;
        for (int i = 0; i < 4; ++i) {
            if (i > 0 && (!(ss >> comma) || comma != ',')) {
                throw data_error("bad matched-point row " + std::to_string(row) + " in " + path);
            }
            if (!(ss >> vals[i])) {
                throw data_error("bad matched-point row " + std::to_string(row) + " in " + path);
            }
        }
        p.push_back({vals[0], vals[1]});
        q.push_back({vals[2], vals[3]});
    }
    return {std::move(p), std::move(q)};
}

void save_matched_csv(const std::string& path, const PointSet& p, const PointSet& q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("save_matched_csv: point sets differ in size");
    }
    std::ofstream out(path);
    if (!out) {
        throw data_error("cannot write matched-point file: " + path);
    }
    out << "px,py,qx,qy\n";
    char buf[160];
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n",
                      p[i].x, p[i].y, q[i].x, q[i].y);
        out << buf;
    }
    if (!out) {
        throw data_error("write failed: " + path);
    }
}

} // namespace fingerpose
