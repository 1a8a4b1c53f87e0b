#include "fingerpose/mapping.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

#include "fingerpose/errors.hpp"

namespace fingerpose {

namespace {

constexpr const char* kMonomialOrder = "u^j v^(i-j), i=1..k ascending, j=0..i ascending";

void check_model(const MappingModel& m) {
    if (m.k < 1) {
        throw std::invalid_argument("mapping degree k must be >= 1");
    }
    const std::size_t want = static_cast<std::size_t>(monomial_count(m.k));
    if (m.a_roll.size() != want || m.a_pitch.size() != want) {
        throw std::invalid_argument("mapping coefficient length does not match k");
    }
    if (!(m.input_scale > 0.0)) {
        throw std::invalid_argument("mapping input_scale must be positive");
    }
    for (double c : m.a_roll) {
        if (!std::isfinite(c)) throw std::invalid_argument("non-finite roll coefficient");
    }
    for (double c : m.a_pitch) {
        if (!std::isfinite(c)) throw std::invalid_argument("non-finite pitch coefficient");
    }
    if (!std::isfinite(m.b_roll) || !std::isfinite(m.b_pitch) || !std::isfinite(m.b_yaw)) {
        throw std::invalid_argument("non-finite mapping bias");
    }
}

double circular_mean_deg(const std::vector<double>& degs) {
    double ss = 0.0, sc = 0.0;
    for (double d : degs) {
        ss += std::sin(deg_to_rad(d));
        sc += std::cos(deg_to_rad(d));
    }
    if (std::hypot(ss, sc) < 1e-12 * double(degs.size() ? degs.size() : 1)) {
        throw underdetermined_error("yaw residuals have no mean direction");
    }
    return rad_to_deg(std::atan2(ss, sc));
}

} // namespace

int monomial_count(int k) {
    if (k < 1) {
        throw std::invalid_argument("mapping degree k must be >= 1");
    }
    return k * (k + 3) / 2;
}

std::string monomial_name(int idx, int k) {
    const int m = monomial_count(k);
    if (idx == m) {
        return "bias";
    }
    int at = 0;
    for (int i = 1; i <= k; ++i) {
        for (int j = 0; j <= i; ++j, ++at) {
            if (at != idx) continue;
            std::ostringstream os;
            const int pu = j, pv = i - j;
            if (pu > 0) {
                os << "u";
                if (pu > 1) os << "^" << pu;
            }
            if (pv > 0) {
                if (pu > 0) os << " ";
                os << "v";
                if (pv > 1) os << "^" << pv;
            }
            return os.str();
        }
    }
    throw std::invalid_argument("monomial index out of range");
}

std::vector<double> monomial_row(double u, double v, int k) {
    if (k < 1) {
        throw std::invalid_argument("mapping degree k must be >= 1");
    }
    if (!std::isfinite(u) || !std::isfinite(v)) {
        throw std::invalid_argument("non-finite monomial input");
    }
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(monomial_count(k)));
    // Powers computed incrementally; order is i ascending, j ascending.
    for (int i = 1; i <= k; ++i) {
        for (int j = 0; j <= i; ++j) {
            double t = 1.0;
            for (int a = 0; a < j; ++a) t *= u;
            for (int a = 0; a < i - j; ++a) t *= v;
            row.push_back(t);
        }
    }
    return row;
}

MappingModel fit_global(const std::vector<UV3DSample>& samples, int k, double input_scale) {
    const int m = monomial_count(k);
    if (!(input_scale > 0.0)) {
        throw std::invalid_argument("input_scale must be positive");
    }
    const int n = static_cast<int>(samples.size());
    if (n < m + 1) {
        throw underdetermined_error(
            "fit_global: need at least " + std::to_string(m + 1) + " samples for k=" +
            std::to_string(k) + ", got " + std::to_string(n));
    }

    Eigen::MatrixXd A(n, m + 1);
    Eigen::MatrixXd rhs(n, 2);
    std::vector<double> yaw_diffs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const UVPose& uv = samples[i].uv;
        const std::vector<double> row =
            monomial_row(uv.u / input_scale, uv.v / input_scale, k);
        for (int c = 0; c < m; ++c) {
            A(i, c) = row[c];
        }
        A(i, m) = 1.0;
        rhs(i, 0) = samples[i].pose3d.roll;
        rhs(i, 1) = samples[i].pose3d.pitch;
        yaw_diffs[i] = circular_diff(samples[i].pose3d.yaw, uv.phi);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < m + 1) {
        const int bad = qr.colsPermutation().indices()(qr.rank());
        throw underdetermined_error(
            "fit_global: design matrix is rank deficient; dependent column: " +
            monomial_name(bad, k));
    }
    const Eigen::MatrixXd x = qr.solve(rhs);

    MappingModel model;
    model.k = k;
    model.input_scale = input_scale;
    model.a_roll.resize(m);
    model.a_pitch.resize(m);
    for (int c = 0; c < m; ++c) {
        model.a_roll[c] = x(c, 0);
        model.a_pitch[c] = x(c, 1);
    }
    model.b_roll = x(m, 0);
    model.b_pitch = x(m, 1);
    model.b_yaw = circular_mean_deg(yaw_diffs);
    check_model(model);
    return model;
}

MappingModel adapt_bias(const MappingModel& model, const std::vector<UV3DSample>& touches,
                        int max_touches) {
    check_model(model);
    if (touches.empty()) {
        throw std::invalid_argument("adapt_bias: no touches");
    }
    if (static_cast<int>(touches.size()) > max_touches) {
        throw std::invalid_argument("adapt_bias: more touches than the cap of " +
                                    std::to_string(max_touches));
    }
    double droll = 0.0, dpitch = 0.0;
    std::vector<double> dyaw;
    dyaw.reserve(touches.size());
    for (const UV3DSample& t : touches) {
        const Pose3D pred = map_to_3d(model, t.uv);
        droll += t.pose3d.roll - pred.roll;
        dpitch += t.pose3d.pitch - pred.pitch;
        dyaw.push_back(circular_diff(t.pose3d.yaw, pred.yaw));
    }
    MappingModel out = model;
    out.b_roll += droll / double(touches.size());
    out.b_pitch += dpitch / double(touches.size());
    out.b_yaw = normalize_angle(out.b_yaw + circular_mean_deg(dyaw));
    return out;
}

Pose3D map_to_3d(const MappingModel& model, const UVPose& uv) {
    check_model(model);
    const std::vector<double> row =
        monomial_row(uv.u / model.input_scale, uv.v / model.input_scale, model.k);
    Pose3D out;
    out.roll = model.b_roll;
    out.pitch = model.b_pitch;
    for (std::size_t c = 0; c < row.size(); ++c) {
        out.roll += row[c] * model.a_roll[c];
        out.pitch += row[c] * model.a_pitch[c];
    }
    out.yaw = normalize_angle(uv.phi + model.b_yaw);
    return out;
}

std::string mapping_to_json(const MappingModel& model) {
    check_model(model);
    nlohmann::ordered_json j;
    j["monomial_order"] = kMonomialOrder;
    j["k"] = model.k;
    j["input_scale"] = model.input_scale;
    j["a_roll"] = model.a_roll;
    j["a_pitch"] = model.a_pitch;
    j["b_roll"] = model.b_roll;
    j["b_pitch"] = model.b_pitch;
    j["b_yaw"] = model.b_yaw;
    return j.dump(2) + "\n";
}

MappingModel mapping_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("bad mapping JSON: ") + e.what());
    }
    MappingModel model;
    try {
        model.k = j.at("k").get<int>();
        model.input_scale = j.at("input_scale").get<double>();
        model.a_roll = j.at("a_roll").get<std::vector<double>>();
        model.a_pitch = j.at("a_pitch").get<std::vector<double>>();
        model.b_roll = j.at("b_roll").get<double>();
        model.b_pitch = j.at("b_pitch").get<double>();
        model.b_yaw = j.at("b_yaw").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("bad mapping JSON: ") + e.what());
    }
    try {
        check_model(model);
    } catch (const std::invalid_argument& e) {
        throw data_error(std::string("bad mapping JSON: ") + e.what());
    }
    return model;
}

void save_mapping(const std::string& path, const MappingModel& model) {
    std::ofstream out(path);
    if (!out) {
        throw data_error("cannot write mapping file: " + path);
    }
    out << mapping_to_json(model);
    if (!out) {
        throw data_error("write failed: " + path);
    }
}

MappingModel load_mapping(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open mapping file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return mapping_from_json(ss.str());
}

std::vector<UV3DSample> load_uv3d_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open sample file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw data_error("empty sample file: " + path);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "u,v,phi,roll,pitch,yaw") {
        throw data_error("bad sample header in " + path + ": " + line);
    }
    std::vector<UV3DSample> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        double vals[6];
        char comma;
        for (int i = 0; i < 6; ++i) {
            if (i > 0 && (!(ss >> comma) || comma != ',')) {
                throw data_error("bad sample row " + std::to_string(lineno) + " in " + path);
            }
            if (!(ss >> vals[i]) || !std::isfinite(vals[i])) {
                throw data_error("bad sample row " + std::to_string(lineno) + " in " + path);
            }
        }
        UV3DSample s;
        s.uv = {vals[0], vals[1], vals[2]};
        s.pose3d = {vals[3], vals[4], vals[5]};
        out.push_back(s);
    }
    return out;
}

void save_uv3d_csv(const std::string& path, const std::vector<UV3DSample>& samples) {
    std::ofstream out(path);
    if (!out) {
        throw data_error("cannot write sample file: " + path);
    }
    out << "u,v,phi,roll,pitch,yaw\n";
    char buf[256];
    for (const UV3DSample& s : samples) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.uv.u,
                      s.uv.v, s.uv.phi, s.pose3d.roll, s.pose3d.pitch, s.pose3d.yaw);
        out << buf;
    }
    if (!out) {
        throw data_error("write failed: " + path);
    }
}

} // namespace fingerpose
