#include "fingerpose/pose.hpp"

#include <cmath>
#include <stdexcept>

namespace fingerpose {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument(std::string("non-finite ") + what);
    }
}

} // namespace

double normalize_angle(double degrees) {
    require_finite(degrees, "angle");
    double r = std::fmod(degrees + 180.0, 360.0);
    if (r < 0.0) {
        r += 360.0;
    }
    return r - 180.0;
}

double circular_diff(double a_deg, double b_deg) {
    require_finite(a_deg, "angle");
    require_finite(b_deg, "angle");
    return normalize_angle(a_deg - b_deg);
}

UVPose to_uv_pose(const Pose2D& pose, const TouchCenter& touch) {
    require_finite(pose.c, "pose.c");
    require_finite(pose.r, "pose.r");
    require_finite(touch.x, "touch.x");
    require_finite(touch.y, "touch.y");
    const double th = deg_to_rad(normalize_angle(pose.theta));
    const double ct = std::cos(th);
    const double st = std::sin(th);
    const double dx = touch.x - pose.c;
    const double dy = touch.y - pose.r;
    UVPose uv;
    uv.u = ct * dx + st * dy;
    uv.v = -st * dx + ct * dy;
    uv.phi = normalize_angle(-pose.theta);
    return uv;
}

Pose2D from_uv_pose(const UVPose& uv, const TouchCenter& touch) {
    require_finite(uv.u, "uv.u");
    require_finite(uv.v, "uv.v");
    require_finite(touch.x, "touch.x");
    require_finite(touch.y, "touch.y");
    const double theta = normalize_angle(-uv.phi);
    const double th = deg_to_rad(theta);
    const double ct = std::cos(th);
    const double st = std::sin(th);
    Pose2D pose;
    // [x, y] - [c, r] = R(theta)^T [u, v]
    pose.c = touch.x - (ct * uv.u - st * uv.v);
    pose.r = touch.y - (st * uv.u + ct * uv.v);
    pose.theta = theta;
    return pose;
}

} // namespace fingerpose
