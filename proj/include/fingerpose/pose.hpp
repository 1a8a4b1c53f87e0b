#pragma once

namespace fingerpose {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * (kPi / 180.0); }
inline double rad_to_deg(double r) { return r * (180.0 / kPi); }

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// Pose of a finger contact in image coordinates: column c (x, rightwards),
// row r (y, downwards), theta in degrees.  Angles are measured so that
// positive rotations appear counter-clockwise on screen.
struct Pose2D {
    double c = 0.0;
    double r = 0.0;
    double theta = 0.0;
};

// Pose expressed in the touch-centred rotated frame.
struct UVPose {
    double u = 0.0;
    double v = 0.0;
    double phi = 0.0;
};

struct Pose3D {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
};

struct TouchCenter {
    double x = 0.0;
    double y = 0.0;
};

// Wraps any finite angle into [-180, 180).  Throws std::invalid_argument on
// non-finite input.
double normalize_angle(double degrees);

// Signed shortest difference a - b, wrapped into [-180, 180).
double circular_diff(double a_deg, double b_deg);

// [u, v] = R(theta) ([x, y] - [c, r]),  phi = -theta, with
// R(theta) = [[cos, sin], [-sin, cos]] (counter-clockwise on screen for
// y-down coordinates).
UVPose to_uv_pose(const Pose2D& pose, const TouchCenter& touch);

// Exact inverse of to_uv_pose for the same touch point.
Pose2D from_uv_pose(const UVPose& uv, const TouchCenter& touch);

} // namespace fingerpose
