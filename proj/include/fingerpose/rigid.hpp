#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fingerpose/pose.hpp"

namespace fingerpose {

using PointSet = std::vector<Point2>;

// Rotation + translation minimizing sum ||p_i - R(theta) q_i - t||^2,
// with the residual of the optimal fit.
struct RigidTransform2D {
    double theta = 0.0;  // degrees
    double tx = 0.0;
    double ty = 0.0;
    double rms_residual = 0.0;
};

// Closed-form 2D orthogonal Procrustes (rotation + translation, no scale or
// reflection).  Throws std::invalid_argument on size mismatch and
// degenerate_error for n < 2 or coincident/zero-covariance configurations.
RigidTransform2D fit_rigid(const PointSet& p, const PointSet& q);

// Applies pt -> R(theta) pt + t to every point.
PointSet apply_rigid(const RigidTransform2D& xf, const PointSet& pts);

// Maps a pose given in the q frame into the p frame: the center moves like a
// point, the angle adds the rotation.
Pose2D transfer_pose(const Pose2D& pose, const RigidTransform2D& xf);

// Matched-pair CSV with header px,py,qx,qy.
std::pair<PointSet, PointSet> load_matched_csv(const std::string& path);
void save_matched_csv(const std::string& path, const PointSet& p, const PointSet& q);

} // namespace fingerpose
