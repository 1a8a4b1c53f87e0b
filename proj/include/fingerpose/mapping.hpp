#pragma once

#include <string>
#include <vector>

#include "fingerpose/pose.hpp"

namespace fingerpose {

// Bivariate polynomial map from UV position to roll/pitch plus an additive
// yaw offset.  Coefficients run over monomials u^j v^(i-j), i = 1..k
// ascending, j = 0..i ascending; the constant term lives in the biases.
struct MappingModel {
    int k = 4;
    double input_scale = 256.0;
    std::vector<double> a_roll;
    std::vector<double> a_pitch;
    double b_roll = 0.0;
    double b_pitch = 0.0;
    double b_yaw = 0.0;
};

struct UV3DSample {
    UVPose uv;
    Pose3D pose3d;
};

// Number of non-constant monomials of total degree 1..k: k(k+3)/2.
int monomial_count(int k);

// Human-readable name of design column `idx` (monomials first, then "bias").
std::string monomial_name(int idx, int k);

// Monomials of (u, v) in the documented order.  Callers normalize inputs
// before expansion; this is the raw row.
std::vector<double> monomial_row(double u, double v, int k);

MappingModel fit_global(const std::vector<UV3DSample>& samples, int k = 4,
                        double input_scale = 256.0);

// Coefficients frozen; biases shifted by the mean residual over the touches
// (circular mean for yaw).
MappingModel adapt_bias(const MappingModel& model, const std::vector<UV3DSample>& touches,
                        int max_touches = 8);

Pose3D map_to_3d(const MappingModel& model, const UVPose& uv);

std::string mapping_to_json(const MappingModel& model);
MappingModel mapping_from_json(const std::string& text);
void save_mapping(const std::string& path, const MappingModel& model);
MappingModel load_mapping(const std::string& path);

// UV/3D sample CSV with header u,v,phi,roll,pitch,yaw.
std::vector<UV3DSample> load_uv3d_csv(const std::string& path);
void save_uv3d_csv(const std::string& path, const std::vector<UV3DSample>& samples);

} // namespace fingerpose
