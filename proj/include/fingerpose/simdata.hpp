#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fingerpose/image.hpp"
#include "fingerpose/mapping.hpp"
#include "fingerpose/pose.hpp"

namespace fingerpose {

// Fixed ground-truth UV->3D relation used by the default generator; fitting
// against data produced from it is an exact oracle.
MappingModel default_gt_mapping();

struct SynthConfig {
    std::uint64_t seed = 1;
    int n_fingers = 10;
    int samples_per_finger = 200;
    double yaw_range = 180.0;  // one of 45, 90, 135, 180
    double ridge_period = 9.0;
    double noise_std = 0.03;
    double train_fraction = 0.8;
    double contact_radius_lo = 55.0;
    double contact_radius_hi = 85.0;
    int master_size = 512;
    double master_ppi = 500.0;
    double cap_ppi = 10.0;
    int cap_render_size = 350;
    int patch_size = 120;
    double uv_radius_max = 140.0;
    MappingModel gt_mapping = default_gt_mapping();
};

void validate_config(const SynthConfig& cfg);

struct MasterPrint {
    GrayImage img;
    double center_x = 0.0;
    double center_y = 0.0;
    double orientation_deg = 0.0;
};

struct SampleLabels {
    Pose2D pose2d;
    UVPose uv;
    Pose3D pose3d;
};

struct Sample {
    std::string sample_id;
    int finger_id = 0;
    std::string split;  // "train" or "test"
    GrayImage cap;
    GrayImage patch;
    Pose2D pose2d;
    UVPose uv;
    Pose3D pose3d;
};

struct Dataset {
    std::vector<Sample> samples;
};

// One row of the dataset manifest, without pixel data.
struct ManifestRow {
    std::string sample_id;
    int finger_id = 0;
    std::string split;
    std::string cap_path;
    std::string patch_path;
    Pose2D pose2d;
    UVPose uv;
    Pose3D pose3d;
};

// Sinusoidal-ridge master print: ridges follow a seeded smooth phase field,
// faded to white outside a radial foreground mask.  Deterministic in
// (seed, config).
MasterPrint synth_rolled_fingerprint(std::uint64_t seed, const SynthConfig& cfg);

// Labels implied by a UV pose under the generator's mapping, with the touch
// center at the patch image center.
SampleLabels sample_labels_at(const UVPose& uv, const SynthConfig& cfg);

// Renders one sample at the given UV pose: rotated patch resampled from the
// master, elliptical contact blob downsampled to capacitive resolution, both
// with additive Gaussian noise.  Throws sample_rejected if |uv| exceeds the
// usable master radius.
Sample synth_sample(std::uint64_t seed, const MasterPrint& master, const UVPose& uv,
                    const SynthConfig& cfg);

Dataset synth_dataset(const SynthConfig& cfg, int threads = 1);

// Pose draws only, identical to the poses of synth_dataset under the same
// config; orders of magnitude faster than rendering.
std::vector<SampleLabels> synth_dataset_labels(const SynthConfig& cfg);

// Manifest CSV plus one PGM pair per sample under dir/cap and dir/patch.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& manifest_path);
std::vector<ManifestRow> load_manifest_labels(const std::string& manifest_path);

} // namespace fingerpose
