#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fingerpose/encoding.hpp"
#include "fingerpose/image.hpp"
#include "fingerpose/pose.hpp"
#include "fingerpose/simdata.hpp"

namespace fingerpose {

// Angle head variants: the soft-binned classification default plus the two
// regression baselines it is compared against.
enum class AngleHead { soft_bin, trig, direct };

std::string angle_head_name(AngleHead mode);
AngleHead angle_head_from_name(const std::string& name);

struct NetConfig {
    std::vector<int> cap_channels{8, 16};     // stride-1 3x3 convs
    std::vector<int> patch_channels{8, 16, 32, 64};  // stride-2 3x3 convs
    int fused_dim = 128;
    int t_pos = 64;
    int t_ang = 120;
    double pos_sigma = 1.0;   // bins
    double ang_sigma = 2.5;   // bins
    // Affine taking sensor coordinates into the position-head frame
    // [0, pos_range): h = x * pos_scale + pos_offset.  Stored with the model
    // so checkpoints decode without the generator config.
    double pos_range = 512.0;
    double pos_offset = 196.0;
    double pos_scale = 1.0;
    int cap_size = 7;
    int patch_size = 120;
    AngleHead angle_head = AngleHead::soft_bin;
    std::uint64_t init_seed = 1;
};

void validate_net_config(const NetConfig& cfg);

// A few hundred parameters with small inputs; cheap enough for O(P) finite
// differencing.
NetConfig tiny_net_config(int cap_size = 5, int patch_size = 12);

struct LayerInfo {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
};

std::vector<LayerInfo> layer_map(const NetConfig& cfg);
std::size_t param_count(const NetConfig& cfg);

struct EstimatorModel {
    NetConfig config;
    std::vector<double> params;  // flat, ordered per layer_map
};

// Fan-in-scaled uniform weights, zero biases, drawn from config.init_seed.
EstimatorModel init_model(const NetConfig& cfg);

struct HeadOutput {
    AngleHead mode = AngleHead::soft_bin;
    SoftLabel p_row, p_col;
    SoftLabel p_sin, p_cos;   // soft_bin only
    double sin_hat = 0.0;     // trig only
    double cos_hat = 0.0;
    double theta_units = 0.0; // direct only, half-turns
};

struct EncodedLabels {
    SoftLabel row, col;
    SoftLabel sin_lab, cos_lab;  // soft_bin only
    double theta_deg = 0.0;
};

struct LabelCodec {
    BinTable pos_table;
    BinTable ang_table;
};

LabelCodec make_codec(const NetConfig& cfg);
EncodedLabels encode_labels(const Pose2D& pose, const NetConfig& cfg,
                            const LabelCodec& codec);

HeadOutput forward(const EstimatorModel& model, const GrayImage& cap,
                   const GrayImage& patch);

// Expectation decode of the head distributions back to a sensor-frame pose.
Pose2D decode_heads(const HeadOutput& out, const NetConfig& cfg, const LabelCodec& codec);
Pose2D predict_pose2d(const EstimatorModel& model, const GrayImage& cap,
                      const GrayImage& patch);

// Position CE terms plus the angle term of the configured head, unit weights.
double loss(const HeadOutput& out, const EncodedLabels& labels);

struct TrainSample {
    const GrayImage* cap = nullptr;
    const GrayImage* patch = nullptr;
    EncodedLabels labels;
};

double batch_loss(const EstimatorModel& model, const std::vector<TrainSample>& batch);

// Analytic gradient of the mean batch loss for every parameter.
std::vector<double> gradients(const EstimatorModel& model,
                              const std::vector<TrainSample>& batch);

// Central finite differences against the analytic gradient; returns the max
// relative error over parameters with |g| > 1e-8.
double grad_check(const EstimatorModel& model, const std::vector<TrainSample>& batch,
                  double eps);

struct TrainConfig {
    double lr_start = 1e-3;
    double lr_end = 1e-6;
    int batch_size = 32;
    int epochs = 30;
    std::uint64_t seed = 1;
    double weight_decay = 1e-2;  // decoupled
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_yaw_mae = 0.0;
    double val_pos_mae = 0.0;
};

struct TrainResult {
    EstimatorModel model;
    std::vector<EpochStats> history;
};

// AdamW with per-step cosine annealing from lr_start to lr_end.  "train"
// split trains, "test" split is validation; the two must not share fingers.
TrainResult train(const EstimatorModel& init, const Dataset& data,
                  const TrainConfig& cfg);

struct Checkpoint {
    EstimatorModel model;
    std::uint64_t seed = 0;
    int epoch = 0;
};

// One JSON header line (config, seed, epoch, layer map), then the raw
// little-endian doubles.
void save_checkpoint(const std::string& path, const EstimatorModel& model,
                     std::uint64_t seed, int epoch);
Checkpoint load_checkpoint(const std::string& path);

void save_history_csv(const std::string& path, const std::vector<EpochStats>& history);

} // namespace fingerpose
