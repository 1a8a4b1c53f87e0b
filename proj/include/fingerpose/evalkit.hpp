#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace fingerpose {

// One prediction/label pair in evaluation space: UV position plus the three
// 3D angles.  u/v in pixels, angles in degrees.
struct PoseVector {
    double u = 0.0;
    double v = 0.0;
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
};

struct EvalRecord {
    PoseVector pred;
    PoseVector gt;
};

struct MetricCell {
    bool present = false;
    double mae = 0.0;
    double rmse = 0.0;
    double sd = 0.0;
};

inline constexpr std::array<const char*, 5> kEvalTargets = {"u", "v", "yaw", "pitch",
                                                            "roll"};

struct RegimeReport {
    double bound = 180.0;
    std::size_t n = 0;
    std::array<MetricCell, 5> cells;  // order matches kEvalTargets
};

struct EvalReport {
    std::vector<RegimeReport> regimes;
};

// Element-wise |circular_diff| magnitudes; lengths must match.
std::vector<double> angular_errors(const std::vector<double>& pred_deg,
                                   const std::vector<double>& gt_deg);

// Samples with |gt yaw| <= bound; bound must be one of 45, 90, 135, 180.
std::vector<EvalRecord> partition_by_yaw(const std::vector<EvalRecord>& records,
                                         double bound);

// MAE / RMSE / SD per target per regime.  SD is the population standard
// deviation about the mean signed error, so rmse^2 = bias^2 + sd^2 exactly.
EvalReport make_report(const std::vector<EvalRecord>& records,
                       const std::vector<double>& regimes);

// CSV rows `regime,target,mae,rmse,sd`; absent cells have empty metric fields.
std::string report_csv(const EvalReport& report);

// Aligned text, one block per regime, columns u v yaw pitch roll.
std::string report_table(const EvalReport& report);

} // namespace fingerpose
