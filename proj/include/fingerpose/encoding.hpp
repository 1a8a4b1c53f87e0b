#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace fingerpose {

enum class LabelKind { angle_sin, angle_cos, position };
enum class TableKind { angle, position };

// Normalized probability vector over T bins.
struct SoftLabel {
    std::vector<double> probs;
    LabelKind kind = LabelKind::position;

    std::size_t size() const { return probs.size(); }
};

// Immutable bin geometry shared by encoders and decoders.  Angle tables
// cover [-180, 180) circularly; position tables cover [0, range) with
// edge truncation.
struct BinTable {
    TableKind kind = TableKind::angle;
    int t_bins = 0;
    double sigma = 0.0;           // Gaussian width, bin-index units
    double range = 360.0;         // position tables only
    std::vector<double> centers;  // bin centers (degrees or pixels)
    std::vector<double> z_sin;    // angle tables only
    std::vector<double> z_cos;
};

BinTable make_angle_table(int t_bins, double sigma);
BinTable make_position_table(int t_bins, double range, double sigma);

// Gaussian bump over bin index, circular distance, renormalized.  Both labels
// share the bump; they differ only in the z table applied at decode time.
std::pair<SoftLabel, SoftLabel> encode_angle(double theta_deg, const BinTable& table);

// Expectation decode: atan2 of expected sine and expected cosine, degrees.
double decode_angle(const SoftLabel& p_sin, const SoftLabel& p_cos, const BinTable& table);

// Gaussian bump over bin index, linear distance truncated at the edges,
// renormalized.  x must lie in [0, range).
SoftLabel encode_position(double x, const BinTable& table);

// Expectation of bin centers.
double decode_position(const SoftLabel& p, const BinTable& table);

// -sum target * log(max(pred, 1e-12)).
double ce_loss(const SoftLabel& predicted, const SoftLabel& target);

// L1 regression on the unit-circle embedding, and its decoder.
double trig_regression_loss(double sin_hat, double cos_hat, double theta_deg);
double trig_regression_decode(double sin_hat, double cos_hat);

} // namespace fingerpose
