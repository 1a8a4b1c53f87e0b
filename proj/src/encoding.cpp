#include "fingerpose/encoding.hpp"

#include <cmath>
#include <stdexcept>

#include "fingerpose/errors.hpp"
#include "fingerpose/pose.hpp"

namespace fingerpose {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<double> gaussian_bump(double index, int t_bins, double sigma, bool circular) {
    std::vector<double> w(static_cast<std::size_t>(t_bins));
    const double inv = 1.0 / (2.0 * sigma * sigma);
    double sum = 0.0;
    for (int t = 0; t < t_bins; ++t) {
        double d = index - (double(t) + 0.5);
        if (circular) {
            d = std::remainder(d, double(t_bins));
        }
        w[t] = std::exp(-d * d * inv);
        sum += w[t];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw numeric_error("label bump has no mass");
    }
    for (double& x : w) {
        x /= sum;
    }
    return w;
}

void check_label(const SoftLabel& p, const BinTable& table, const char* name) {
    if (static_cast<int>(p.probs.size()) != table.t_bins) {
        throw std::invalid_argument(std::string(name) + ": label size does not match table");
    }
}

} // namespace

BinTable make_angle_table(int t_bins, double sigma) {
    if (t_bins < 2) {
        throw std::invalid_argument("angle table needs at least 2 bins");
    }
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("sigma must be positive");
    }
    BinTable tb;
    tb.kind = TableKind::angle;
    tb.t_bins = t_bins;
    tb.sigma = sigma;
    tb.range = 360.0;
    tb.centers.resize(t_bins);
    tb.z_sin.resize(t_bins);
    tb.z_cos.resize(t_bins);
    const double width = 360.0 / t_bins;
    for (int t = 0; t < t_bins; ++t) {
        const double c = -180.0 + (double(t) + 0.5) * width;
        tb.centers[t] = c;
        tb.z_sin[t] = std::sin(deg_to_rad(c));
        tb.z_cos[t] = std::cos(deg_to_rad(c));
    }
    return tb;
}

BinTable make_position_table(int t_bins, double range, double sigma) {
    if (t_bins < 2) {
        throw std::invalid_argument("position table needs at least 2 bins");
    }
    if (!(sigma > 0.0) || !(range > 0.0)) {
        throw std::invalid_argument("sigma and range must be positive");
    }
    BinTable tb;
    tb.kind = TableKind::position;
    tb.t_bins = t_bins;
    tb.sigma = sigma;
    tb.range = range;
    tb.centers.resize(t_bins);
    const double width = range / t_bins;
    for (int t = 0; t < t_bins; ++t) {
        tb.centers[t] = (double(t) + 0.5) * width;
    }
    return tb;
}

std::pair<SoftLabel, SoftLabel> encode_angle(double theta_deg, const BinTable& table) {
    if (table.kind != TableKind::angle) {
        throw std::invalid_argument("encode_angle needs an angle table");
    }
    const double th = normalize_angle(theta_deg);
    const double index = (th + 180.0) * table.t_bins / 360.0;
    std::vector<double> bump = gaussian_bump(index, table.t_bins, table.sigma, true);
    SoftLabel ps{bump, LabelKind::angle_sin};
    SoftLabel pc{std::move(bump), LabelKind::angle_cos};
    return {std::move(ps), std::move(pc)};
}

double decode_angle(const SoftLabel& p_sin, const SoftLabel& p_cos, const BinTable& table) {
    if (table.kind != TableKind::angle) {
        throw std::invalid_argument("decode_angle needs an angle table");
    }
    check_label(p_sin, table, "p_sin");
    check_label(p_cos, table, "p_cos");
    double es = 0.0;
    double ec = 0.0;
    for (int t = 0; t < table.t_bins; ++t) {
        es += p_sin.probs[t] * table.z_sin[t];
        ec += p_cos.probs[t] * table.z_cos[t];
    }
    if (std::fabs(es) < 1e-12 && std::fabs(ec) < 1e-12) {
        throw degenerate_error("angle distribution has no direction");
    }
    return normalize_angle(rad_to_deg(std::atan2(es, ec)));
}

SoftLabel encode_position(double x, const BinTable& table) {
    if (table.kind != TableKind::position) {
        throw std::invalid_argument("encode_position needs a position table");
    }
    if (!(x >= 0.0) || !(x < table.range)) {
        throw std::out_of_range("position outside [0, range)");
    }
    const double index = x * table.t_bins / table.range;
    return SoftLabel{gaussian_bump(index, table.t_bins, table.sigma, false),
                     LabelKind::position};
}

double decode_position(const SoftLabel& p, const BinTable& table) {
    if (table.kind != TableKind::position) {
        throw std::invalid_argument("decode_position needs a position table");
    }
    check_label(p, table, "p");
    double e = 0.0;
    for (int t = 0; t < table.t_bins; ++t) {
        e += p.probs[t] * table.centers[t];
    }
    return e;
}

double ce_loss(const SoftLabel& predicted, const SoftLabel& target) {
    if (predicted.probs.size() != target.probs.size()) {
        throw std::invalid_argument("ce_loss: label sizes differ");
    }
    double loss = 0.0;
    for (std::size_t t = 0; t < predicted.probs.size(); ++t) {
        const double p = std::max(predicted.probs[t], kProbFloor);
        loss -= target.probs[t] * std::log(p);
    }
    return loss;
}

double trig_regression_loss(double sin_hat, double cos_hat, double theta_deg) {
    const double th = deg_to_rad(theta_deg);
    return std::fabs(sin_hat - std::sin(th)) + std::fabs(cos_hat - std::cos(th));
}

double trig_regression_decode(double sin_hat, double cos_hat) {
    if (std::fabs(sin_hat) < 1e-12 && std::fabs(cos_hat) < 1e-12) {
        throw degenerate_error("trig pair has no direction");
    }
    return normalize_angle(rad_to_deg(std::atan2(sin_hat, cos_hat)));
}

} // namespace fingerpose
