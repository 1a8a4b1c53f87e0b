#include "fingerpose/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fingerpose/errors.hpp"
#include "fingerpose/rng.hpp"

namespace fingerpose {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr const char* kCheckpointFormat = "fingerpose-checkpoint-v1";

struct ConvPlan {
    int c_in = 0, h_in = 0, w_in = 0;
    int c_out = 0, h_out = 0, w_out = 0;
    int stride = 1;
    std::size_t w_off = 0, b_off = 0;
};

struct FcPlan {
    int in = 0, out = 0;
    std::size_t w_off = 0, b_off = 0;
};

struct NetPlan {
    std::vector<ConvPlan> cap, patch;
    FcPlan fused, head_row, head_col, head_sin, head_cos, head_trig, head_dir;
    int concat = 0;
    std::size_t total = 0;
    std::vector<LayerInfo> layers;
};

int conv_out_size(int in, int stride) { return (in - 1) / stride + 1; }

NetPlan build_plan(const NetConfig& cfg) {
    validate_net_config(cfg);
    NetPlan plan;
    std::size_t at = 0;
    auto add = [&](const std::string& name, std::size_t count) {
        plan.layers.push_back({name, at, count});
        const std::size_t off = at;
        at += count;
        return off;
    };
    auto add_conv = [&](const std::string& name, int c_in, int size, int c_out,
                        int stride) {
        ConvPlan cp;
        cp.c_in = c_in;
        cp.h_in = cp.w_in = size;
        cp.c_out = c_out;
        cp.h_out = cp.w_out = conv_out_size(size, stride);
        cp.stride = stride;
        cp.w_off = add(name + ".w", std::size_t(c_out) * c_in * 9);
        cp.b_off = add(name + ".b", std::size_t(c_out));
        return cp;
    };
    auto add_fc = [&](const std::string& name, int in, int out) {
        FcPlan fp;
        fp.in = in;
        fp.out = out;
        fp.w_off = add(name + ".w", std::size_t(out) * in);
        fp.b_off = add(name + ".b", std::size_t(out));
        return fp;
    };

    int c = 1, size = cfg.cap_size;
    for (std::size_t i = 0; i < cfg.cap_channels.size(); ++i) {
        const ConvPlan cp =
            add_conv("cap_conv" + std::to_string(i), c, size, cfg.cap_channels[i], 1);
        c = cp.c_out;
        size = cp.h_out;
        plan.cap.push_back(cp);
    }
    c = 1;
    size = cfg.patch_size;
    for (std::size_t i = 0; i < cfg.patch_channels.size(); ++i) {
        const ConvPlan cp =
            add_conv("patch_conv" + std::to_string(i), c, size, cfg.patch_channels[i], 2);
        c = cp.c_out;
        size = cp.h_out;
        plan.patch.push_back(cp);
    }
    plan.concat = cfg.cap_channels.back() + cfg.patch_channels.back();
    plan.fused = add_fc("fused", plan.concat, cfg.fused_dim);
    plan.head_row = add_fc("head_row", cfg.fused_dim, cfg.t_pos);
    plan.head_col = add_fc("head_col", cfg.fused_dim, cfg.t_pos);
    switch (cfg.angle_head) {
        case AngleHead::soft_bin:
            plan.head_sin = add_fc("head_sin", cfg.fused_dim, cfg.t_ang);
            plan.head_cos = add_fc("head_cos", cfg.fused_dim, cfg.t_ang);
            break;
        case AngleHead::trig:
            plan.head_trig = add_fc("head_trig", cfg.fused_dim, 2);
            break;
        case AngleHead::direct:
            plan.head_dir = add_fc("head_direct", cfg.fused_dim, 1);
            break;
    }
    plan.total = at;
    return plan;
}

struct Ws {
    std::vector<std::vector<double>> cap_a, patch_a;  // [0] input, then post-relu
    std::vector<double> gap_cap, gap_patch, concat, fused;
    std::vector<double> row_logit, col_logit, sin_logit, cos_logit, extra_out;
    std::vector<double> row_p, col_p, sin_p, cos_p;
    std::vector<std::vector<double>> d_cap_a, d_patch_a;
    std::vector<double> d_gap_cap, d_gap_patch, d_concat, d_fused;
    std::vector<double> d_row, d_col, d_sin, d_cos, d_extra;
};

std::size_t act_size(const ConvPlan& cp) {
    return std::size_t(cp.c_out) * cp.h_out * cp.w_out;
}

Ws make_ws(const NetPlan& plan, const NetConfig& cfg) {
    Ws ws;
    ws.cap_a.resize(plan.cap.size() + 1);
    ws.d_cap_a.resize(plan.cap.size() + 1);
    ws.cap_a[0].resize(std::size_t(cfg.cap_size) * cfg.cap_size);
    ws.d_cap_a[0].resize(ws.cap_a[0].size());
    for (std::size_t i = 0; i < plan.cap.size(); ++i) {
        ws.cap_a[i + 1].resize(act_size(plan.cap[i]));
        ws.d_cap_a[i + 1].resize(act_size(plan.cap[i]));
    }
    ws.patch_a.resize(plan.patch.size() + 1);
    ws.d_patch_a.resize(plan.patch.size() + 1);
    ws.patch_a[0].resize(std::size_t(cfg.patch_size) * cfg.patch_size);
    ws.d_patch_a[0].resize(ws.patch_a[0].size());
    for (std::size_t i = 0; i < plan.patch.size(); ++i) {
        ws.patch_a[i + 1].resize(act_size(plan.patch[i]));
        ws.d_patch_a[i + 1].resize(act_size(plan.patch[i]));
    }
    ws.gap_cap.resize(cfg.cap_channels.back());
    ws.gap_patch.resize(cfg.patch_channels.back());
    ws.concat.resize(plan.concat);
    ws.fused.resize(cfg.fused_dim);
    ws.row_logit.resize(cfg.t_pos);
    ws.col_logit.resize(cfg.t_pos);
    ws.row_p.resize(cfg.t_pos);
    ws.col_p.resize(cfg.t_pos);
    ws.sin_logit.resize(cfg.t_ang);
    ws.cos_logit.resize(cfg.t_ang);
    ws.sin_p.resize(cfg.t_ang);
    ws.cos_p.resize(cfg.t_ang);
    ws.extra_out.resize(2);
    ws.d_gap_cap.resize(ws.gap_cap.size());
    ws.d_gap_patch.resize(ws.gap_patch.size());
    ws.d_concat.resize(ws.concat.size());
    ws.d_fused.resize(ws.fused.size());
    ws.d_row.resize(cfg.t_pos);
    ws.d_col.resize(cfg.t_pos);
    ws.d_sin.resize(cfg.t_ang);
    ws.d_cos.resize(cfg.t_ang);
    ws.d_extra.resize(2);
    return ws;
}

// Output rows valid for kernel row k at the given stride.
void out_range(int k, int stride, int in, int out, int& lo, int& hi) {
    lo = 0;
    while (lo < out && lo * stride + k - 1 < 0) ++lo;
    hi = out - 1;
    while (hi >= 0 && hi * stride + k - 1 > in - 1) --hi;
}

void conv_forward(const double* in, const ConvPlan& cp, const double* w, const double* b,
                  double* out) {
    const std::size_t plane = std::size_t(cp.h_out) * cp.w_out;
    for (int co = 0; co < cp.c_out; ++co) {
        std::fill(out + co * plane, out + (co + 1) * plane, b[co]);
    }
    for (int co = 0; co < cp.c_out; ++co) {
        for (int ci = 0; ci < cp.c_in; ++ci) {
            for (int ky = 0; ky < 3; ++ky) {
                int oy_lo, oy_hi;
                out_range(ky, cp.stride, cp.h_in, cp.h_out, oy_lo, oy_hi);
                for (int kx = 0; kx < 3; ++kx) {
                    int ox_lo, ox_hi;
                    out_range(kx, cp.stride, cp.w_in, cp.w_out, ox_lo, ox_hi);
                    const double wv = w[((std::size_t(co) * cp.c_in + ci) * 3 + ky) * 3 + kx];
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const int iy = oy * cp.stride + ky - 1;
                        const double* irow = in + (std::size_t(ci) * cp.h_in + iy) * cp.w_in;
                        double* orow = out + (std::size_t(co) * cp.h_out + oy) * cp.w_out;
                        if (cp.stride == 1) {
                            const double* ir = irow + (kx - 1);
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                orow[ox] += wv * ir[ox];
                            }
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                orow[ox] += wv * irow[ox * cp.stride + kx - 1];
                            }
                        }
                    }
                }
            }
        }
    }
    for (std::size_t i = 0; i < std::size_t(cp.c_out) * plane; ++i) {
        out[i] = std::max(out[i], 0.0);
    }
}

// d_out must already be masked by the activation.  d_in, when given, must be
// zeroed by the caller.
void conv_backward(const double* in, const ConvPlan& cp, const double* w,
                   const double* d_out, double* d_w, double* d_b, double* d_in) {
    const std::size_t plane = std::size_t(cp.h_out) * cp.w_out;
    for (int co = 0; co < cp.c_out; ++co) {
        double acc = 0.0;
        const double* dplane = d_out + co * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            acc += dplane[i];
        }
        d_b[co] += acc;
    }
    for (int co = 0; co < cp.c_out; ++co) {
        for (int ci = 0; ci < cp.c_in; ++ci) {
            for (int ky = 0; ky < 3; ++ky) {
                int oy_lo, oy_hi;
                out_range(ky, cp.stride, cp.h_in, cp.h_out, oy_lo, oy_hi);
                for (int kx = 0; kx < 3; ++kx) {
                    int ox_lo, ox_hi;
                    out_range(kx, cp.stride, cp.w_in, cp.w_out, ox_lo, ox_hi);
                    const std::size_t widx =
                        ((std::size_t(co) * cp.c_in + ci) * 3 + ky) * 3 + kx;
                    const double wv = w[widx];
                    double wacc = 0.0;
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const int iy = oy * cp.stride + ky - 1;
                        const double* irow = in + (std::size_t(ci) * cp.h_in + iy) * cp.w_in;
                        const double* drow =
                            d_out + (std::size_t(co) * cp.h_out + oy) * cp.w_out;
                        if (d_in != nullptr) {
                            double* dirow =
                                d_in + (std::size_t(ci) * cp.h_in + iy) * cp.w_in;
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                const int ix = ox * cp.stride + kx - 1;
                                wacc += irow[ix] * drow[ox];
                                dirow[ix] += wv * drow[ox];
                            }
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                wacc += irow[ox * cp.stride + kx - 1] * drow[ox];
                            }
                        }
                    }
                    d_w[widx] += wacc;
                }
            }
        }
    }
}

void fc_forward(const double* in, const FcPlan& fp, const double* w, const double* b,
                double* out) {
    for (int o = 0; o < fp.out; ++o) {
        const double* row = w + std::size_t(o) * fp.in;
        double acc = b[o];
        for (int i = 0; i < fp.in; ++i) {
            acc += row[i] * in[i];
        }
        out[o] = acc;
    }
}

void fc_backward(const double* in, const FcPlan& fp, const double* w, const double* d_out,
                 double* d_w, double* d_b, double* d_in) {
    for (int o = 0; o < fp.out; ++o) {
        const double g = d_out[o];
        d_b[o] += g;
        double* wrow = d_w + std::size_t(o) * fp.in;
        const double* row = w + std::size_t(o) * fp.in;
        for (int i = 0; i < fp.in; ++i) {
            wrow[i] += g * in[i];
            d_in[i] += row[i] * g;
        }
    }
}

void relu_mask(double* d, const double* act, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (act[i] <= 0.0) {
            d[i] = 0.0;
        }
    }
}

void softmax(const double* logits, double* probs, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) {
        mx = std::max(mx, logits[i]);
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (int i = 0; i < n; ++i) {
        probs[i] /= sum;
    }
}

void copy_image(const GrayImage& img, int want, const char* name,
                std::vector<double>& buf) {
    if (img.width != want || img.height != want) {
        throw std::invalid_argument(std::string(name) + " image must be " +
                                    std::to_string(want) + "x" + std::to_string(want));
    }
    std::copy(img.pixels.begin(), img.pixels.end(), buf.begin());
}

void gap_forward(const double* act, int c, std::size_t plane, double* out) {
    for (int ch = 0; ch < c; ++ch) {
        const double* p = act + ch * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            acc += p[i];
        }
        out[ch] = acc / double(plane);
    }
}

void forward_ws(const EstimatorModel& model, const NetPlan& plan, Ws& ws,
                const GrayImage& cap, const GrayImage& patch) {
    const NetConfig& cfg = model.config;
    const double* P = model.params.data();
    copy_image(cap, cfg.cap_size, "capacitive", ws.cap_a[0]);
    copy_image(patch, cfg.patch_size, "patch", ws.patch_a[0]);
    for (std::size_t i = 0; i < plan.cap.size(); ++i) {
        conv_forward(ws.cap_a[i].data(), plan.cap[i], P + plan.cap[i].w_off,
                     P + plan.cap[i].b_off, ws.cap_a[i + 1].data());
    }
    for (std::size_t i = 0; i < plan.patch.size(); ++i) {
        conv_forward(ws.patch_a[i].data(), plan.patch[i], P + plan.patch[i].w_off,
                     P + plan.patch[i].b_off, ws.patch_a[i + 1].data());
    }
    const ConvPlan& lc = plan.cap.back();
    const ConvPlan& lp = plan.patch.back();
    gap_forward(ws.cap_a.back().data(), lc.c_out, std::size_t(lc.h_out) * lc.w_out,
                ws.gap_cap.data());
    gap_forward(ws.patch_a.back().data(), lp.c_out, std::size_t(lp.h_out) * lp.w_out,
                ws.gap_patch.data());
    std::copy(ws.gap_cap.begin(), ws.gap_cap.end(), ws.concat.begin());
    std::copy(ws.gap_patch.begin(), ws.gap_patch.end(),
              ws.concat.begin() + ws.gap_cap.size());
    fc_forward(ws.concat.data(), plan.fused, P + plan.fused.w_off, P + plan.fused.b_off,
               ws.fused.data());
    for (double& v : ws.fused) {
        v = std::max(v, 0.0);
    }
    fc_forward(ws.fused.data(), plan.head_row, P + plan.head_row.w_off,
               P + plan.head_row.b_off, ws.row_logit.data());
    fc_forward(ws.fused.data(), plan.head_col, P + plan.head_col.w_off,
               P + plan.head_col.b_off, ws.col_logit.data());
    softmax(ws.row_logit.data(), ws.row_p.data(), cfg.t_pos);
    softmax(ws.col_logit.data(), ws.col_p.data(), cfg.t_pos);
    switch (cfg.angle_head) {
        case AngleHead::soft_bin:
            fc_forward(ws.fused.data(), plan.head_sin, P + plan.head_sin.w_off,
                       P + plan.head_sin.b_off, ws.sin_logit.data());
            fc_forward(ws.fused.data(), plan.head_cos, P + plan.head_cos.w_off,
                       P + plan.head_cos.b_off, ws.cos_logit.data());
            softmax(ws.sin_logit.data(), ws.sin_p.data(), cfg.t_ang);
            softmax(ws.cos_logit.data(), ws.cos_p.data(), cfg.t_ang);
            break;
        case AngleHead::trig:
            fc_forward(ws.fused.data(), plan.head_trig, P + plan.head_trig.w_off,
                       P + plan.head_trig.b_off, ws.extra_out.data());
            break;
        case AngleHead::direct:
            fc_forward(ws.fused.data(), plan.head_dir, P + plan.head_dir.w_off,
                       P + plan.head_dir.b_off, ws.extra_out.data());
            break;
    }
}

HeadOutput output_from_ws(const Ws& ws, const NetConfig& cfg) {
    HeadOutput out;
    out.mode = cfg.angle_head;
    out.p_row = SoftLabel{ws.row_p, LabelKind::position};
    out.p_col = SoftLabel{ws.col_p, LabelKind::position};
    switch (cfg.angle_head) {
        case AngleHead::soft_bin:
            out.p_sin = SoftLabel{ws.sin_p, LabelKind::angle_sin};
            out.p_cos = SoftLabel{ws.cos_p, LabelKind::angle_cos};
            break;
        case AngleHead::trig:
            out.sin_hat = ws.extra_out[0];
            out.cos_hat = ws.extra_out[1];
            break;
        case AngleHead::direct:
            out.theta_units = ws.extra_out[0];
            break;
    }
    return out;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

std::string scan_nonfinite(const NetPlan& plan, const Ws& ws) {
    for (std::size_t i = 0; i < ws.cap_a.size(); ++i) {
        if (!all_finite(ws.cap_a[i])) {
            return i == 0 ? "cap_input" : "cap_conv" + std::to_string(i - 1);
        }
    }
    for (std::size_t i = 0; i < ws.patch_a.size(); ++i) {
        if (!all_finite(ws.patch_a[i])) {
            return i == 0 ? "patch_input" : "patch_conv" + std::to_string(i - 1);
        }
    }
    if (!all_finite(ws.fused)) return "fused";
    if (!all_finite(ws.row_p) || !all_finite(ws.col_p)) return "position heads";
    if (!all_finite(ws.sin_p) || !all_finite(ws.cos_p) || !all_finite(ws.extra_out)) {
        return "angle head";
    }
    (void)plan;
    return "loss";
}

// Exact gradient of -sum t*log(max(p, floor)) w.r.t. the logits.  Bins pinned
// at the floor contribute nothing, so the usual p - t picks up a mask term.
void ce_logit_grad(const double* p, const std::vector<double>& t, int n, double* d) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        if (p[i] > kProbFloor) {
            s += t[i];
        }
    }
    for (int i = 0; i < n; ++i) {
        d[i] = p[i] * s - (p[i] > kProbFloor ? t[i] : 0.0);
    }
}

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void sample_backward(const EstimatorModel& model, const NetPlan& plan, Ws& ws,
                     const EncodedLabels& labels, double* grad) {
    const NetConfig& cfg = model.config;
    const double* P = model.params.data();
    ce_logit_grad(ws.row_p.data(), labels.row.probs, cfg.t_pos, ws.d_row.data());
    ce_logit_grad(ws.col_p.data(), labels.col.probs, cfg.t_pos, ws.d_col.data());
    std::fill(ws.d_fused.begin(), ws.d_fused.end(), 0.0);
    fc_backward(ws.fused.data(), plan.head_row, P + plan.head_row.w_off, ws.d_row.data(),
                grad + plan.head_row.w_off, grad + plan.head_row.b_off, ws.d_fused.data());
    fc_backward(ws.fused.data(), plan.head_col, P + plan.head_col.w_off, ws.d_col.data(),
                grad + plan.head_col.w_off, grad + plan.head_col.b_off, ws.d_fused.data());
    switch (cfg.angle_head) {
        case AngleHead::soft_bin:
            ce_logit_grad(ws.sin_p.data(), labels.sin_lab.probs, cfg.t_ang,
                          ws.d_sin.data());
            ce_logit_grad(ws.cos_p.data(), labels.cos_lab.probs, cfg.t_ang,
                          ws.d_cos.data());
            fc_backward(ws.fused.data(), plan.head_sin, P + plan.head_sin.w_off,
                        ws.d_sin.data(), grad + plan.head_sin.w_off,
                        grad + plan.head_sin.b_off, ws.d_fused.data());
            fc_backward(ws.fused.data(), plan.head_cos, P + plan.head_cos.w_off,
                        ws.d_cos.data(), grad + plan.head_cos.w_off,
                        grad + plan.head_cos.b_off, ws.d_fused.data());
            break;
        case AngleHead::trig: {
            const double th = deg_to_rad(labels.theta_deg);
            ws.d_extra[0] = sgn(ws.extra_out[0] - std::sin(th));
            ws.d_extra[1] = sgn(ws.extra_out[1] - std::cos(th));
            fc_backward(ws.fused.data(), plan.head_trig, P + plan.head_trig.w_off,
                        ws.d_extra.data(), grad + plan.head_trig.w_off,
                        grad + plan.head_trig.b_off, ws.d_fused.data());
            break;
        }
        case AngleHead::direct: {
            ws.d_extra[0] = sgn(ws.extra_out[0] - labels.theta_deg / 180.0);
            fc_backward(ws.fused.data(), plan.head_dir, P + plan.head_dir.w_off,
                        ws.d_extra.data(), grad + plan.head_dir.w_off,
                        grad + plan.head_dir.b_off, ws.d_fused.data());
            break;
        }
    }
    relu_mask(ws.d_fused.data(), ws.fused.data(), ws.fused.size());
    std::fill(ws.d_concat.begin(), ws.d_concat.end(), 0.0);
    fc_backward(ws.concat.data(), plan.fused, P + plan.fused.w_off, ws.d_fused.data(),
                grad + plan.fused.w_off, grad + plan.fused.b_off, ws.d_concat.data());
    std::copy(ws.d_concat.begin(), ws.d_concat.begin() + ws.gap_cap.size(),
              ws.d_gap_cap.begin());
    std::copy(ws.d_concat.begin() + ws.gap_cap.size(), ws.d_concat.end(),
              ws.d_gap_patch.begin());

    auto branch_backward = [&](const std::vector<ConvPlan>& convs,
                               std::vector<std::vector<double>>& acts,
                               std::vector<std::vector<double>>& dacts,
                               const std::vector<double>& d_gap) {
        const ConvPlan& last = convs.back();
        const std::size_t plane = std::size_t(last.h_out) * last.w_out;
        std::vector<double>& dtop = dacts[convs.size()];
        for (int c = 0; c < last.c_out; ++c) {
            const double g = d_gap[c] / double(plane);
            std::fill(dtop.begin() + c * plane, dtop.begin() + (c + 1) * plane, g);
        }
        for (std::size_t i = convs.size(); i-- > 0;) {
            relu_mask(dacts[i + 1].data(), acts[i + 1].data(), acts[i + 1].size());
            double* d_in = nullptr;
            if (i > 0) {
                std::fill(dacts[i].begin(), dacts[i].end(), 0.0);
                d_in = dacts[i].data();
            }
            conv_backward(acts[i].data(), convs[i], P + convs[i].w_off,
                          dacts[i + 1].data(), grad + convs[i].w_off,
                          grad + convs[i].b_off, d_in);
        }
    };
    branch_backward(plan.cap, ws.cap_a, ws.d_cap_a, ws.d_gap_cap);
    branch_backward(plan.patch, ws.patch_a, ws.d_patch_a, ws.d_gap_patch);
}

double accum_batch(const EstimatorModel& model, const NetPlan& plan, Ws& ws,
                   const std::vector<TrainSample>& batch, std::size_t lo, std::size_t hi,
                   double* grad) {
    double total = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        const TrainSample& s = batch[i];
        forward_ws(model, plan, ws, *s.cap, *s.patch);
        const double l = loss(output_from_ws(ws, model.config), s.labels);
        if (!std::isfinite(l)) {
            throw numeric_error("non-finite values in layer " + scan_nonfinite(plan, ws));
        }
        total += l;
        if (grad != nullptr) {
            sample_backward(model, plan, ws, s.labels, grad);
        }
    }
    return total / double(hi - lo);
}

} // namespace

std::string angle_head_name(AngleHead mode) {
    switch (mode) {
        case AngleHead::soft_bin: return "softbin";
        case AngleHead::trig: return "trig";
        case AngleHead::direct: return "direct";
    }
    throw std::invalid_argument("unknown angle head");
}

AngleHead angle_head_from_name(const std::string& name) {
    if (name == "softbin") return AngleHead::soft_bin;
    if (name == "trig") return AngleHead::trig;
    if (name == "direct") return AngleHead::direct;
    throw std::invalid_argument("unknown angle head '" + name +
                                "' (expected softbin, trig, or direct)");
}

void validate_net_config(const NetConfig& cfg) {
    if (cfg.cap_channels.empty() || cfg.patch_channels.empty()) {
        throw std::invalid_argument("channel lists must be non-empty");
    }
    for (int c : cfg.cap_channels) {
        if (c < 1) throw std::invalid_argument("cap channel counts must be >= 1");
    }
    for (int c : cfg.patch_channels) {
        if (c < 1) throw std::invalid_argument("patch channel counts must be >= 1");
    }
    if (cfg.fused_dim < 1 || cfg.t_pos < 2 || cfg.t_ang < 2) {
        throw std::invalid_argument("fused_dim must be >= 1 and bin counts >= 2");
    }
    if (!(cfg.pos_sigma > 0.0) || !(cfg.ang_sigma > 0.0)) {
        throw std::invalid_argument("label sigmas must be positive");
    }
    if (!(cfg.pos_range > 0.0) || cfg.pos_scale == 0.0) {
        throw std::invalid_argument("position affine is invalid");
    }
    if (cfg.cap_size < 1 || cfg.patch_size < 2) {
        throw std::invalid_argument("input sizes too small");
    }
}

NetConfig tiny_net_config(int cap_size, int patch_size) {
    NetConfig cfg;
    cfg.cap_channels = {2};
    cfg.patch_channels = {2, 3};
    cfg.fused_dim = 8;
    cfg.t_pos = 8;
    cfg.t_ang = 12;
    cfg.pos_sigma = 1.0;
    cfg.ang_sigma = 1.5;
    cfg.cap_size = cap_size;
    cfg.patch_size = patch_size;
    return cfg;
}

std::vector<LayerInfo> layer_map(const NetConfig& cfg) { return build_plan(cfg).layers; }

std::size_t param_count(const NetConfig& cfg) { return build_plan(cfg).total; }

EstimatorModel init_model(const NetConfig& cfg) {
    const NetPlan plan = build_plan(cfg);
    EstimatorModel model;
    model.config = cfg;
    model.params.assign(plan.total, 0.0);
    Rng rng(cfg.init_seed);
    auto fill_uniform = [&](std::size_t off, std::size_t count, int fan_in) {
        const double bound = std::sqrt(6.0 / double(fan_in));
        for (std::size_t i = 0; i < count; ++i) {
            model.params[off + i] = rng.uniform(-bound, bound);
        }
    };
    for (const ConvPlan& cp : plan.cap) {
        fill_uniform(cp.w_off, std::size_t(cp.c_out) * cp.c_in * 9, cp.c_in * 9);
    }
    for (const ConvPlan& cp : plan.patch) {
        fill_uniform(cp.w_off, std::size_t(cp.c_out) * cp.c_in * 9, cp.c_in * 9);
    }
    auto fill_fc = [&](const FcPlan& fp) {
        if (fp.out > 0) {
            fill_uniform(fp.w_off, std::size_t(fp.out) * fp.in, fp.in);
        }
    };
    fill_fc(plan.fused);
    fill_fc(plan.head_row);
    fill_fc(plan.head_col);
    fill_fc(plan.head_sin);
    fill_fc(plan.head_cos);
    fill_fc(plan.head_trig);
    fill_fc(plan.head_dir);
    return model;
}

LabelCodec make_codec(const NetConfig& cfg) {
    validate_net_config(cfg);
    LabelCodec codec;
    codec.pos_table = make_position_table(cfg.t_pos, cfg.pos_range, cfg.pos_sigma);
    codec.ang_table = make_angle_table(cfg.t_ang, cfg.ang_sigma);
    return codec;
}

EncodedLabels encode_labels(const Pose2D& pose, const NetConfig& cfg,
                            const LabelCodec& codec) {
    EncodedLabels lab;
    lab.row = encode_position(pose.r * cfg.pos_scale + cfg.pos_offset, codec.pos_table);
    lab.col = encode_position(pose.c * cfg.pos_scale + cfg.pos_offset, codec.pos_table);
    lab.theta_deg = normalize_angle(pose.theta);
    if (cfg.angle_head == AngleHead::soft_bin) {
        auto [ps, pc] = encode_angle(lab.theta_deg, codec.ang_table);
        lab.sin_lab = std::move(ps);
        lab.cos_lab = std::move(pc);
    }
    return lab;
}

HeadOutput forward(const EstimatorModel& model, const GrayImage& cap,
                   const GrayImage& patch) {
    const NetPlan plan = build_plan(model.config);
    if (model.params.size() != plan.total) {
        throw std::invalid_argument("parameter vector does not match config");
    }
    Ws ws = make_ws(plan, model.config);
    forward_ws(model, plan, ws, cap, patch);
    return output_from_ws(ws, model.config);
}

Pose2D decode_heads(const HeadOutput& out, const NetConfig& cfg, const LabelCodec& codec) {
    Pose2D pose;
    pose.r = (decode_position(out.p_row, codec.pos_table) - cfg.pos_offset) / cfg.pos_scale;
    pose.c = (decode_position(out.p_col, codec.pos_table) - cfg.pos_offset) / cfg.pos_scale;
    switch (out.mode) {
        case AngleHead::soft_bin:
            pose.theta = decode_angle(out.p_sin, out.p_cos, codec.ang_table);
            break;
        case AngleHead::trig:
            pose.theta = trig_regression_decode(out.sin_hat, out.cos_hat);
            break;
        case AngleHead::direct:
            pose.theta = normalize_angle(out.theta_units * 180.0);
            break;
    }
    return pose;
}

Pose2D predict_pose2d(const EstimatorModel& model, const GrayImage& cap,
                      const GrayImage& patch) {
    const LabelCodec codec = make_codec(model.config);
    return decode_heads(forward(model, cap, patch), model.config, codec);
}

double loss(const HeadOutput& out, const EncodedLabels& labels) {
    double total = ce_loss(out.p_row, labels.row) + ce_loss(out.p_col, labels.col);
    switch (out.mode) {
        case AngleHead::soft_bin:
            total += ce_loss(out.p_sin, labels.sin_lab) + ce_loss(out.p_cos, labels.cos_lab);
            break;
        case AngleHead::trig:
            total += trig_regression_loss(out.sin_hat, out.cos_hat, labels.theta_deg);
            break;
        case AngleHead::direct:
            total += std::fabs(out.theta_units - labels.theta_deg / 180.0);
            break;
    }
    return total;
}

double batch_loss(const EstimatorModel& model, const std::vector<TrainSample>& batch) {
    if (batch.empty()) {
        throw std::invalid_argument("empty batch");
    }
    const NetPlan plan = build_plan(model.config);
    Ws ws = make_ws(plan, model.config);
    return accum_batch(model, plan, ws, batch, 0, batch.size(), nullptr);
}

std::vector<double> gradients(const EstimatorModel& model,
                              const std::vector<TrainSample>& batch) {
    if (batch.empty()) {
        throw std::invalid_argument("empty batch");
    }
    const NetPlan plan = build_plan(model.config);
    if (model.params.size() != plan.total) {
        throw std::invalid_argument("parameter vector does not match config");
    }
    Ws ws = make_ws(plan, model.config);
    std::vector<double> grad(plan.total, 0.0);
    accum_batch(model, plan, ws, batch, 0, batch.size(), grad.data());
    const double inv = 1.0 / double(batch.size());
    for (double& g : grad) {
        g *= inv;
    }
    return grad;
}

double grad_check(const EstimatorModel& model, const std::vector<TrainSample>& batch,
                  double eps) {
    if (!(eps > 0.0)) {
        throw std::invalid_argument("eps must be positive");
    }
    const std::vector<double> g = gradients(model, batch);
    EstimatorModel probe = model;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.params.size(); ++i) {
        if (std::fabs(g[i]) <= 1e-8) {
            continue;
        }
        const double saved = probe.params[i];
        probe.params[i] = saved + eps;
        const double lp = batch_loss(probe, batch);
        probe.params[i] = saved - eps;
        const double lm = batch_loss(probe, batch);
        probe.params[i] = saved;
        const double fd = (lp - lm) / (2.0 * eps);
        const double rel = std::fabs(fd - g[i]) / std::max(std::fabs(fd), std::fabs(g[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

TrainResult train(const EstimatorModel& init, const Dataset& data, const TrainConfig& cfg) {
    if (!(cfg.lr_start >= cfg.lr_end) || cfg.lr_end < 0.0) {
        throw std::invalid_argument("learning rates must satisfy lr_start >= lr_end >= 0");
    }
    if (cfg.batch_size < 1 || cfg.epochs < 0) {
        throw std::invalid_argument("batch_size must be >= 1 and epochs >= 0");
    }
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) ||
        !(cfg.adam_eps > 0.0) || cfg.weight_decay < 0.0) {
        throw std::invalid_argument("optimizer constants out of range");
    }
    const NetPlan plan = build_plan(init.config);
    if (init.params.size() != plan.total) {
        throw std::invalid_argument("parameter vector does not match config");
    }
    const LabelCodec codec = make_codec(init.config);

    std::vector<TrainSample> train_set, val_set;
    {
        std::vector<int> train_fingers, val_fingers;
        for (const Sample& s : data.samples) {
            TrainSample ts;
            ts.cap = &s.cap;
            ts.patch = &s.patch;
            ts.labels = encode_labels(s.pose2d, init.config, codec);
            if (s.split == "train") {
                train_set.push_back(std::move(ts));
                train_fingers.push_back(s.finger_id);
            } else {
                val_set.push_back(std::move(ts));
                val_fingers.push_back(s.finger_id);
            }
        }
        for (int f : train_fingers) {
            if (std::find(val_fingers.begin(), val_fingers.end(), f) != val_fingers.end()) {
                throw std::invalid_argument("train and validation share finger " +
                                            std::to_string(f));
            }
        }
    }
    if (train_set.empty()) {
        throw std::invalid_argument("no training samples in dataset");
    }
    // Ground-truth poses for validation metrics, in dataset order.
    std::vector<Pose2D> val_gt;
    for (const Sample& s : data.samples) {
        if (s.split != "train") {
            val_gt.push_back(s.pose2d);
        }
    }

    TrainResult result;
    result.model = init;
    Ws ws = make_ws(plan, init.config);
    std::vector<double> grad(plan.total, 0.0);
    std::vector<double> m(plan.total, 0.0), v(plan.total, 0.0);
    const std::size_t n = train_set.size();
    const std::size_t spe = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = spe * std::size_t(cfg.epochs);
    std::size_t step = 0;
    double pow_b1 = 1.0, pow_b2 = 1.0;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::substream(cfg.seed, 0x5EED, std::uint64_t(epoch));
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = std::size_t(shuffle_rng.uniform_int(0, int(i)));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
            const std::size_t hi = std::min(n, lo + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            std::vector<TrainSample> batch;
            batch.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                batch.push_back(train_set[order[i]]);
            }
            double bl;
            try {
                bl = accum_batch(result.model, plan, ws, batch, 0, batch.size(),
                                 grad.data());
            } catch (const numeric_error& e) {
                throw numeric_error("epoch " + std::to_string(epoch + 1) + " batch " +
                                    std::to_string(batches + 1) + ": " + e.what());
            }
            const double inv = 1.0 / double(hi - lo);
            double lr = cfg.lr_start;
            if (total_steps >= 2) {
                const double frac = double(step) / double(total_steps - 1);
                lr = cfg.lr_end +
                     0.5 * (cfg.lr_start - cfg.lr_end) * (1.0 + std::cos(kPi * frac));
            }
            pow_b1 *= cfg.beta1;
            pow_b2 *= cfg.beta2;
            double* P = result.model.params.data();
            for (std::size_t i = 0; i < plan.total; ++i) {
                const double gi = grad[i] * inv;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                const double mh = m[i] / (1.0 - pow_b1);
                const double vh = v[i] / (1.0 - pow_b2);
                P[i] -= lr * (mh / (std::sqrt(vh) + cfg.adam_eps) +
                              cfg.weight_decay * P[i]);
            }
            ++step;
            epoch_loss += bl;
            ++batches;
        }

        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.train_loss = epoch_loss / double(batches);
        if (val_set.empty()) {
            stats.val_loss = stats.val_yaw_mae = stats.val_pos_mae =
                std::numeric_limits<double>::quiet_NaN();
        } else {
            double vl = 0.0, yaw_err = 0.0, pos_err = 0.0;
            for (std::size_t i = 0; i < val_set.size(); ++i) {
                forward_ws(result.model, plan, ws, *val_set[i].cap, *val_set[i].patch);
                const HeadOutput out = output_from_ws(ws, init.config);
                vl += loss(out, val_set[i].labels);
                const Pose2D pred = decode_heads(out, init.config, codec);
                yaw_err += std::fabs(circular_diff(pred.theta, val_gt[i].theta));
                pos_err += std::hypot(pred.c - val_gt[i].c, pred.r - val_gt[i].r);
            }
            const double nv = double(val_set.size());
            stats.val_loss = vl / nv;
            stats.val_yaw_mae = yaw_err / nv;
            stats.val_pos_mae = pos_err / nv;
        }
        result.history.push_back(stats);
    }
    return result;
}

namespace {

nlohmann::ordered_json config_to_json(const NetConfig& cfg) {
    nlohmann::ordered_json j;
    j["cap_channels"] = cfg.cap_channels;
    j["patch_channels"] = cfg.patch_channels;
    j["fused_dim"] = cfg.fused_dim;
    j["t_pos"] = cfg.t_pos;
    j["t_ang"] = cfg.t_ang;
    j["pos_sigma"] = cfg.pos_sigma;
    j["ang_sigma"] = cfg.ang_sigma;
    j["pos_range"] = cfg.pos_range;
    j["pos_offset"] = cfg.pos_offset;
    j["pos_scale"] = cfg.pos_scale;
    j["cap_size"] = cfg.cap_size;
    j["patch_size"] = cfg.patch_size;
    j["angle_head"] = angle_head_name(cfg.angle_head);
    j["init_seed"] = cfg.init_seed;
    return j;
}

NetConfig config_from_json(const nlohmann::json& j) {
    NetConfig cfg;
    cfg.cap_channels = j.at("cap_channels").get<std::vector<int>>();
    cfg.patch_channels = j.at("patch_channels").get<std::vector<int>>();
    cfg.fused_dim = j.at("fused_dim").get<int>();
    cfg.t_pos = j.at("t_pos").get<int>();
    cfg.t_ang = j.at("t_ang").get<int>();
    cfg.pos_sigma = j.at("pos_sigma").get<double>();
    cfg.ang_sigma = j.at("ang_sigma").get<double>();
    cfg.pos_range = j.at("pos_range").get<double>();
    cfg.pos_offset = j.at("pos_offset").get<double>();
    cfg.pos_scale = j.at("pos_scale").get<double>();
    cfg.cap_size = j.at("cap_size").get<int>();
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.angle_head = angle_head_from_name(j.at("angle_head").get<std::string>());
    cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
    return cfg;
}

} // namespace

void save_checkpoint(const std::string& path, const EstimatorModel& model,
                     std::uint64_t seed, int epoch) {
    const NetPlan plan = build_plan(model.config);
    if (model.params.size() != plan.total) {
        throw std::invalid_argument("parameter vector does not match config");
    }
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["seed"] = seed;
    j["epoch"] = epoch;
    j["param_count"] = plan.total;
    j["config"] = config_to_json(model.config);
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const LayerInfo& l : plan.layers) {
        layers.push_back({{"name", l.name}, {"offset", l.offset}, {"count", l.count}});
    }
    j["layers"] = layers;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot write checkpoint: " + path);
    }
    out << j.dump() << "\n";
    // Raw host-endian doubles; this format is little-endian on every platform
    // the artifact targets.
    out.write(reinterpret_cast<const char*>(model.params.data()),
              std::streamsize(model.params.size() * sizeof(double)));
    if (!out) {
        throw data_error("checkpoint write failed: " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw data_error("cannot open checkpoint: " + path);
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw data_error("truncated checkpoint header in " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("bad checkpoint header in " + path + ": " + e.what());
    }
    Checkpoint ck;
    std::size_t count = 0;
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) {
            throw data_error("unsupported checkpoint format in " + path);
        }
        ck.seed = j.at("seed").get<std::uint64_t>();
        ck.epoch = j.at("epoch").get<int>();
        count = j.at("param_count").get<std::size_t>();
        ck.model.config = config_from_json(j.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw data_error("bad checkpoint header in " + path + ": " + e.what());
    }
    try {
        validate_net_config(ck.model.config);
    } catch (const std::invalid_argument& e) {
        throw data_error("bad checkpoint config in " + path + ": " + e.what());
    }
    if (count != param_count(ck.model.config)) {
        throw data_error("checkpoint parameter count does not match its config in " + path);
    }
    ck.model.params.resize(count);
    in.read(reinterpret_cast<char*>(ck.model.params.data()),
            std::streamsize(count * sizeof(double)));
    if (in.gcount() != std::streamsize(count * sizeof(double))) {
        throw data_error("truncated checkpoint data in " + path);
    }
    for (double p : ck.model.params) {
        if (!std::isfinite(p)) {
            throw data_error("non-finite parameter in " + path);
        }
    }
    return ck;
}

void save_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path);
    if (!out) {
        throw data_error("cannot write history: " + path);
    }
    out << "epoch,train_loss,val_loss,val_yaw_mae,val_pos_mae\n";
    char buf[256];
    for (const EpochStats& s : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", s.epoch,
                      s.train_loss, s.val_loss, s.val_yaw_mae, s.val_pos_mae);
        out << buf;
    }
    if (!out) {
        throw data_error("history write failed: " + path);
    }
}

} // namespace fingerpose
