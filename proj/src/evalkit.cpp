#include "fingerpose/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "fingerpose/pose.hpp"

namespace fingerpose {

namespace {

void check_bound(double bound) {
    if (bound != 45.0 && bound != 90.0 && bound != 135.0 && bound != 180.0) {
        throw std::invalid_argument("yaw regime bound must be one of 45, 90, 135, 180");
    }
}

MetricCell cell_from_signed(const std::vector<double>& errs) {
    MetricCell cell;
    if (errs.empty()) {
        return cell;
    }
    const double n = double(errs.size());
    double sum_abs = 0.0, sum_sq = 0.0, sum = 0.0;
    for (double e : errs) {
        sum_abs += std::fabs(e);
        sum_sq += e * e;
        sum += e;
    }
    const double mean = sum / n;
    double var = 0.0;
    for (double e : errs) {
        var += (e - mean) * (e - mean);
    }
    cell.present = true;
    cell.mae = sum_abs / n;
    cell.rmse = std::sqrt(sum_sq / n);
    cell.sd = std::sqrt(var / n);
    return cell;
}

} // namespace

std::vector<double> angular_errors(const std::vector<double>& pred_deg,
                                   const std::vector<double>& gt_deg) {
    if (pred_deg.size() != gt_deg.size()) {
        throw std::invalid_argument("angular_errors: length mismatch");
    }
    std::vector<double> out(pred_deg.size());
    for (std::size_t i = 0; i < pred_deg.size(); ++i) {
        out[i] = std::fabs(circular_diff(pred_deg[i], gt_deg[i]));
    }
    return out;
}

std::vector<EvalRecord> partition_by_yaw(const std::vector<EvalRecord>& records,
                                         double bound) {
    check_bound(bound);
    std::vector<EvalRecord> out;
    for (const EvalRecord& r : records) {
        if (std::fabs(normalize_angle(r.gt.yaw)) <= bound) {
            out.push_back(r);
        }
    }
    return out;
}

EvalReport make_report(const std::vector<EvalRecord>& records,
                       const std::vector<double>& regimes) {
    EvalReport report;
    for (double bound : regimes) {
        const std::vector<EvalRecord> subset = partition_by_yaw(records, bound);
        RegimeReport reg;
        reg.bound = bound;
        reg.n = subset.size();
        std::vector<double> errs(subset.size());
        for (int target = 0; target < 5; ++target) {
            for (std::size_t i = 0; i < subset.size(); ++i) {
                const PoseVector& p = subset[i].pred;
                const PoseVector& g = subset[i].gt;
                switch (target) {
                    case 0: errs[i] = p.u - g.u; break;
                    case 1: errs[i] = p.v - g.v; break;
                    case 2: errs[i] = circular_diff(p.yaw, g.yaw); break;
                    case 3: errs[i] = p.pitch - g.pitch; break;
                    default: errs[i] = p.roll - g.roll; break;
                }
            }
            reg.cells[target] = cell_from_signed(errs);
        }
        report.regimes.push_back(reg);
    }
    return report;
}

std::string report_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "regime,target,mae,rmse,sd\n";
    char buf[160];
    for (const RegimeReport& reg : report.regimes) {
        for (int t = 0; t < 5; ++t) {
            const MetricCell& c = reg.cells[t];
            if (c.present) {
                std::snprintf(buf, sizeof(buf), "%g,%s,%.17g,%.17g,%.17g\n", reg.bound,
                              kEvalTargets[t], c.mae, c.rmse, c.sd);
            } else {
                std::snprintf(buf, sizeof(buf), "%g,%s,,,\n", reg.bound, kEvalTargets[t]);
            }
            os << buf;
        }
    }
    return os.str();
}

std::string report_table(const EvalReport& report) {
    std::ostringstream os;
    char buf[160];
    for (const RegimeReport& reg : report.regimes) {
        std::snprintf(buf, sizeof(buf), "regime |yaw| <= %g  (n=%zu)\n", reg.bound,
                      reg.n);
        os << buf;
        std::snprintf(buf, sizeof(buf), "%-6s %9s %9s %9s %9s %9s\n", "metric", "u", "v",
                      "yaw", "pitch", "roll");
        os << buf;
        const char* metric_names[3] = {"mae", "rmse", "sd"};
        for (int m = 0; m < 3; ++m) {
            std::string line(metric_names[m]);
            line.resize(6, ' ');
            for (int t = 0; t < 5; ++t) {
                const MetricCell& c = reg.cells[t];
                char num[32];
                if (!c.present) {
                    std::snprintf(num, sizeof(num), "%9s", "-");
                } else {
                    const double v = m == 0 ? c.mae : (m == 1 ? c.rmse : c.sd);
                    std::snprintf(num, sizeof(num), "%9.4f", v);
                }
                line += " ";
                line += num;
            }
            os << line << "\n";
        }
        os << "\n";
    }
    return os.str();
}

} // namespace fingerpose
