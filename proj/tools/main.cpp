#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fingerpose/errors.hpp"
#include "fingerpose/estimator.hpp"
#include "fingerpose/evalkit.hpp"
#include "fingerpose/image.hpp"
#include "fingerpose/mapping.hpp"
#include "fingerpose/parallel.hpp"
#include "fingerpose/pose.hpp"
#include "fingerpose/rng.hpp"
#include "fingerpose/simdata.hpp"

namespace fs = std::filesystem;
using namespace fingerpose;

namespace {

int thread_count_from_env() {
    const char* env = std::getenv("FINGERPOSE_THREADS");
    if (env == nullptr || *env == '\0') {
        return 1;
    }
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 256) {
        throw std::invalid_argument("FINGERPOSE_THREADS must be an integer in [1,256]");
    }
    return int(v);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw data_error("cannot write " + path);
    }
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
    std::string out;
    SynthConfig cfg;
};

int cmd_simulate(const SimulateOpts& o) {
    validate_config(o.cfg);
    const Dataset ds = synth_dataset(o.cfg, thread_count_from_env());
    write_dataset(ds, o.out);
    save_mapping((fs::path(o.out) / "gt_mapping.json").string(), o.cfg.gt_mapping);
    std::size_t n_train = 0;
    for (const Sample& s : ds.samples) {
        n_train += s.split == "train";
    }
    std::cout << "wrote " << ds.samples.size() << " samples (" << n_train << " train, "
              << ds.samples.size() - n_train << " test) to " << o.out << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainOpts {
    std::string data, out;
    TrainConfig tcfg;
    std::vector<int> cap_channels{8, 16};
    std::vector<int> patch_channels{8, 16, 32, 64};
    int fused_dim = 128, t_pos = 64, t_ang = 120;
    double pos_sigma = 1.0, ang_sigma = 2.5;
    double pos_range = 512.0, pos_offset = 196.0, pos_scale = 1.0;
    std::string angle_head = "softbin";
    std::uint64_t init_seed = 1;
    int limit_per_finger = 0;
    bool grad_check_mode = false;
};

Dataset limited(Dataset ds, int limit) {
    if (limit <= 0) {
        return ds;
    }
    std::map<std::pair<int, std::string>, int> seen;
    Dataset out;
    for (Sample& s : ds.samples) {
        if (seen[{s.finger_id, s.split}]++ < limit) {
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

NetConfig net_config_from(const TrainOpts& o, const Dataset& ds) {
    NetConfig cfg;
    cfg.cap_channels = o.cap_channels;
    cfg.patch_channels = o.patch_channels;
    cfg.fused_dim = o.fused_dim;
    cfg.t_pos = o.t_pos;
    cfg.t_ang = o.t_ang;
    cfg.pos_sigma = o.pos_sigma;
    cfg.ang_sigma = o.ang_sigma;
    cfg.pos_range = o.pos_range;
    cfg.pos_offset = o.pos_offset;
    cfg.pos_scale = o.pos_scale;
    cfg.angle_head = angle_head_from_name(o.angle_head);
    cfg.init_seed = o.init_seed;
    cfg.cap_size = ds.samples.front().cap.width;
    cfg.patch_size = ds.samples.front().patch.width;
    return cfg;
}

// Freshly initialized biases are exactly zero, which parks every relu cell
// with an all-zero receptive field exactly on its kink; central differences
// then see a one-sided slope there.  The check must run at a generic point.
void jitter_biases(EstimatorModel& model, Rng& rng) {
    for (const LayerInfo& li : layer_map(model.config)) {
        if (li.name.size() > 2 && li.name.compare(li.name.size() - 2, 2, ".b") == 0) {
            for (std::size_t i = 0; i < li.count; ++i) {
                model.params[li.offset + i] = rng.uniform(-0.05, 0.05);
            }
        }
    }
}

int run_train_grad_check(const NetConfig& base, const Dataset& ds) {
    NetConfig cfg = base;
    cfg.cap_channels = {2};
    cfg.patch_channels = {2, 3};
    cfg.fused_dim = 8;
    cfg.t_pos = 8;
    cfg.t_ang = 12;
    cfg.pos_sigma = 1.0;
    cfg.ang_sigma = 1.5;
    const LabelCodec codec = make_codec(cfg);
    std::vector<TrainSample> batch;
    for (std::size_t i = 0; i < ds.samples.size() && i < 2; ++i) {
        const Sample& s = ds.samples[i];
        batch.push_back({&s.cap, &s.patch, encode_labels(s.pose2d, cfg, codec)});
    }
    EstimatorModel model = init_model(cfg);
    Rng jrng = Rng::substream(cfg.init_seed, 0xB1A5);
    jitter_biases(model, jrng);
    const double worst = grad_check(model, batch, 1e-5);
    std::printf("max relative error: %.6g\n", worst);
    if (!(worst < 1e-4)) {
        throw numeric_error("gradient check failed: max relative error " + fmt17(worst));
    }
    return 0;
}

int cmd_train(const TrainOpts& o) {
    Dataset ds = limited(load_dataset(o.data), o.limit_per_finger);
    if (ds.samples.empty()) {
        throw data_error("dataset is empty: " + o.data);
    }
    const NetConfig ncfg = net_config_from(o, ds);
    if (o.grad_check_mode) {
        return run_train_grad_check(ncfg, ds);
    }
    if (o.out.empty()) {
        throw std::invalid_argument("--out is required when training");
    }
    const TrainResult res = train(init_model(ncfg), ds, o.tcfg);
    fs::create_directories(o.out);
    save_checkpoint((fs::path(o.out) / "checkpoint.bin").string(), res.model, o.tcfg.seed,
                    o.tcfg.epochs);
    save_history_csv((fs::path(o.out) / "history.csv").string(), res.history);
    if (!res.history.empty()) {
        const EpochStats& s = res.history.back();
        if (!std::isfinite(s.train_loss)) {
            throw numeric_error("final training loss is not finite");
        }
        std::printf("epoch %d  train_loss %.6g  val_loss %.6g  val_yaw_mae %.6g  "
                    "val_pos_mae %.6g\n",
                    s.epoch, s.train_loss, s.val_loss, s.val_yaw_mae, s.val_pos_mae);
    }
    std::cout << "wrote checkpoint and history to " << o.out << "\n";
    return 0;
}

// ----------------------------------------------------------------- fit-map

struct FitMapOpts {
    std::string samples, dataset, out;
    int degree = 4;
    double input_scale = 256.0;
};

std::vector<UV3DSample> uv3d_from_any(const std::string& samples,
                                      const std::string& dataset) {
    if (!samples.empty()) {
        return load_uv3d_csv(samples);
    }
    std::vector<UV3DSample> out;
    for (const ManifestRow& row : load_manifest_labels(dataset)) {
        out.push_back({row.uv, row.pose3d});
    }
    return out;
}

void print_mapping_residuals(const MappingModel& m,
                             const std::vector<UV3DSample>& samples) {
    double sr = 0.0, sp = 0.0, sy = 0.0;
    for (const UV3DSample& s : samples) {
        const Pose3D got = map_to_3d(m, s.uv);
        sr += (got.roll - s.pose3d.roll) * (got.roll - s.pose3d.roll);
        sp += (got.pitch - s.pose3d.pitch) * (got.pitch - s.pose3d.pitch);
        const double dy = circular_diff(got.yaw, s.pose3d.yaw);
        sy += dy * dy;
    }
    const double n = double(samples.size());
    std::printf("residual rms: roll %.6g  pitch %.6g  yaw %.6g\n", std::sqrt(sr / n),
                std::sqrt(sp / n), std::sqrt(sy / n));
}

int cmd_fit_map(const FitMapOpts& o) {
    if (o.samples.empty() == o.dataset.empty()) {
        throw std::invalid_argument("exactly one of --samples or --dataset is required");
    }
    const std::vector<UV3DSample> samples = uv3d_from_any(o.samples, o.dataset);
    const MappingModel m = fit_global(samples, o.degree, o.input_scale);
    save_mapping(o.out, m);
    std::printf("fit degree-%d mapping on %zu samples -> %s\n", o.degree, samples.size(),
                o.out.c_str());
    print_mapping_residuals(m, samples);
    return 0;
}

// ------------------------------------------------------------------- adapt

struct AdaptOpts {
    std::string mapping, touches, out;
    int max_touches = 8;
};

int cmd_adapt(const AdaptOpts& o) {
    const MappingModel base = load_mapping(o.mapping);
    const std::vector<UV3DSample> touches = load_uv3d_csv(o.touches);
    const MappingModel adapted = adapt_bias(base, touches, o.max_touches);
    save_mapping(o.out, adapted);
    std::printf("adapted biases from %zu touches: roll %.6g -> %.6g  pitch %.6g -> %.6g"
                "  yaw %.6g -> %.6g\n",
                touches.size(), base.b_roll, adapted.b_roll, base.b_pitch,
                adapted.b_pitch, base.b_yaw, adapted.b_yaw);
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalOpts {
    std::string data, checkpoint, mapping, out;
    std::string split = "test";
    std::vector<double> regimes{45.0, 90.0, 135.0, 180.0};
    double touch = 60.0;
    bool oracle = false;
};

bool split_selected(const std::string& want, const std::string& have) {
    return want == "all" || want == have;
}

int cmd_eval(const EvalOpts& o) {
    if (o.split != "train" && o.split != "test" && o.split != "all") {
        throw std::invalid_argument("--split must be train, test, or all");
    }
    const MappingModel mapping = load_mapping(o.mapping);
    const TouchCenter touch{o.touch, o.touch};
    std::vector<EvalRecord> records;

    if (o.oracle) {
        for (const ManifestRow& row : load_manifest_labels(o.data)) {
            if (!split_selected(o.split, row.split)) {
                continue;
            }
            const UVPose uvp = to_uv_pose(row.pose2d, touch);
            const Pose3D p3 = map_to_3d(mapping, uvp);
            records.push_back({{uvp.u, uvp.v, p3.yaw, p3.pitch, p3.roll},
                               {row.uv.u, row.uv.v, row.pose3d.yaw, row.pose3d.pitch,
                                row.pose3d.roll}});
        }
    } else {
        if (o.checkpoint.empty()) {
            throw std::invalid_argument("--checkpoint is required without --oracle");
        }
        const Checkpoint ck = load_checkpoint(o.checkpoint);
        const LabelCodec codec = make_codec(ck.model.config);
        const Dataset ds = load_dataset(o.data);
        std::vector<const Sample*> sel;
        for (const Sample& s : ds.samples) {
            if (split_selected(o.split, s.split)) {
                sel.push_back(&s);
            }
        }
        records.resize(sel.size());
        parallel_for(sel.size(), thread_count_from_env(), [&](std::size_t i) {
            const Sample& s = *sel[i];
            const Pose2D pred =
                decode_heads(forward(ck.model, s.cap, s.patch), ck.model.config, codec);
            const UVPose uvp = to_uv_pose(pred, touch);
            const Pose3D p3 = map_to_3d(mapping, uvp);
            records[i] = {{uvp.u, uvp.v, p3.yaw, p3.pitch, p3.roll},
                          {s.uv.u, s.uv.v, s.pose3d.yaw, s.pose3d.pitch, s.pose3d.roll}};
        });
    }
    if (records.empty()) {
        throw data_error("no samples selected from " + o.data + " (split " + o.split + ")");
    }
    const EvalReport rep = make_report(records, o.regimes);
    std::cout << report_table(rep);
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        write_text((fs::path(o.out) / "report.csv").string(), report_csv(rep));
        write_text((fs::path(o.out) / "report.txt").string(), report_table(rep));
        std::cout << "wrote report.csv and report.txt to " << o.out << "\n";
    }
    return 0;
}

// ----------------------------------------------------------------- predict

struct PredictOpts {
    std::string checkpoint, mapping, cap, patch;
    double touch = 60.0;
};

int cmd_predict(const PredictOpts& o) {
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const LabelCodec codec = make_codec(ck.model.config);
    const MappingModel mapping = load_mapping(o.mapping);
    const GrayImage cap = load_pgm(o.cap);
    const GrayImage patch = load_pgm(o.patch);
    const Pose2D pose =
        decode_heads(forward(ck.model, cap, patch), ck.model.config, codec);
    const UVPose uvp = to_uv_pose(pose, TouchCenter{o.touch, o.touch});
    const Pose3D p3 = map_to_3d(mapping, uvp);
    const double fields[9] = {pose.c, pose.r,  pose.theta, uvp.u,   uvp.v,
                              uvp.phi, p3.roll, p3.pitch,   p3.yaw};
    for (int i = 0; i < 9; ++i) {
        std::cout << (i > 0 ? "," : "") << fmt17(fields[i]);
    }
    std::cout << "\n";
    return 0;
}

// -------------------------------------------------------------- grad-check

struct GradCheckOpts {
    std::uint64_t seed = 1;
    double eps = 1e-5;
    int samples = 2;
    std::string angle_head = "softbin";
};

int cmd_grad_check(const GradCheckOpts& o) {
    if (o.samples < 1) {
        throw std::invalid_argument("--samples must be >= 1");
    }
    NetConfig cfg = tiny_net_config();
    cfg.angle_head = angle_head_from_name(o.angle_head);
    cfg.init_seed = o.seed;
    const LabelCodec codec = make_codec(cfg);
    Rng rng = Rng::substream(o.seed, 0xC1EC);
    std::vector<GrayImage> caps, patches;
    std::vector<Pose2D> poses;
    for (int i = 0; i < o.samples; ++i) {
        GrayImage cap = make_image(cfg.cap_size, cfg.cap_size, 10.0);
        for (double& p : cap.pixels) {
            p = rng.uniform();
        }
        GrayImage patch = make_image(cfg.patch_size, cfg.patch_size, 500.0);
        for (double& p : patch.pixels) {
            p = rng.uniform();
        }
        caps.push_back(std::move(cap));
        patches.push_back(std::move(patch));
        poses.push_back({rng.uniform(-80.0, 200.0), rng.uniform(-80.0, 200.0),
                         rng.uniform(-180.0, 180.0)});
    }
    std::vector<TrainSample> batch;
    for (int i = 0; i < o.samples; ++i) {
        batch.push_back({&caps[i], &patches[i], encode_labels(poses[i], cfg, codec)});
    }
    EstimatorModel model = init_model(cfg);
    jitter_biases(model, rng);
    const double worst = grad_check(model, batch, o.eps);
    std::printf("max relative error: %.6g\n", worst);
    if (!(worst < 1e-4)) {
        throw numeric_error("gradient check failed: max relative error " + fmt17(worst));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"finger pose toolkit: synthetic data, estimator training, UV->3D "
                 "mapping, evaluation"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "read options from a TOML file with one [subcommand] section per "
                   "stage");
    app.allow_config_extras(false);

    SimulateOpts sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    c_sim->add_option("--out", sim.out, "output directory")->required();
    c_sim->add_option("--seed", sim.cfg.seed, "generator seed")->capture_default_str();
    c_sim->add_option("--n-fingers", sim.cfg.n_fingers, "number of synthetic fingers")
        ->capture_default_str();
    c_sim->add_option("--samples-per-finger", sim.cfg.samples_per_finger,
                      "samples rendered per finger")
        ->capture_default_str();
    c_sim->add_option("--yaw-range", sim.cfg.yaw_range,
                      "max |yaw| in degrees (45, 90, 135, or 180)")
        ->capture_default_str();
    c_sim->add_option("--ridge-period", sim.cfg.ridge_period, "ridge period in px")
        ->capture_default_str();
    c_sim->add_option("--noise-std", sim.cfg.noise_std, "additive image noise sigma")
        ->capture_default_str();
    c_sim->add_option("--train-fraction", sim.cfg.train_fraction,
                      "fraction of fingers assigned to the train split")
        ->capture_default_str();
    c_sim->add_option("--contact-min", sim.cfg.contact_radius_lo,
                      "min contact semi-axis in master px")
        ->capture_default_str();
    c_sim->add_option("--contact-max", sim.cfg.contact_radius_hi,
                      "max contact semi-axis in master px")
        ->capture_default_str();
    c_sim->add_option("--uv-radius", sim.cfg.uv_radius_max, "max |(u,v)| drawn")
        ->capture_default_str();

    TrainOpts tr;
    CLI::App* c_train = app.add_subcommand("train", "train the pose estimator");
    c_train->add_option("--data", tr.data, "dataset manifest CSV")->required();
    c_train->add_option("--out", tr.out, "output directory for checkpoint + history");
    c_train->add_option("--epochs", tr.tcfg.epochs, "training epochs")
        ->capture_default_str();
    c_train->add_option("--batch-size", tr.tcfg.batch_size, "minibatch size")
        ->capture_default_str();
    c_train->add_option("--lr-start", tr.tcfg.lr_start, "initial learning rate")
        ->capture_default_str();
    c_train->add_option("--lr-end", tr.tcfg.lr_end, "final learning rate")
        ->capture_default_str();
    c_train->add_option("--weight-decay", tr.tcfg.weight_decay, "decoupled weight decay")
        ->capture_default_str();
    c_train->add_option("--seed", tr.tcfg.seed, "shuffle seed")->capture_default_str();
    c_train->add_option("--init-seed", tr.init_seed, "weight init seed")
        ->capture_default_str();
    c_train->add_option("--angle-head", tr.angle_head,
                        "angle head: softbin, trig, or direct")
        ->capture_default_str();
    c_train->add_option("--t-pos", tr.t_pos, "position bins per axis")
        ->capture_default_str();
    c_train->add_option("--t-ang", tr.t_ang, "angle bins")->capture_default_str();
    c_train->add_option("--pos-sigma", tr.pos_sigma, "position label smoothing in px")
        ->capture_default_str();
    c_train->add_option("--ang-sigma", tr.ang_sigma, "angle label smoothing in degrees")
        ->capture_default_str();
    c_train->add_option("--fused-dim", tr.fused_dim, "fused feature width")
        ->capture_default_str();
    c_train->add_option("--cap-channels", tr.cap_channels,
                        "capacitive branch channel counts")
        ->capture_default_str();
    c_train->add_option("--patch-channels", tr.patch_channels,
                        "patch branch channel counts")
        ->capture_default_str();
    c_train
        ->add_option("--limit-per-finger", tr.limit_per_finger,
                     "keep at most N samples per finger and split (0 = all)")
        ->capture_default_str();
    c_train->add_flag("--grad-check", tr.grad_check_mode,
                      "check analytic gradients on two samples instead of training");

    FitMapOpts fm;
    CLI::App* c_fit = app.add_subcommand("fit-map", "fit the UV->3D polynomial mapping");
    c_fit->add_option("--samples", fm.samples, "UV/3D sample CSV");
    c_fit->add_option("--dataset", fm.dataset, "dataset manifest CSV (labels only)");
    c_fit->add_option("--out", fm.out, "output mapping JSON")->required();
    c_fit->add_option("--degree", fm.degree, "polynomial degree")->capture_default_str();
    c_fit->add_option("--input-scale", fm.input_scale, "u/v normalization divisor")
        ->capture_default_str();

    AdaptOpts ad;
    CLI::App* c_adapt =
        app.add_subcommand("adapt", "re-estimate mapping biases from a few touches");
    c_adapt->add_option("--mapping", ad.mapping, "base mapping JSON")->required();
    c_adapt->add_option("--touches", ad.touches, "registered touch CSV (UV/3D rows)")
        ->required();
    c_adapt->add_option("--out", ad.out, "output mapping JSON")->required();
    c_adapt->add_option("--max-touches", ad.max_touches, "max accepted touches")
        ->capture_default_str();

    EvalOpts ev;
    CLI::App* c_eval = app.add_subcommand("eval", "evaluate the full pipeline");
    c_eval->add_option("--data", ev.data, "dataset manifest CSV")->required();
    c_eval->add_option("--checkpoint", ev.checkpoint, "estimator checkpoint");
    c_eval->add_option("--mapping", ev.mapping, "mapping JSON")->required();
    c_eval->add_option("--out", ev.out, "directory for report.csv / report.txt");
    c_eval->add_option("--split", ev.split, "train, test, or all")->capture_default_str();
    c_eval->add_option("--regimes", ev.regimes, "|yaw| bounds to report")
        ->capture_default_str();
    c_eval->add_option("--touch", ev.touch, "touch point coordinate in the patch frame")
        ->capture_default_str();
    c_eval->add_flag("--oracle", ev.oracle,
                     "use ground-truth 2D poses instead of the estimator");

    PredictOpts pr;
    CLI::App* c_pred = app.add_subcommand("predict", "predict the pose of one sample");
    c_pred->add_option("--checkpoint", pr.checkpoint, "estimator checkpoint")->required();
    c_pred->add_option("--mapping", pr.mapping, "mapping JSON")->required();
    c_pred->add_option("--cap", pr.cap, "capacitive PGM")->required();
    c_pred->add_option("--patch", pr.patch, "patch PGM")->required();
    c_pred->add_option("--touch", pr.touch, "touch point coordinate in the patch frame")
        ->capture_default_str();

    GradCheckOpts gc;
    CLI::App* c_gc = app.add_subcommand(
        "grad-check", "finite-difference gradient check on a tiny random model");
    c_gc->add_option("--seed", gc.seed, "rng seed")->capture_default_str();
    c_gc->add_option("--eps", gc.eps, "finite-difference step")->capture_default_str();
    c_gc->add_option("--samples", gc.samples, "batch size")->capture_default_str();
    c_gc->add_option("--angle-head", gc.angle_head, "angle head: softbin, trig, direct")
        ->capture_default_str();

    // lets --config follow the subcommand name as well as precede it
    for (CLI::App* sub : {c_sim, c_train, c_fit, c_adapt, c_eval, c_pred, c_gc}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (c_sim->parsed()) return cmd_simulate(sim);
        if (c_train->parsed()) return cmd_train(tr);
        if (c_fit->parsed()) return cmd_fit_map(fm);
        if (c_adapt->parsed()) return cmd_adapt(ad);
        if (c_eval->parsed()) return cmd_eval(ev);
        if (c_pred->parsed()) return cmd_predict(pr);
        if (c_gc->parsed()) return cmd_grad_check(gc);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const underdetermined_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const degenerate_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
