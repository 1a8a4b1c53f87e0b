#include "fingerpose/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fingerpose/errors.hpp"
#include "fingerpose/parallel.hpp"
#include "fingerpose/rng.hpp"

namespace fingerpose {

namespace {

// Master texture constants.
constexpr double kCenterJitter = 25.0;
constexpr double kRidgeAmp = 0.45;
constexpr double kMaskInner = 210.0;
constexpr double kMaskOuter = 235.0;
constexpr double kPhaseAmp[3] = {12.0, 10.0, 8.0};  // per polynomial order

// Contact blob constants.
constexpr double kPitchSat = 60.0;
// The blob is deliberately close to round: at 10 ppi it should give away
// roughly where the finger points, not a precise axis. Fine orientation is
// the patch's job; the tip-ward intensity ramp keeps the *direction*
// readable, and its direction wobbles per sample (pressure and contact
// shape vary between touches) so the blob stays a coarse cue at any SNR.
constexpr double kElongate = 0.10;
constexpr double kSquash = 0.07;
constexpr double kRamp = 0.45;
constexpr double kRampWobble = 25.0;  // degrees, sd of the per-sample wobble
constexpr double kPeak = 0.95;

// Stream tags for per-item substreams.
constexpr std::uint64_t kMasterTag = 0x10000;
constexpr std::uint64_t kPoseTag = 0x20000;
constexpr std::uint64_t kImageTag = 0x30000;

double smoothstep01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

std::uint64_t image_seed(const SynthConfig& cfg, int finger, int idx) {
    return Rng::mix(Rng::mix(cfg.seed, kImageTag + std::uint64_t(finger)),
                    std::uint64_t(idx) + 1);
}

// Draws (yaw, u, v) for one sample; the only consumer of the pose stream.
UVPose draw_uv(Rng& rng, const SynthConfig& cfg) {
    const double gamma = rng.uniform(-cfg.yaw_range, cfg.yaw_range);
    const double rad = cfg.uv_radius_max * std::sqrt(rng.uniform());
    const double ang = rng.uniform(0.0, 2.0 * kPi);
    UVPose uv;
    uv.u = rad * std::cos(ang);
    uv.v = rad * std::sin(ang);
    uv.phi = normalize_angle(gamma - cfg.gt_mapping.b_yaw);
    return uv;
}

GrayImage render_contact(const Pose3D& pose3d, double scale, double ramp_wobble_deg,
                         const SynthConfig& cfg) {
    const int n = cfg.cap_render_size;
    GrayImage img = make_image(n, n, cfg.master_ppi);
    const double phat = std::min(std::fabs(pose3d.pitch), kPitchSat) / kPitchSat;
    const double a = scale * (1.0 + kElongate * phat);
    const double b = scale * (1.0 - kSquash * phat);
    const double g = deg_to_rad(pose3d.yaw);
    // Tip direction on screen for the angle convention: yaw 0 points up,
    // positive yaw turns counter-clockwise visually.
    const double dx = std::sin(g), dy = -std::cos(g);
    const double px = dy, py = -dx;
    // The ramp points tip-ward only on average; each touch presses a little
    // differently.
    const double gr = deg_to_rad(pose3d.yaw + ramp_wobble_deg);
    const double rx = std::sin(gr), ry = -std::cos(gr);
    const double rc = (n - 1) * 0.5;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double relx = x - rc;
            const double rely = y - rc;
            const double xi = relx * dx + rely * dy;
            const double eta = relx * px + rely * py;
            const double gauss = std::exp(-0.5 * (xi * xi / (a * a) + eta * eta / (b * b)));
            // Intensity ramp towards the tip keeps a yaw cue alive even for
            // flat (circular) contacts.
            const double xr = relx * rx + rely * ry;
            const double ramp = std::clamp(1.0 + kRamp * xr / a, 0.0, 1.6);
            img.at(x, y) = std::clamp(gauss * ramp * kPeak, 0.0, 1.0);
        }
    }
    return img;
}

std::string format_row(const ManifestRow& row) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%s,%d,%s,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  row.sample_id.c_str(), row.finger_id, row.split.c_str(),
                  row.cap_path.c_str(), row.patch_path.c_str(), row.pose2d.c,
                  row.pose2d.r, row.pose2d.theta, row.uv.u, row.uv.v, row.uv.phi,
                  row.pose3d.roll, row.pose3d.pitch, row.pose3d.yaw);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t at = line.find(',', start);
        if (at == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, at - start));
        start = at + 1;
    }
    return out;
}

double parse_double(const std::string& s, const std::string& ctx) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw data_error("bad numeric field '" + s + "' in " + ctx);
    }
    return v;
}

constexpr const char* kManifestHeader =
    "sample_id,finger_id,split,cap_path,patch_path,c,r,theta,u,v,phi,roll,pitch,yaw";

} // namespace

MappingModel default_gt_mapping() {
    MappingModel m;
    m.k = 4;
    m.input_scale = 256.0;
    m.a_roll.assign(14, 0.0);
    m.a_pitch.assign(14, 0.0);
    // Monomial order: v, u, v2, uv, u2, v3, uv2, u2v, u3, v4, uv3, u2v2, u3v, u4.
    m.a_roll[1] = 60.0;   // u
    m.a_roll[3] = 8.0;    // uv
    m.a_roll[8] = 25.0;   // u3
    m.a_pitch[0] = -70.0; // v
    m.a_pitch[2] = 30.0;  // v2
    m.a_pitch[4] = -12.0; // u2
    m.b_roll = 2.0;
    m.b_pitch = -3.0;
    m.b_yaw = 4.0;
    return m;
}

void validate_config(const SynthConfig& cfg) {
    const double yr = cfg.yaw_range;
    if (yr != 45.0 && yr != 90.0 && yr != 135.0 && yr != 180.0) {
        throw std::invalid_argument("yaw_range must be one of 45, 90, 135, 180");
    }
    if (cfg.n_fingers < 1 || cfg.samples_per_finger < 1) {
        throw std::invalid_argument("finger and sample counts must be positive");
    }
    if (!(cfg.ridge_period > 0.0)) {
        throw std::invalid_argument("ridge_period must be positive");
    }
    if (cfg.noise_std < 0.0) {
        throw std::invalid_argument("noise_std must be non-negative");
    }
    if (!(cfg.train_fraction >= 0.0 && cfg.train_fraction <= 1.0)) {
        throw std::invalid_argument("train_fraction must lie in [0, 1]");
    }
    if (!(cfg.contact_radius_lo > 0.0) || cfg.contact_radius_hi < cfg.contact_radius_lo) {
        throw std::invalid_argument("contact radius range is invalid");
    }
    if (cfg.master_size < 64 || cfg.patch_size < 2 || cfg.cap_render_size < 8) {
        throw std::invalid_argument("image sizes too small");
    }
    if (!(cfg.master_ppi > 0.0) || !(cfg.cap_ppi > 0.0)) {
        throw std::invalid_argument("ppi values must be positive");
    }
    if (!(cfg.uv_radius_max > 0.0)) {
        throw std::invalid_argument("uv_radius_max must be positive");
    }
    // Every patch pixel must stay inside the master for bilinear lookup.
    const double reach = cfg.uv_radius_max + cfg.patch_size * 0.7072 + 2.0;
    if (reach > cfg.master_size * 0.5) {
        throw std::invalid_argument("uv_radius_max too large for master_size/patch_size");
    }
}

MasterPrint synth_rolled_fingerprint(std::uint64_t seed, const SynthConfig& cfg) {
    validate_config(cfg);
    const int n = cfg.master_size;
    const double half = n * 0.5;
    Rng rng(seed);
    const double cx = half + rng.uniform(-kCenterJitter, kCenterJitter);
    const double cy = half + rng.uniform(-kCenterJitter, kCenterJitter);
    // Low-order polynomial phase field perturbs ridge distance; order d terms
    // drawn with amplitude kPhaseAmp[d-1].
    struct Term {
        int px, py;
        double c;
    };
    std::vector<Term> terms;
    for (int d = 1; d <= 3; ++d) {
        for (int px = 0; px <= d; ++px) {
            const double amp = kPhaseAmp[d - 1];
            terms.push_back({px, d - px, rng.uniform(-amp, amp)});
        }
    }
    MasterPrint master;
    master.img = make_image(n, n, cfg.master_ppi);
    master.center_x = half;
    master.center_y = half;
    master.orientation_deg = 0.0;
    const double freq = 2.0 * kPi / cfg.ridge_period;
    for (int y = 0; y < n; ++y) {
        const double ny = (y - half) / half;
        for (int x = 0; x < n; ++x) {
            const double nx = (x - half) / half;
            double phase = std::hypot(x - cx, y - cy);
            for (const Term& t : terms) {
                double v = t.c;
                for (int a = 0; a < t.px; ++a) v *= nx;
                for (int a = 0; a < t.py; ++a) v *= ny;
                phase += v;
            }
            const double ridge = 0.5 + kRidgeAmp * std::cos(freq * phase);
            const double rr = std::hypot(x - half, y - half);
            const double m = smoothstep01((kMaskOuter - rr) / (kMaskOuter - kMaskInner));
            master.img.at(x, y) = m * ridge + (1.0 - m);
        }
    }
    return master;
}

SampleLabels sample_labels_at(const UVPose& uv, const SynthConfig& cfg) {
    SampleLabels lab;
    lab.uv = uv;
    lab.pose3d = map_to_3d(cfg.gt_mapping, uv);
    const TouchCenter touch{cfg.patch_size * 0.5, cfg.patch_size * 0.5};
    lab.pose2d = from_uv_pose(uv, touch);
    return lab;
}

Sample synth_sample(std::uint64_t seed, const MasterPrint& master, const UVPose& uv,
                    const SynthConfig& cfg) {
    if (std::hypot(uv.u, uv.v) > cfg.uv_radius_max) {
        throw sample_rejected("uv outside usable master region");
    }
    const SampleLabels lab = sample_labels_at(uv, cfg);
    Rng rng(seed);

    Sample s;
    s.pose2d = lab.pose2d;
    s.uv = lab.uv;
    s.pose3d = lab.pose3d;

    // Patch: master resampled so the print appears at pose2d inside the
    // patch.  Patch position sp maps to master offset uv + R(theta)(sp - touch).
    const double th = deg_to_rad(s.pose2d.theta);
    const double ct = std::cos(th), st = std::sin(th);
    const double tx = cfg.patch_size * 0.5, ty = cfg.patch_size * 0.5;
    s.patch = make_image(cfg.patch_size, cfg.patch_size, cfg.master_ppi);
    for (int py = 0; py < cfg.patch_size; ++py) {
        for (int px = 0; px < cfg.patch_size; ++px) {
            const double dx = px - tx, dy = py - ty;
            const double mx = master.center_x + uv.u + ct * dx + st * dy;
            const double my = master.center_y + uv.v - st * dx + ct * dy;
            double v = bilinear_sample(master.img, mx, my);
            if (cfg.noise_std > 0.0) {
                v += rng.normal(0.0, cfg.noise_std);
            }
            s.patch.at(px, py) = std::clamp(v, 0.0, 1.0);
        }
    }

    const double contact = rng.uniform(cfg.contact_radius_lo, cfg.contact_radius_hi);
    GrayImage blob = render_contact(s.pose3d, contact, cfg);
    s.cap = downsample_to_capacitive(blob, cfg.cap_ppi);
    for (double& v : s.cap.pixels) {
        if (cfg.noise_std > 0.0) {
            v += rng.normal(0.0, cfg.noise_std);
        }
        v = std::clamp(v, 0.0, 1.0);
    }
    return s;
}

Dataset synth_dataset(const SynthConfig& cfg, int threads) {
    validate_config(cfg);
    const int n_train =
        std::clamp<int>(int(std::llround(cfg.train_fraction * cfg.n_fingers)), 0,
                        cfg.n_fingers);
    std::vector<std::vector<Sample>> per_finger(static_cast<std::size_t>(cfg.n_fingers));
    parallel_for(static_cast<std::size_t>(cfg.n_fingers), threads, [&](std::size_t f) {
        const int fi = static_cast<int>(f);
        Rng master_rng = Rng::substream(cfg.seed, kMasterTag, std::uint64_t(fi));
        const MasterPrint master = synth_rolled_fingerprint(master_rng.next_u64(), cfg);
        std::vector<Sample>& out = per_finger[f];
        out.reserve(static_cast<std::size_t>(cfg.samples_per_finger));
        for (int i = 0; i < cfg.samples_per_finger; ++i) {
            Rng pose_rng = Rng::substream(cfg.seed, kPoseTag + std::uint64_t(fi), i);
            const UVPose uv = draw_uv(pose_rng, cfg);
            Sample s = synth_sample(image_seed(cfg, fi, i), master, uv, cfg);
            char id[32];
            std::snprintf(id, sizeof(id), "f%03d_s%04d", fi, i);
            s.sample_id = id;
            s.finger_id = fi;
            s.split = fi < n_train ? "train" : "test";
            out.push_back(std::move(s));
        }
    });
    Dataset ds;
    ds.samples.reserve(std::size_t(cfg.n_fingers) * cfg.samples_per_finger);
    for (std::vector<Sample>& fs : per_finger) {
        for (Sample& s : fs) {
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

std::vector<SampleLabels> synth_dataset_labels(const SynthConfig& cfg) {
    validate_config(cfg);
    std::vector<SampleLabels> out;
    out.reserve(std::size_t(cfg.n_fingers) * cfg.samples_per_finger);
    for (int f = 0; f < cfg.n_fingers; ++f) {
        for (int i = 0; i < cfg.samples_per_finger; ++i) {
            Rng pose_rng = Rng::substream(cfg.seed, kPoseTag + std::uint64_t(f), i);
            out.push_back(sample_labels_at(draw_uv(pose_rng, cfg), cfg));
        }
    }
    return out;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "cap", ec);
    fs::create_directories(fs::path(dir) / "patch", ec);
    if (ec) {
        throw data_error("cannot create dataset directory: " + dir);
    }
    std::ofstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) {
        throw data_error("cannot write manifest in " + dir);
    }
    manifest << kManifestHeader << "\n";
    for (const Sample& s : ds.samples) {
        ManifestRow row;
        row.sample_id = s.sample_id;
        row.finger_id = s.finger_id;
        row.split = s.split;
        row.cap_path = "cap/" + s.sample_id + ".pgm";
        row.patch_path = "patch/" + s.sample_id + ".pgm";
        row.pose2d = s.pose2d;
        row.uv = s.uv;
        row.pose3d = s.pose3d;
        manifest << format_row(row);
        save_pgm((fs::path(dir) / row.cap_path).string(), s.cap);
        save_pgm((fs::path(dir) / row.patch_path).string(), s.patch);
    }
    if (!manifest) {
        throw data_error("manifest write failed in " + dir);
    }
}

std::vector<ManifestRow> load_manifest_labels(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw data_error("cannot open manifest: " + manifest_path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw data_error("empty manifest: " + manifest_path);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != kManifestHeader) {
        throw data_error("bad manifest header in " + manifest_path);
    }
    std::vector<ManifestRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> f = split_csv(line);
        if (f.size() != 14) {
            throw data_error("manifest row " + std::to_string(lineno) + " has " +
                             std::to_string(f.size()) + " fields");
        }
        const std::string ctx = manifest_path + ":" + std::to_string(lineno);
        ManifestRow row;
        row.sample_id = f[0];
        row.finger_id = int(parse_double(f[1], ctx));
        row.split = f[2];
        if (row.split != "train" && row.split != "test") {
            throw data_error("bad split '" + row.split + "' in " + ctx);
        }
        row.cap_path = f[3];
        row.patch_path = f[4];
        row.pose2d = {parse_double(f[5], ctx), parse_double(f[6], ctx),
                      parse_double(f[7], ctx)};
        row.uv = {parse_double(f[8], ctx), parse_double(f[9], ctx),
                  parse_double(f[10], ctx)};
        row.pose3d = {parse_double(f[11], ctx), parse_double(f[12], ctx),
                      parse_double(f[13], ctx)};
        rows.push_back(std::move(row));
    }
    return rows;
}

Dataset load_dataset(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    const std::vector<ManifestRow> rows = load_manifest_labels(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    Dataset ds;
    ds.samples.reserve(rows.size());
    for (const ManifestRow& row : rows) {
        Sample s;
        s.sample_id = row.sample_id;
        s.finger_id = row.finger_id;
        s.split = row.split;
        s.cap = load_pgm((base / row.cap_path).string());
        s.patch = load_pgm((base / row.patch_path).string());
        s.pose2d = row.pose2d;
        s.uv = row.uv;
        s.pose3d = row.pose3d;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

} // namespace fingerpose
