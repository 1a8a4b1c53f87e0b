#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "fingerpose/errors.hpp"
#include "fingerpose/pose.hpp"
#include "fingerpose/rigid.hpp"
#include "fingerpose/rng.hpp"

using namespace fingerpose;

namespace {

PointSet random_points(Rng& rng, int n, double span = 100.0) {
    PointSet pts;
    pts.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        pts.push_back({rng.uniform(-span, span), rng.uniform(-span, span)});
    }
    return pts;
}

// Independent oracle: for a fixed rotation the optimal translation matches the
// centroids, so the objective reduces to a 1-D function of theta we can scan.
double sse_at(double theta_deg, const PointSet& p, const PointSet& q) {
    const double th = deg_to_rad(theta_deg);
    const double ct = std::cos(th), st = std::sin(th);
    const std::size_t n = p.size();
    double pmx = 0, pmy = 0, qmx = 0, qmy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        pmx += p[i].x;
        pmy += p[i].y;
        qmx += q[i].x;
        qmy += q[i].y;
    }
    pmx /= double(n);
    pmy /= double(n);
    qmx /= double(n);
    qmy /= double(n);
    const double tx = pmx - (ct * qmx + st * qmy);
    const double ty = pmy - (-st * qmx + ct * qmy);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double rx = p[i].x - (ct * q[i].x + st * q[i].y + tx);
        const double ry = p[i].y - (-st * q[i].x + ct * q[i].y + ty);
        ss += rx * rx + ry * ry;
    }
    return ss;
}

} // namespace

TEST_CASE("fit_rigid frozen cases") {
    // pure translation
    PointSet q = {{0, 0}, {1, 0}, {0, 1}};
    PointSet p = {{5, -3}, {6, -3}, {5, -2}};
    RigidTransform2D xf = fit_rigid(p, q);
    CHECK(xf.theta == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(xf.tx == doctest::Approx(5.0));
    CHECK(xf.ty == doctest::Approx(-3.0));
    CHECK(xf.rms_residual == doctest::Approx(0.0).epsilon(1e-12));

    // pure quarter turn: (x, y) -> (y, -x)
    q = {{1, 0}, {0, 1}, {-1, 0}};
    p = {{0, -1}, {1, 0}, {0, 1}};
    xf = fit_rigid(p, q);
    CHECK(xf.theta == doctest::Approx(90.0));
    CHECK(xf.tx == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(xf.ty == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(xf.rms_residual == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fit_rigid recovers exact correspondences") {
    Rng rng(31);
    double worst = 0.0;
    for (int trial = 0; trial < 400; ++trial) {
        const int n = rng.uniform_int(2, 51);
        const double theta = rng.uniform(-180.0, 180.0);
        const double tx = rng.uniform(-200.0, 200.0);
        const double ty = rng.uniform(-200.0, 200.0);
        const PointSet q = random_points(rng, n);
        const PointSet p = apply_rigid({theta, tx, ty, 0.0}, q);
        const RigidTransform2D xf = fit_rigid(p, q);
        worst = std::max(worst, std::fabs(circular_diff(xf.theta, theta)));
        worst = std::max(worst, std::fabs(xf.tx - tx) / 200.0);
        worst = std::max(worst, std::fabs(xf.ty - ty) / 200.0);
        worst = std::max(worst, xf.rms_residual);
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("fit_rigid minimizes the scanned objective") {
    Rng rng(32);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = rng.uniform_int(4, 20);
        PointSet q = random_points(rng, n);
        PointSet p = apply_rigid({rng.uniform(-180.0, 180.0), rng.uniform(-50.0, 50.0),
                                  rng.uniform(-50.0, 50.0), 0.0},
                                 q);
        for (Point2& pt : p) {  // heavy noise so the optimum is non-trivial
            pt.x += rng.normal(0.0, 5.0);
            pt.y += rng.normal(0.0, 5.0);
        }
        const RigidTransform2D xf = fit_rigid(p, q);
        const double best = sse_at(xf.theta, p, q);

        // coarse global scan, then a fine scan around the coarse winner
        double scan_min = 1e300, scan_arg = 0.0;
        for (double a = -180.0; a < 180.0; a += 0.5) {
            const double v = sse_at(a, p, q);
            if (v < scan_min) {
                scan_min = v;
                scan_arg = a;
            }
        }
        for (double a = scan_arg - 0.5; a <= scan_arg + 0.5; a += 0.001) {
            const double v = sse_at(a, p, q);
            if (v < scan_min) {
                scan_min = v;
                scan_arg = a;
            }
        }
        CHECK(best <= scan_min + 1e-9 * (1.0 + scan_min));
        CHECK(std::fabs(circular_diff(xf.theta, scan_arg)) < 2e-3);
        CHECK(xf.rms_residual == doctest::Approx(std::sqrt(best / double(n))));
    }
}

TEST_CASE("fit_rigid residual tracks the noise level") {
    // With i.i.d. Gaussian noise of sd s on both coordinates of p and four
    // parameters absorbed by the fit, E[ss] = s^2 (2n - 4).
    Rng rng(33);
    const int n = 2000;
    const double s = 0.25;
    const PointSet q = random_points(rng, n);
    PointSet p = apply_rigid({37.0, 12.0, -4.0, 0.0}, q);
    for (Point2& pt : p) {
        pt.x += rng.normal(0.0, s);
        pt.y += rng.normal(0.0, s);
    }
    const RigidTransform2D xf = fit_rigid(p, q);
    const double expected = s * std::sqrt(2.0 - 4.0 / double(n));
    CHECK(xf.rms_residual == doctest::Approx(expected).epsilon(0.05));
    CHECK(std::fabs(circular_diff(xf.theta, 37.0)) < 0.5);
}

TEST_CASE("fit_rigid rejects bad input") {
    CHECK_THROWS_AS(fit_rigid({{0, 0}}, {{1, 1}}), degenerate_error);
    CHECK_THROWS_AS(fit_rigid({}, {}), degenerate_error);
    CHECK_THROWS_AS(fit_rigid({{0, 0}, {1, 0}}, {{0, 0}}), std::invalid_argument);
    // coincident points carry no orientation information
    CHECK_THROWS_AS(fit_rigid({{1, 1}, {1, 1}, {1, 1}}, {{2, 2}, {2, 2}, {2, 2}}),
                    degenerate_error);
    const double nan = std::nan("");
    CHECK_THROWS_AS(fit_rigid({{nan, 0}, {1, 0}}, {{0, 0}, {1, 0}}),
                    std::invalid_argument);
}

TEST_CASE("apply_rigid matches the uv rotation convention") {
    // Both modules multiply by the same matrix: rotating a point about the
    // origin equals expressing that touch point in an origin pose's frame.
    Rng rng(34);
    for (int i = 0; i < 200; ++i) {
        const double theta = rng.uniform(-180.0, 180.0);
        const double x = rng.uniform(-50.0, 50.0);
        const double y = rng.uniform(-50.0, 50.0);
        const PointSet out = apply_rigid({theta, 0.0, 0.0, 0.0}, {{x, y}});
        const UVPose uv = to_uv_pose({0.0, 0.0, theta}, {x, y});
        CHECK(out[0].x == doctest::Approx(uv.u).epsilon(1e-9));
        CHECK(out[0].y == doctest::Approx(uv.v).epsilon(1e-9));
    }
}

TEST_CASE("transfer_pose moves the center and adds the angle") {
    const RigidTransform2D xf{90.0, 0.0, 0.0, 0.0};
    Pose2D out = transfer_pose({1.0, 0.0, 10.0}, xf);
    CHECK(out.c == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out.r == doctest::Approx(-1.0));
    CHECK(out.theta == doctest::Approx(100.0));

    // angle wraps at the cut
    out = transfer_pose({0.0, 0.0, 170.0}, {20.0, 1.0, 2.0, 0.0});
    CHECK(out.theta == doctest::Approx(-170.0));
    CHECK(out.c == doctest::Approx(1.0));
    CHECK(out.r == doctest::Approx(2.0));
}

TEST_CASE("transfer_pose is consistent with apply_rigid on both frames") {
    Rng rng(35);
    for (int i = 0; i < 100; ++i) {
        const RigidTransform2D xf{rng.uniform(-180.0, 180.0), rng.uniform(-20.0, 20.0),
                                  rng.uniform(-20.0, 20.0), 0.0};
        const Pose2D pose{rng.uniform(-100.0, 100.0), rng.uniform(-100.0, 100.0),
                          rng.uniform(-180.0, 180.0)};
        const Pose2D moved = transfer_pose(pose, xf);
        const PointSet ctr = apply_rigid(xf, {{pose.c, pose.r}});
        CHECK(moved.c == doctest::Approx(ctr[0].x));
        CHECK(moved.r == doctest::Approx(ctr[0].y));
        // a point one unit along the pose axis must land one unit along the
        // transferred axis
        const Point2 tip{pose.c + std::cos(deg_to_rad(pose.theta)),
                         pose.r - std::sin(deg_to_rad(pose.theta))};
        const PointSet tip2 = apply_rigid(xf, {tip});
        const double dx = tip2[0].x - moved.c;
        const double dy = tip2[0].y - moved.r;
        CHECK(dx == doctest::Approx(std::cos(deg_to_rad(moved.theta))).epsilon(1e-9));
        CHECK(dy == doctest::Approx(-std::sin(deg_to_rad(moved.theta))).epsilon(1e-9));
    }
}

TEST_CASE("matched csv round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "fp_rigid_test";
    fs::create_directories(dir);
    const std::string path = (dir / "pairs.csv").string();

    Rng rng(36);
    const PointSet p = random_points(rng, 17);
    const PointSet q = random_points(rng, 17);
    save_matched_csv(path, p, q);
    const auto [p2, q2] = load_matched_csv(path);
    REQUIRE(p2.size() == 17);
    for (std::size_t i = 0; i < 17; ++i) {
        CHECK(p2[i].x == p[i].x);  // %.17g survives the round trip exactly
        CHECK(p2[i].y == p[i].y);
        CHECK(q2[i].x == q[i].x);
        CHECK(q2[i].y == q[i].y);
    }

    CHECK_THROWS_AS(load_matched_csv((dir / "absent.csv").string()), data_error);
    {
        std::FILE* f = std::fopen((dir / "bad.csv").string().c_str(), "w");
        std::fputs("x,y\n1,2\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_matched_csv((dir / "bad.csv").string()), data_error);
    {
        std::FILE* f = std::fopen((dir / "short.csv").string().c_str(), "w");
        std::fputs("px,py,qx,qy\n1,2,3\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_matched_csv((dir / "short.csv").string()), data_error);
    CHECK_THROWS_AS(save_matched_csv(path, p, PointSet{}), std::invalid_argument);
    fs::remove_all(dir);
}
