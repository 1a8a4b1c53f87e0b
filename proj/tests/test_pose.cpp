#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fingerpose/pose.hpp"
#include "fingerpose/rng.hpp"

using namespace fingerpose;

TEST_CASE("normalize_angle maps into the half-open interval") {
    CHECK(normalize_angle(0.0) == 0.0);
    CHECK(normalize_angle(540.0) == -180.0);  // 180 itself is excluded
    CHECK(normalize_angle(-190.0) == 170.0);
    CHECK(normalize_angle(180.0) == -180.0);
    CHECK(normalize_angle(-180.0) == -180.0);
    CHECK(normalize_angle(360.0) == 0.0);

    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        const double x = rng.uniform(-5000.0, 5000.0);
        const double n = normalize_angle(x);
        CHECK(n >= -180.0);
        CHECK(n < 180.0);
        // congruent mod 360
        CHECK(std::fabs(std::remainder(n - x, 360.0)) < 1e-9);
    }
}

TEST_CASE("normalize_angle rejects non-finite input") {
    CHECK_THROWS_AS(normalize_angle(std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
    CHECK_THROWS_AS(normalize_angle(std::numeric_limits<double>::quiet_NaN()),
                    std::invalid_argument);
}

TEST_CASE("to_uv_pose frozen cases") {
    {
        const UVPose uv = to_uv_pose({0.0, 0.0, 0.0}, {0.0, 0.0});
        CHECK(uv.u == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(uv.v == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(uv.phi == doctest::Approx(0.0).epsilon(1e-12));
    }
    {
        // touch at the pose center maps to the origin
        const UVPose uv = to_uv_pose({10.0, 20.0, 90.0}, {10.0, 20.0});
        CHECK(std::fabs(uv.u) < 1e-12);
        CHECK(std::fabs(uv.v) < 1e-12);
        CHECK(uv.phi == doctest::Approx(-90.0));
    }
    {
        const UVPose uv = to_uv_pose({0.0, 0.0, 90.0}, {1.0, 0.0});
        CHECK(std::fabs(uv.u - 0.0) < 1e-12);
        CHECK(std::fabs(uv.v - (-1.0)) < 1e-12);
        CHECK(uv.phi == doctest::Approx(-90.0));
    }
}

TEST_CASE("to_uv_pose matches an explicit matrix evaluation") {
    Rng rng(12);
    for (int i = 0; i < 500; ++i) {
        const Pose2D pose{rng.uniform(-200.0, 200.0), rng.uniform(-200.0, 200.0),
                          rng.uniform(-180.0, 180.0)};
        const TouchCenter touch{rng.uniform(-200.0, 200.0), rng.uniform(-200.0, 200.0)};
        const double th = deg_to_rad(pose.theta);
        const double dx = touch.x - pose.c, dy = touch.y - pose.r;
        const double eu = std::cos(th) * dx + std::sin(th) * dy;
        const double ev = -std::sin(th) * dx + std::cos(th) * dy;
        const UVPose uv = to_uv_pose(pose, touch);
        CHECK(uv.u == doctest::Approx(eu).epsilon(1e-12));
        CHECK(uv.v == doctest::Approx(ev).epsilon(1e-12));
        CHECK(uv.phi == doctest::Approx(normalize_angle(-pose.theta)).epsilon(1e-12));
    }
}

TEST_CASE("from_uv_pose frozen cases and round trips") {
    {
        const Pose2D p = from_uv_pose({0.0, 0.0, 0.0}, {0.0, 0.0});
        CHECK(std::fabs(p.c) < 1e-12);
        CHECK(std::fabs(p.r) < 1e-12);
        CHECK(std::fabs(p.theta) < 1e-12);
    }
    {
        const Pose2D p = from_uv_pose({0.0, 0.0, -90.0}, {10.0, 20.0});
        CHECK(p.c == doctest::Approx(10.0));
        CHECK(p.r == doctest::Approx(20.0));
        CHECK(p.theta == doctest::Approx(90.0));
    }
    Rng rng(13);
    for (int i = 0; i < 1000; ++i) {
        const Pose2D pose{rng.uniform(-300.0, 300.0), rng.uniform(-300.0, 300.0),
                          rng.uniform(-180.0, 180.0)};
        const TouchCenter touch{rng.uniform(-300.0, 300.0), rng.uniform(-300.0, 300.0)};
        const Pose2D back = from_uv_pose(to_uv_pose(pose, touch), touch);
        CHECK(std::fabs(back.c - pose.c) < 1e-9);
        CHECK(std::fabs(back.r - pose.r) < 1e-9);
        CHECK(std::fabs(circular_diff(back.theta, pose.theta)) < 1e-9);

        const UVPose uv{rng.uniform(-300.0, 300.0), rng.uniform(-300.0, 300.0),
                        rng.uniform(-180.0, 180.0)};
        const UVPose uvback = to_uv_pose(from_uv_pose(uv, touch), touch);
        CHECK(std::fabs(uvback.u - uv.u) < 1e-9);
        CHECK(std::fabs(uvback.v - uv.v) < 1e-9);
        CHECK(std::fabs(circular_diff(uvback.phi, uv.phi)) < 1e-9);
    }
}

TEST_CASE("to_uv_pose is an isometry about the pose center") {
    Rng rng(14);
    for (int i = 0; i < 1000; ++i) {
        const Pose2D pose{rng.uniform(-300.0, 300.0), rng.uniform(-300.0, 300.0),
                          rng.uniform(-180.0, 180.0)};
        const TouchCenter touch{rng.uniform(-300.0, 300.0), rng.uniform(-300.0, 300.0)};
        const UVPose uv = to_uv_pose(pose, touch);
        const double before = std::hypot(touch.x - pose.c, touch.y - pose.r);
        const double after = std::hypot(uv.u, uv.v);
        CHECK(std::fabs(before - after) < 1e-9);
    }
}

TEST_CASE("circular_diff frozen cases") {
    CHECK(circular_diff(179.0, -179.0) == doctest::Approx(-2.0));
    CHECK(circular_diff(42.5, 42.5) == 0.0);
    CHECK(circular_diff(30.0, -30.0) == doctest::Approx(60.0));
    CHECK(circular_diff(-30.0, 30.0) == doctest::Approx(-60.0));
}

TEST_CASE("circular_diff is antisymmetric away from the cut") {
    Rng rng(15);
    for (int i = 0; i < 2000; ++i) {
        const double a = rng.uniform(-180.0, 180.0);
        const double b = rng.uniform(-180.0, 180.0);
        const double d = circular_diff(a, b);
        CHECK(d >= -180.0);
        CHECK(d < 180.0);
        if (std::fabs(d) < 179.999) {  // the ±180 cut maps both signs to -180
            CHECK(circular_diff(b, a) == doctest::Approx(-d).epsilon(1e-12));
        }
    }
}
