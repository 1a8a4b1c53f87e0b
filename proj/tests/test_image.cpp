#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "fingerpose/errors.hpp"
#include "fingerpose/image.hpp"
#include "fingerpose/rng.hpp"

using namespace fingerpose;

TEST_CASE("make_image fills and indexes row-major") {
    GrayImage img = make_image(4, 3, 500.0, 0.25);
    CHECK(img.width == 4);
    CHECK(img.height == 3);
    CHECK(img.ppi == 500.0);
    REQUIRE(img.pixels.size() == 12);
    for (double p : img.pixels) {
        CHECK(p == 0.25);
    }
    img.at(3, 0) = 0.5;
    CHECK(img.pixels[3] == 0.5);
    img.at(0, 2) = 0.75;
    CHECK(img.pixels[8] == 0.75);
    CHECK_THROWS_AS(make_image(0, 3, 500.0), std::invalid_argument);
    CHECK_THROWS_AS(make_image(3, -1, 500.0), std::invalid_argument);
}

TEST_CASE("downsample preserves constants and the global mean") {
    GrayImage img = make_image(35, 21, 70.0, 0.6);
    const GrayImage out = downsample_to_capacitive(img, 10.0);
    CHECK(out.width == 5);
    CHECK(out.height == 3);
    CHECK(out.ppi == 10.0);
    for (double p : out.pixels) {
        CHECK(p == doctest::Approx(0.6).epsilon(1e-12));
    }

    Rng rng(51);
    GrayImage noisy = make_image(33, 27, 45.0);
    double mean_in = 0.0;
    for (double& p : noisy.pixels) {
        p = rng.uniform();
        mean_in += p;
    }
    mean_in /= double(noisy.pixels.size());
    // non-integer factor: fractional boundary weights in play
    const GrayImage small = downsample_to_capacitive(noisy, 10.0);
    CHECK(small.width == 7);
    CHECK(small.height == 6);
    double mean_out = 0.0;
    for (double p : small.pixels) {
        mean_out += p;
    }
    mean_out /= double(small.pixels.size());
    CHECK(mean_out == doctest::Approx(mean_in).epsilon(1e-9));
}

TEST_CASE("downsample with an integer factor is a block mean") {
    Rng rng(52);
    GrayImage img = make_image(350, 350, 500.0);
    for (double& p : img.pixels) {
        p = rng.uniform();
    }
    const GrayImage out = downsample_to_capacitive(img, 10.0);
    REQUIRE(out.width == 7);
    REQUIRE(out.height == 7);
    for (int oy = 0; oy < 7; ++oy) {
        for (int ox = 0; ox < 7; ++ox) {
            double s = 0.0;
            for (int y = oy * 50; y < (oy + 1) * 50; ++y) {
                for (int x = ox * 50; x < (ox + 1) * 50; ++x) {
                    s += img.at(x, y);
                }
            }
            CHECK(out.at(ox, oy) == doctest::Approx(s / 2500.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("downsample splits boundary cells by coverage") {
    // width 3 -> 2 with factor 1.5: windows [a, b/2] and [b/2, c]
    GrayImage img = make_image(3, 1, 3.0);
    img.at(0, 0) = 0.9;
    img.at(1, 0) = 0.3;
    img.at(2, 0) = 0.6;
    const GrayImage out = downsample_to_capacitive(img, 2.0);
    REQUIRE(out.width == 2);
    REQUIRE(out.height == 1);
    CHECK(out.at(0, 0) == doctest::Approx((0.9 + 0.5 * 0.3) / 1.5).epsilon(1e-12));
    CHECK(out.at(1, 0) == doctest::Approx((0.5 * 0.3 + 0.6) / 1.5).epsilon(1e-12));
}

TEST_CASE("downsample rejects bad input") {
    CHECK_THROWS_AS(downsample_to_capacitive(GrayImage{}, 10.0), std::invalid_argument);
    GrayImage img = make_image(4, 4, 0.0);
    CHECK_THROWS_AS(downsample_to_capacitive(img, 10.0), std::invalid_argument);
    img.ppi = 40.0;
    CHECK_THROWS_AS(downsample_to_capacitive(img, -1.0), std::invalid_argument);
}

TEST_CASE("crop_patch copies the window and pads with zeros") {
    GrayImage img = make_image(3, 3, 500.0);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
            img.at(x, y) = 1.0 + x + 3 * y;  // 1..9
        }
    }
    // window centered on the corner hangs off the top-left
    const GrayImage c = crop_patch(img, {0.0, 0.0}, 3);
    CHECK(c.ppi == 500.0);
    CHECK(c.at(0, 0) == 0.0);
    CHECK(c.at(1, 0) == 0.0);
    CHECK(c.at(0, 1) == 0.0);
    CHECK(c.at(1, 1) == 1.0);
    CHECK(c.at(2, 1) == 2.0);
    CHECK(c.at(1, 2) == 4.0);
    CHECK(c.at(2, 2) == 5.0);

    // full-frame window reproduces the image
    const GrayImage whole = crop_patch(img, {1.0, 1.0}, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        CHECK(whole.pixels[i] == img.pixels[i]);
    }
}

TEST_CASE("crop_patch rounds the center to the nearest pixel") {
    GrayImage img = make_image(8, 8, 500.0);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            img.at(x, y) = x + 8.0 * y;
        }
    }
    const GrayImage a = crop_patch(img, {2.4, 2.6}, 2);
    const GrayImage b = crop_patch(img, {2.0, 3.0}, 2);
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        CHECK(a.pixels[i] == b.pixels[i]);
    }
    CHECK(a.at(0, 0) == img.at(1, 2));  // x0 = 2 - 1, y0 = 3 - 1

    CHECK_THROWS_AS(crop_patch(img, {0.0, 0.0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(crop_patch(GrayImage{}, {0.0, 0.0}, 4), std::invalid_argument);
}

TEST_CASE("bilinear_sample interpolates exactly on planes") {
    GrayImage img = make_image(20, 15, 500.0);
    for (int y = 0; y < 15; ++y) {
        for (int x = 0; x < 20; ++x) {
            img.at(x, y) = 0.001 * (3.0 * x + 2.0 * y + 5.0);
        }
    }
    // grid points are exact
    CHECK(bilinear_sample(img, 7.0, 4.0) == img.at(7, 4));
    // any interior point reproduces the plane
    Rng rng(53);
    for (int i = 0; i < 300; ++i) {
        const double x = rng.uniform(0.0, 19.0);
        const double y = rng.uniform(0.0, 14.0);
        CHECK(bilinear_sample(img, x, y) ==
              doctest::Approx(0.001 * (3.0 * x + 2.0 * y + 5.0)).epsilon(1e-12));
    }
    // midpoint of two pixels is their average
    GrayImage two = make_image(2, 1, 500.0);
    two.at(0, 0) = 0.2;
    two.at(1, 0) = 0.8;
    CHECK(bilinear_sample(two, 0.5, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("bilinear_sample clamps outside the frame") {
    GrayImage img = make_image(4, 4, 500.0);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            img.at(x, y) = x + 4.0 * y;
        }
    }
    CHECK(bilinear_sample(img, -5.0, -5.0) == img.at(0, 0));
    CHECK(bilinear_sample(img, 99.0, 1.0) == img.at(3, 1));
    CHECK(bilinear_sample(img, 1.5, 99.0) ==
          doctest::Approx(0.5 * img.at(1, 3) + 0.5 * img.at(2, 3)));

    GrayImage one = make_image(1, 1, 500.0, 0.7);
    CHECK(bilinear_sample(one, 0.3, -2.0) == 0.7);
    CHECK_THROWS_AS(bilinear_sample(GrayImage{}, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("pgm round trip with quantization") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "fp_image_test";
    fs::create_directories(dir);
    const std::string path = (dir / "img.pgm").string();

    Rng rng(54);
    GrayImage img = make_image(31, 17, 123.25);
    for (double& p : img.pixels) {
        p = rng.uniform();
    }
    save_pgm(path, img);
    const GrayImage back = load_pgm(path);
    CHECK(back.width == 31);
    CHECK(back.height == 17);
    CHECK(back.ppi == 123.25);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        CHECK(std::fabs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255.0 + 1e-12);
    }

    // exact byte values survive unchanged
    GrayImage exact = make_image(5, 5, 500.0);
    for (int i = 0; i < 25; ++i) {
        exact.pixels[std::size_t(i)] = double(i * 10 % 256) / 255.0;
    }
    const std::string epath = (dir / "exact.pgm").string();
    save_pgm(epath, exact);
    const GrayImage eback = load_pgm(epath);
    for (std::size_t i = 0; i < exact.pixels.size(); ++i) {
        CHECK(eback.pixels[i] == exact.pixels[i]);
    }
    fs::remove_all(dir);
}

TEST_CASE("pgm header layout is fixed") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "fp_image_hdr";
    fs::create_directories(dir);
    const std::string path = (dir / "h.pgm").string();
    save_pgm(path, make_image(7, 3, 500.0, 0.5));

    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string head = "P5\n# ppi:500\n7 3\n255\n";
    REQUIRE(all.size() == head.size() + 21);
    CHECK(all.substr(0, head.size()) == head);
    CHECK(static_cast<unsigned char>(all[head.size()]) == 128);  // round(0.5 * 255)
    fs::remove_all(dir);
}

TEST_CASE("pgm loader rejects malformed files") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "fp_image_bad";
    fs::create_directories(dir);

    CHECK_THROWS_AS(load_pgm((dir / "absent.pgm").string()), data_error);

    auto put = [&](const char* name, const std::string& bytes) {
        std::ofstream out((dir / name).string(), std::ios::binary);
        out << bytes;
        return (dir / name).string();
    };
    CHECK_THROWS_AS(load_pgm(put("ascii.pgm", "P2\n2 2\n255\n0 0 0 0\n")), data_error);
    CHECK_THROWS_AS(load_pgm(put("noppi.pgm", std::string("P5\n2 1\n255\n\0\0", 13))),
                    data_error);
    CHECK_THROWS_AS(
        load_pgm(put("short.pgm", std::string("P5\n# ppi:10\n4 4\n255\nab", 22))),
        data_error);
    CHECK_THROWS_AS(load_pgm(put("depth.pgm", "P5\n# ppi:10\n2 2\n65535\n")), data_error);
    fs::remove_all(dir);
}
