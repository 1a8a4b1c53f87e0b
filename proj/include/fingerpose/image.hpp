#pragma once

#include <string>
#include <vector>

#include "fingerpose/pose.hpp"

namespace fingerpose {

// Row-major grayscale image, intensities in [0, 1].
struct GrayImage {
    int width = 0;
    int height = 0;
    double ppi = 0.0;
    std::vector<double> pixels;

    double& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
    double at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
    bool empty() const { return width <= 0 || height <= 0; }
};

GrayImage make_image(int width, int height, double ppi, double fill = 0.0);

// Area-exact box downsampling to target_ppi.  Output side lengths are
// round(input * target / source); each output pixel averages its source
// window, fractional boundary cells weighted by coverage.
GrayImage downsample_to_capacitive(const GrayImage& img, double target_ppi = 10.0);

// size x size window centered at `center` (rounded), zero-padded where the
// window leaves the image.  ppi preserved.
GrayImage crop_patch(const GrayImage& img, const TouchCenter& center, int size = 120);

// Bilinear lookup at a continuous position, pixel centers on the integer
// grid, coordinates clamped to the image.
double bilinear_sample(const GrayImage& img, double x, double y);

// Binary 8-bit PGM (P5) with the resolution kept in a `# ppi:<n>` comment.
void save_pgm(const std::string& path, const GrayImage& img);
GrayImage load_pgm(const std::string& path);

} // namespace fingerpose
