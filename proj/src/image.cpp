#include "fingerpose/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fingerpose/errors.hpp"

namespace fingerpose {

namespace {

struct AxisWindow {
    int start = 0;
    std::vector<double> weights;
};

// Coverage weights of source cells for each output cell along one axis.
// Window o spans [o*f, (o+1)*f) in source coordinates, f = in/out.
std::vector<AxisWindow> axis_windows(int in, int out) {
    const double f = double(in) / double(out);
    std::vector<AxisWindow> ws(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        const double x0 = o * f;
        const double x1 = (o + 1) * f;
        int i0 = int(std::floor(x0));
        int i1 = int(std::ceil(x1));
        i0 = std::clamp(i0, 0, in - 1);
        i1 = std::clamp(i1, i0 + 1, in);
        AxisWindow w;
        w.start = i0;
        w.weights.resize(static_cast<std::size_t>(i1 - i0));
        for (int i = i0; i < i1; ++i) {
            const double lo = std::max(x0, double(i));
            const double hi = std::min(x1, double(i + 1));
            w.weights[i - i0] = std::max(0.0, hi - lo);
        }
        ws[o] = std::move(w);
    }
    return ws;
}

} // namespace

GrayImage make_image(int width, int height, double ppi, double fill) {
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    GrayImage img;
    img.width = width;
    img.height = height;
    img.ppi = ppi;
    img.pixels.assign(std::size_t(width) * height, fill);
    return img;
}

GrayImage downsample_to_capacitive(const GrayImage& img, double target_ppi) {
    if (img.empty()) {
        throw std::invalid_argument("downsample: empty image");
    }
    if (!(img.ppi > 0.0) || !(target_ppi > 0.0)) {
        throw std::invalid_argument("downsample: ppi must be positive");
    }
    const int out_w = std::max(1, int(std::llround(img.width * target_ppi / img.ppi)));
    const int out_h = std::max(1, int(std::llround(img.height * target_ppi / img.ppi)));
    const std::vector<AxisWindow> wx = axis_windows(img.width, out_w);
    const std::vector<AxisWindow> wy = axis_windows(img.height, out_h);
    const double fx = double(img.width) / out_w;
    const double fy = double(img.height) / out_h;

    // Separable box filter: horizontal pass, then vertical.
    std::vector<double> tmp(std::size_t(out_w) * img.height);
    for (int y = 0; y < img.height; ++y) {
        const double* row = &img.pixels[std::size_t(y) * img.width];
        for (int o = 0; o < out_w; ++o) {
            const AxisWindow& w = wx[o];
            double s = 0.0;
            for (std::size_t i = 0; i < w.weights.size(); ++i) {
                s += w.weights[i] * row[w.start + i];
            }
            tmp[std::size_t(y) * out_w + o] = s / fx;
        }
    }
    GrayImage out = make_image(out_w, out_h, target_ppi);
    for (int o = 0; o < out_h; ++o) {
        const AxisWindow& w = wy[o];
        for (int x = 0; x < out_w; ++x) {
            double s = 0.0;
            for (std::size_t i = 0; i < w.weights.size(); ++i) {
                s += w.weights[i] * tmp[std::size_t(w.start + i) * out_w + x];
            }
            out.at(x, o) = std::clamp(s / fy, 0.0, 1.0);
        }
    }
    return out;
}

GrayImage crop_patch(const GrayImage& img, const TouchCenter& center, int size) {
    if (size <= 0) {
        throw std::invalid_argument("crop size must be positive");
    }
    if (img.empty()) {
        throw std::invalid_argument("crop: empty image");
    }
    const int x0 = int(std::llround(center.x)) - size / 2;
    const int y0 = int(std::llround(center.y)) - size / 2;
    GrayImage out = make_image(size, size, img.ppi);
    for (int py = 0; py < size; ++py) {
        const int sy = y0 + py;
        if (sy < 0 || sy >= img.height) {
            continue;
        }
        const int sx_lo = std::max(0, x0);
        const int sx_hi = std::min(img.width, x0 + size);
        for (int sx = sx_lo; sx < sx_hi; ++sx) {
            out.at(sx - x0, py) = img.at(sx, sy);
        }
    }
    return out;
}

double bilinear_sample(const GrayImage& img, double x, double y) {
    if (img.empty()) {
        throw std::invalid_argument("bilinear: empty image");
    }
    x = std::clamp(x, 0.0, double(img.width - 1));
    y = std::clamp(y, 0.0, double(img.height - 1));
    const int x0 = std::min(int(x), img.width - 2 >= 0 ? img.width - 2 : 0);
    const int y0 = std::min(int(y), img.height - 2 >= 0 ? img.height - 2 : 0);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ax = x - x0;
    const double ay = y - y0;
    const double top = (1.0 - ax) * img.at(x0, y0) + ax * img.at(x1, y0);
    const double bot = (1.0 - ax) * img.at(x0, y1) + ax * img.at(x1, y1);
    return (1.0 - ay) * top + ay * bot;
}

void save_pgm(const std::string& path, const GrayImage& img) {
    if (img.empty()) {
        throw std::invalid_argument("save_pgm: empty image");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw data_error("cannot write image: " + path);
    }
    char head[96];
    std::snprintf(head, sizeof(head), "P5\n# ppi:%g\n%d %d\n255\n",
                  img.ppi, img.width, img.height);
    out << head;
    std::vector<unsigned char> bytes(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = std::clamp(img.pixels[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw data_error("write failed: " + path);
    }
}

GrayImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw data_error("cannot open image: " + path);
    }
    std::string magic;
    in >> magic;
    if (magic != "P5") {
        throw data_error("not a binary PGM: " + path);
    }
    double ppi = 0.0;
    int fields[3];
    int got = 0;
    std::string tok;
    while (got < 3 && in >> tok) {
        if (tok[0] == '#') {
            std::string rest;
            std::getline(in, rest);
            const std::string comment = tok + rest;
            const std::size_t at = comment.find("ppi:");
            if (at != std::string::npos) {
                ppi = std::strtod(comment.c_str() + at + 4, nullptr);
            }
            continue;
        }
        try {
            fields[got++] = std::stoi(tok);
        } catch (const std::exception&) {
            throw data_error("bad PGM header in " + path);
        }
    }
    if (got < 3) {
        throw data_error("truncated PGM header in " + path);
    }
    const int w = fields[0], h = fields[1], maxval = fields[2];
    if (w <= 0 || h <= 0 || maxval != 255) {
        throw data_error("unsupported PGM geometry in " + path);
    }
    if (!(ppi > 0.0)) {
        throw data_error("missing ppi comment in " + path);
    }
    in.get(); // single whitespace byte after maxval
    GrayImage img = make_image(w, h, ppi);
    std::vector<unsigned char> bytes(img.pixels.size());
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw data_error("truncated PGM data in " + path);
    }
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        img.pixels[i] = bytes[i] / 255.0;
    }
    return img;
}

} // namespace fingerpose
