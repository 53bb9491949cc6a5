#include "image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

namespace arcvq {

namespace {

unsigned char to_byte(double v) {
    const double c = std::min(1.0, std::max(0.0, v));
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

void write_pnm(const char* magic, std::size_t w, std::size_t h,
               const std::vector<unsigned char>& bytes, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write " + path);
    std::fprintf(f, "%s\n%zu %zu\n255\n", magic, w, h);
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
}

}  // namespace

void write_pgm(const Tensor& img, const std::string& path) {
    if (img.rank() != 2) throw ShapeError("write_pgm: expected 2-D tensor");
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = to_byte(img[i]);
    write_pnm("P5", img.cols(), img.rows(), bytes, path);
}

void write_pgm_minmax(const Tensor& img, const std::string& path) {
    if (img.rank() != 2) throw ShapeError("write_pgm_minmax: expected 2-D tensor");
    double lo = img[0], hi = img[0];
    for (std::size_t i = 1; i < img.size(); ++i) {
        lo = std::min(lo, img[i]);
        hi = std::max(hi, img[i]);
    }
    const double span = hi - lo;
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i)
        bytes[i] = to_byte(span > 0.0 ? (img[i] - lo) / span : 0.0);
    write_pnm("P5", img.cols(), img.rows(), bytes, path);
}

void write_ppm(const Tensor& rgb, const std::string& path) {
    if (rgb.rank() != 3 || rgb.dim(2) != 3) throw ShapeError("write_ppm: expected [HxWx3] tensor");
    std::vector<unsigned char> bytes(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) bytes[i] = to_byte(rgb[i]);
    write_pnm("P6", rgb.dim(1), rgb.dim(0), bytes, path);
}

}  // namespace arcvq
