#include "data.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <random>

namespace arcvq {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

std::uint32_t read_u32_be(FILE* f, const std::string& path) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw IoError("truncated IDX file: " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_u32_be(FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    std::fwrite(b, 1, 4, f);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path) {
    FilePtr f(std::fopen(images_path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + images_path);
    const std::uint32_t magic = read_u32_be(f.get(), images_path);
    if (magic != kImageMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "0x%08x", magic);
        throw FormatError("bad IDX image magic " + std::string(buf) + " in " + images_path);
    }
    const std::uint32_t m = read_u32_be(f.get(), images_path);
    const std::uint32_t h = read_u32_be(f.get(), images_path);
    const std::uint32_t w = read_u32_be(f.get(), images_path);
    if (m == 0) throw FormatError("IDX image file with zero images: " + images_path);
    if (h != w) throw FormatError("non-square IDX images unsupported: " + images_path);

    Dataset ds;
    ds.images = Tensor({m, h, w});
    std::vector<unsigned char> row(static_cast<std::size_t>(h) * w);
    for (std::uint32_t i = 0; i < m; ++i) {
        if (std::fread(row.data(), 1, row.size(), f.get()) != row.size())
            throw IoError("truncated IDX image payload: " + images_path);
        double* dst = ds.images.data() + static_cast<std::size_t>(i) * h * w;
        for (std::size_t p = 0; p < row.size(); ++p) dst[p] = row[p] / 255.0;
    }

    if (labels_path) {
        FilePtr lf(std::fopen(labels_path->c_str(), "rb"));
        if (!lf) throw IoError("cannot open " + *labels_path);
        const std::uint32_t lmagic = read_u32_be(lf.get(), *labels_path);
        if (lmagic != kLabelMagic) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "0x%08x", lmagic);
            throw FormatError("bad IDX label magic " + std::string(buf) + " in " + *labels_path);
        }
        const std::uint32_t lm = read_u32_be(lf.get(), *labels_path);
        if (lm != m)
            throw FormatError("IDX label count " + std::to_string(lm) + " does not match image count " +
                              std::to_string(m));
        ds.labels.resize(lm);
        if (std::fread(ds.labels.data(), 1, lm, lf.get()) != lm)
            throw IoError("truncated IDX label payload: " + *labels_path);
    }
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::optional<std::string>& labels_path) {
    const std::size_t m = ds.count(), h = ds.side();
    {
        FilePtr f(std::fopen(images_path.c_str(), "wb"));
        if (!f) throw IoError("cannot write " + images_path);
        write_u32_be(f.get(), kImageMagic);
        write_u32_be(f.get(), static_cast<std::uint32_t>(m));
        write_u32_be(f.get(), static_cast<std::uint32_t>(h));
        write_u32_be(f.get(), static_cast<std::uint32_t>(h));
        std::vector<unsigned char> row(h * h);
        for (std::size_t i = 0; i < m; ++i) {
            const double* src = ds.images.data() + i * h * h;
            for (std::size_t p = 0; p < row.size(); ++p)
                row[p] = static_cast<unsigned char>(std::lround(src[p] * 255.0));
            std::fwrite(row.data(), 1, row.size(), f.get());
        }
    }
    if (labels_path) {
        if (ds.labels.size() != m) throw ContractError("write_idx: labels missing or wrong length");
        FilePtr f(std::fopen(labels_path->c_str(), "wb"));
        if (!f) throw IoError("cannot write " + *labels_path);
        write_u32_be(f.get(), kLabelMagic);
        write_u32_be(f.get(), static_cast<std::uint32_t>(m));
        std::fwrite(ds.labels.data(), 1, m, f.get());
    }
}

Dataset synth_dataset(std::size_t count, std::size_t side, std::size_t clusters,
                      std::uint64_t seed, double noise) {
    if (count < 1) throw ConfigError("synth: count must be >= 1");
    if (side < 2) throw ConfigError("synth: side must be >= 2");
    if (clusters < 1) throw ConfigError("synth: clusters must be >= 1");
    if (noise < 0.0) throw ConfigError("synth: noise must be >= 0");

    Dataset ds;
    ds.images = Tensor({count, side, side});
    ds.labels.resize(count);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const double pi = 3.14159265358979323846;

    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t c = i % clusters;
        ds.labels[i] = static_cast<std::uint8_t>(c % 256);
        const double angle = pi * static_cast<double>(c) / static_cast<double>(clusters);
        const double freq = 1.5 + static_cast<double>(c % 4);
        const double phase = 0.7 * static_cast<double>(c);
        const double ca = std::cos(angle), sa = std::sin(angle);
        double* img = ds.images.data() + i * side * side;
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t cc = 0; cc < side; ++cc) {
                const double u = static_cast<double>(cc) / static_cast<double>(side);
                const double v = static_cast<double>(r) / static_cast<double>(side);
                double val = 0.5 + 0.45 * std::sin(2.0 * pi * freq * (u * ca + v * sa) + phase);
                val += noise * unif(rng);
                val = std::min(1.0, std::max(0.0, val));
                // Quantize to the byte grid so IDX round trips are identity.
                img[r * side + cc] = std::lround(val * 255.0) / 255.0;
            }
    }
    return ds;
}

}  // namespace arcvq
