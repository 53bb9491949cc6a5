#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace arcvq {

// Images in [0,1] plus optional provenance labels (unused by training).
struct Dataset {
    Tensor images;                          // [MxHxH]
    std::vector<std::uint8_t> labels;       // [M] or empty
    std::size_t count() const { return images.dim(0); }
    std::size_t side() const { return images.dim(1); }
};

// Big-endian IDX: image magic 0x00000803 with dims [M,H,W], label magic
// 0x00000801 with dims [M]; pixel bytes scaled by 1/255.
Dataset load_idx(const std::string& images_path,
                 const std::optional<std::string>& labels_path = std::nullopt);

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::optional<std::string>& labels_path = std::nullopt);

// Synthetic stand-in: `clusters` distinct frequency/orientation gratings,
// assigned round-robin, plus uniform noise of the given amplitude, clamped to
// [0,1] and quantized to bytes so IDX round trips are exact. Labels hold the
// template index.
Dataset synth_dataset(std::size_t count, std::size_t side, std::size_t clusters,
                      std::uint64_t seed, double noise = 0.1);

}  // namespace arcvq
