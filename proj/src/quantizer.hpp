#pragma once

#include <string>
#include <vector>

#include "codebook.hpp"
#include "tensor.hpp"

namespace arcvq {

enum class QuantizeMode { euclidean, spherical };

const char* to_string(QuantizeMode m);

// Assignment of one batch of tokens to codebook entries.
struct QuantizationResult {
    std::vector<int> indices;  // [N], assigned entry per token
    Tensor quantized;          // [NxD], raw codebook rows gathered by indices
    Tensor cos_table;          // [NxK] of zhat_i . ehat_j (spherical mode only)
    QuantizeMode mode = QuantizeMode::euclidean;
};

// Per-codebook-entry positive sets: the top-k tokens by cosine.
struct NeighborSets {
    std::size_t k = 0;                       // requested k
    std::vector<std::vector<int>> members;   // [K], each sorted by descending
                                             // cosine, ties by ascending token
};

// Row-wise v / max(||v||, eps). Zero rows stay zero.
Tensor normalize_rows(const Tensor& v, double eps = 1e-12);

// Euclidean mode: argmin_j ||z_i - e_j||. Spherical mode: both sides are
// row-normalized and the entry with the largest inner product wins; the
// quantized values are the raw (unnormalized) codebook rows either way.
// Ties break toward the lowest entry index.
QuantizationResult quantize(const Tensor& z, const Codebook& cb, QuantizeMode mode);

// theta = arccos(clamp(cos, -1+eps, 1-eps)), elementwise.
Tensor angles(const Tensor& cos_table, double eps = 1e-7);

NeighborSets top_k_sets(const Tensor& cos_table, std::size_t k);

}  // namespace arcvq
