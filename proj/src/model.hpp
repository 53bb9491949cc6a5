#pragma once

#include <cstdint>
#include <vector>

#include "graph.hpp"

namespace arcvq {

// Shared per-patch MLP encoder/decoder: each non-overlapping pxp patch maps
// to one d-dimensional token (linear -> tanh -> linear each way). The token
// grid of a HxH image is (H/p)x(H/p), flattened batch-major then row-major.
struct PatchAutoencoder {
    std::size_t patch = 4;
    std::size_t d = 64;
    std::size_t hidden = 128;
    std::size_t image_side = 28;

    Tensor enc_w1, enc_b1, enc_w2, enc_b2;  // [p^2 x hidden],[hidden],[hidden x d],[d]
    Tensor dec_w1, dec_b1, dec_w2, dec_b2;  // [d x hidden],[hidden],[hidden x p^2],[p^2]

    static PatchAutoencoder init(std::size_t image_side, std::size_t patch, std::size_t d,
                                 std::size_t hidden, std::uint64_t seed);

    std::size_t tokens_per_image() const {
        const std::size_t g = image_side / patch;
        return g * g;
    }
};

// Parameter leaves for one training-step graph.
struct ModelNodes {
    Var enc_w1, enc_b1, enc_w2, enc_b2;
    Var dec_w1, dec_b1, dec_w2, dec_b2;
};

ModelNodes bind_parameters(const PatchAutoencoder& m);

// [BxHxH] images -> [N x p^2] patch matrix, N = B*(H/p)^2, tokens ordered
// batch-major, then grid row, then grid column; pixels row-major per patch.
Tensor make_patches(const Tensor& images, std::size_t patch);

// Flat source index per output pixel for reassembling images from the patch
// matrix (inverse of make_patches).
std::vector<std::size_t> patches_to_image_map(std::size_t batch, std::size_t side,
                                              std::size_t patch);

// images [BxHxH] -> tokens [Nxd]. H must be divisible by the patch size and
// pixel values are expected in [0,1].
Var encode(const PatchAutoencoder& m, const ModelNodes& nodes, const Tensor& images);

// tokens [Nxd] -> images [BxHxH]. Raw output; evaluation clamps to [0,1]
// outside the graph so training gradients are unaffected.
Var decode(const PatchAutoencoder& m, const ModelNodes& nodes, const Var& tokens,
           std::size_t batch, std::size_t side);

}  // namespace arcvq
