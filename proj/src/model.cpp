#include "model.hpp"

#include <cmath>
#include <random>

namespace arcvq {

namespace {

Tensor uniform_init(std::vector<std::size_t> dims, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Tensor t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = unif(rng);
    return t;
}

}  // namespace

PatchAutoencoder PatchAutoencoder::init(std::size_t image_side, std::size_t patch, std::size_t d,
                                        std::size_t hidden, std::uint64_t seed) {
    if (patch == 0 || image_side == 0 || image_side % patch != 0)
        throw ConfigError("model: image side " + std::to_string(image_side) +
                          " not divisible by patch " + std::to_string(patch));
    if (d < 1 || hidden < 1) throw ConfigError("model: d and hidden must be >= 1");
    PatchAutoencoder m;
    m.patch = patch;
    m.d = d;
    m.hidden = hidden;
    m.image_side = image_side;
    const std::size_t p2 = patch * patch;
    std::mt19937_64 rng(seed);
    m.enc_w1 = uniform_init({p2, hidden}, p2, rng);
    m.enc_b1 = uniform_init({hidden}, p2, rng);
    m.enc_w2 = uniform_init({hidden, d}, hidden, rng);
    m.enc_b2 = uniform_init({d}, hidden, rng);
    m.dec_w1 = uniform_init({d, hidden}, d, rng);
    m.dec_b1 = uniform_init({hidden}, d, rng);
    m.dec_w2 = uniform_init({hidden, p2}, hidden, rng);
    m.dec_b2 = uniform_init({p2}, hidden, rng);
    return m;
}

ModelNodes bind_parameters(const PatchAutoencoder& m) {
    ModelNodes n;
    n.enc_w1 = parameter(m.enc_w1);
    n.enc_b1 = parameter(m.enc_b1);
    n.enc_w2 = parameter(m.enc_w2);
    n.enc_b2 = parameter(m.enc_b2);
    n.dec_w1 = parameter(m.dec_w1);
    n.dec_b1 = parameter(m.dec_b1);
    n.dec_w2 = parameter(m.dec_w2);
    n.dec_b2 = parameter(m.dec_b2);
    return n;
}

Tensor make_patches(const Tensor& images, std::size_t patch) {
    if (images.rank() != 3 || images.dim(1) != images.dim(2))
        throw ShapeError("make_patches: expected [BxHxH] tensor, got (" + images.dims_string() + ")");
    const std::size_t b = images.dim(0), h = images.dim(1);
    if (patch == 0 || h % patch != 0)
        throw ConfigError("make_patches: image side " + std::to_string(h) +
                          " not divisible by patch " + std::to_string(patch));
    const std::size_t grid = h / patch, p2 = patch * patch;
    Tensor out({b * grid * grid, p2});
    const double* src = images.data();
    double* dst = out.data();
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t gr = 0; gr < grid; ++gr)
            for (std::size_t gc = 0; gc < grid; ++gc) {
                const std::size_t token = (bi * grid + gr) * grid + gc;
                for (std::size_t pr = 0; pr < patch; ++pr)
                    for (std::size_t pc = 0; pc < patch; ++pc)
                        dst[token * p2 + pr * patch + pc] =
                            src[bi * h * h + (gr * patch + pr) * h + (gc * patch + pc)];
            }
    return out;
}

std::vector<std::size_t> patches_to_image_map(std::size_t batch, std::size_t side,
                                              std::size_t patch) {
    const std::size_t grid = side / patch, p2 = patch * patch;
    std::vector<std::size_t> map(batch * side * side);
    for (std::size_t bi = 0; bi < batch; ++bi)
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t c = 0; c < side; ++c) {
                const std::size_t token = (bi * grid + r / patch) * grid + c / patch;
                const std::size_t within = (r % patch) * patch + (c % patch);
                map[bi * side * side + r * side + c] = token * p2 + within;
            }
    return map;
}

Var encode(const PatchAutoencoder& m, const ModelNodes& nodes, const Tensor& images) {
    const Tensor patches = make_patches(images, m.patch);
    Var h1 = tanh_op(bias_add(matmul(constant(patches), nodes.enc_w1), nodes.enc_b1));
    return bias_add(matmul(h1, nodes.enc_w2), nodes.enc_b2);
}

Var decode(const PatchAutoencoder& m, const ModelNodes& nodes, const Var& tokens,
           std::size_t batch, std::size_t side) {
    const std::size_t grid = side / m.patch;
    const std::size_t expected = batch * grid * grid;
    if (tokens.value().rank() != 2 || tokens.value().rows() != expected)
        throw ShapeError("decode: expected " + std::to_string(expected) + " tokens, got (" +
                         tokens.value().dims_string() + ")");
    Var h1 = tanh_op(bias_add(matmul(tokens, nodes.dec_w1), nodes.dec_b1));
    Var patches = bias_add(matmul(h1, nodes.dec_w2), nodes.dec_b2);
    return permute(patches, {batch, side, side}, patches_to_image_map(batch, side, m.patch));
}

}  // namespace arcvq
