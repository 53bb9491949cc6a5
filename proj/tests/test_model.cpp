#include <doctest.h>

#include <cmath>
#include <random>

#include "model.hpp"

using namespace arcvq;

namespace {

Tensor random_images(std::size_t b, std::size_t side, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Tensor t({b, side, side});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = unif(rng);
    return t;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("token counts and ordering") {
    PatchAutoencoder m = PatchAutoencoder::init(28, 4, 8, 16, 1);
    CHECK(m.tokens_per_image() == 49);

    std::mt19937_64 rng(2);
    Tensor images = random_images(2, 28, rng);
    ModelNodes nodes = bind_parameters(m);
    Var z = encode(m, nodes, images);
    CHECK(z.value().rows() == 98);  // batch-major
    CHECK(z.value().cols() == 8);
}

TEST_CASE("make_patches is the exact pixel rearrangement") {
    // 1 image, side 4, patch 2: token grid 2x2, row-major pixels per patch.
    Tensor img({1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<double>(i);
    Tensor p = make_patches(img, 2);
    REQUIRE(p.rows() == 4);
    REQUIRE(p.cols() == 4);
    // Token 0 is the top-left patch: pixels (0,0),(0,1),(1,0),(1,1).
    CHECK(p(0, 0) == 0.0);
    CHECK(p(0, 1) == 1.0);
    CHECK(p(0, 2) == 4.0);
    CHECK(p(0, 3) == 5.0);
    // Token 1 is the top-right patch.
    CHECK(p(1, 0) == 2.0);
    CHECK(p(1, 3) == 7.0);

    // The inverse map restores the image exactly.
    const auto map = patches_to_image_map(1, 4, 2);
    for (std::size_t i = 0; i < 16; ++i) CHECK(p[map[i]] == img[i]);
}

TEST_CASE("indivisible side is rejected") {
    CHECK_THROWS_AS(PatchAutoencoder::init(30, 4, 8, 16, 0), ConfigError);
    PatchAutoencoder m = PatchAutoencoder::init(28, 4, 8, 16, 0);
    ModelNodes nodes = bind_parameters(m);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(encode(m, nodes, random_images(1, 27, rng)), ConfigError);
}

TEST_CASE("zero weights map everything to zero") {
    PatchAutoencoder m = PatchAutoencoder::init(8, 4, 3, 5, 7);
    for (Tensor* t : {&m.enc_w1, &m.enc_b1, &m.enc_w2, &m.enc_b2})
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = 0.0;
    std::mt19937_64 rng(3);
    ModelNodes nodes = bind_parameters(m);
    Var z = encode(m, nodes, random_images(2, 8, rng));
    for (std::size_t i = 0; i < z.value().size(); ++i) CHECK(z.value()[i] == 0.0);

    for (Tensor* t : {&m.dec_w1, &m.dec_b1, &m.dec_w2, &m.dec_b2})
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = 0.0;
    ModelNodes nodes2 = bind_parameters(m);
    Var x_hat = decode(m, nodes2, constant(Tensor({8, 3})), 2, 8);
    for (std::size_t i = 0; i < x_hat.value().size(); ++i) CHECK(x_hat.value()[i] == 0.0);
}

TEST_CASE("decode(encode(x)) is shape-clean for the spec instance") {
    PatchAutoencoder m = PatchAutoencoder::init(28, 4, 64, 32, 5);
    std::mt19937_64 rng(5);
    Tensor images = random_images(3, 28, rng);
    ModelNodes nodes = bind_parameters(m);
    Var z = encode(m, nodes, images);
    Var x_hat = decode(m, nodes, z, 3, 28);
    CHECK(x_hat.value().dims() == std::vector<std::size_t>{3, 28, 28});
    CHECK_THROWS_AS(decode(m, nodes, z, 2, 28), ShapeError);
}

TEST_CASE("patch locality: a token perturbs only its own patch") {
    PatchAutoencoder m = PatchAutoencoder::init(12, 4, 5, 7, 11);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(-1, 1);
    Tensor tokens({9, 5});
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = unif(rng);

    ModelNodes nodes = bind_parameters(m);
    const Tensor base = decode(m, nodes, constant(tokens), 1, 12).value();

    const std::size_t target_token = 4;  // grid position (1,1)
    Tensor poked = tokens;
    for (std::size_t c = 0; c < 5; ++c) poked(target_token, c) += 0.37;
    const Tensor out = decode(m, nodes, constant(poked), 1, 12).value();

    for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 0; c < 12; ++c) {
            const bool inside = (r / 4 == 1) && (c / 4 == 1);
            const double diff = std::fabs(out[r * 12 + c] - base[r * 12 + c]);
            if (inside) continue;
            CHECK(diff == 0.0);
        }
}

TEST_CASE("patch locality: gradient of a pixel reaches only its token") {
    PatchAutoencoder m = PatchAutoencoder::init(8, 4, 3, 6, 17);
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> unif(-1, 1);
    Tensor tokens({4, 3});
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = unif(rng);

    ModelNodes nodes = bind_parameters(m);
    Var tok = parameter(tokens);
    Var out = decode(m, nodes, tok, 1, 8);
    // Select pixel (1,2): inside patch (0,0) -> token 0.
    Tensor sel({1, 8, 8});
    sel[1 * 8 + 2] = 1.0;
    backward(reduce_sum(mul(out, constant(sel))));
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(tok.grad()(0, c) != 0.0);
        CHECK(tok.grad()(1, c) == 0.0);
        CHECK(tok.grad()(2, c) == 0.0);
        CHECK(tok.grad()(3, c) == 0.0);
    }
}

TEST_CASE("init is deterministic and within the fan-in bound") {
    PatchAutoencoder a = PatchAutoencoder::init(28, 4, 8, 16, 77);
    PatchAutoencoder b = PatchAutoencoder::init(28, 4, 8, 16, 77);
    for (std::size_t i = 0; i < a.enc_w1.size(); ++i) CHECK(a.enc_w1[i] == b.enc_w1[i]);
    const double bound = 1.0 / std::sqrt(16.0);
    for (std::size_t i = 0; i < a.enc_w1.size(); ++i) CHECK(std::fabs(a.enc_w1[i]) <= bound);
}

}  // TEST_SUITE
