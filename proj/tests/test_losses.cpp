#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "losses.hpp"

using namespace arcvq;

namespace {

Tensor random_rows(std::size_t n, std::size_t d, std::mt19937_64& rng, double lo = -2.0,
                   double hi = 2.0) {
    std::uniform_real_distribution<double> unif(lo, hi);
    Tensor t({n, d});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = unif(rng);
    return t;
}

// Reference evaluation straight from the definition: arccos angles, explicit
// cos(theta+m) on the positive pairs, plain exponential sums. Shares nothing
// with the fused node's log-space route.
double naive_arc_loss(const Tensor& z, const Tensor& cb, const NeighborSets& sets, double s,
                      double m) {
    const std::size_t n = z.rows(), k = cb.rows();
    const Tensor zn = normalize_rows(z);
    const Tensor en = normalize_rows(cb);
    double loss = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<bool> is_pos(n, false);
        for (int i : sets.members[j]) is_pos[static_cast<std::size_t>(i)] = true;
        double pos_sum = 0.0, neg_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double cos = 0.0;
            for (std::size_t c = 0; c < z.cols(); ++c) cos += zn(i, c) * en(j, c);
            cos = std::min(1.0 - 1e-7, std::max(-1.0 + 1e-7, cos));
            if (is_pos[i]) {
                const double theta = std::acos(cos);
                pos_sum += std::exp(s * std::cos(theta + m));
            } else {
                neg_sum += std::exp(s * cos);
            }
        }
        loss += -std::log(pos_sum / (pos_sum + neg_sum));
    }
    return loss / static_cast<double>(k);
}

NeighborSets sets_for(const Tensor& z, const Tensor& cb, std::size_t k) {
    return top_k_sets(matmul_nt(normalize_rows(z), normalize_rows(cb)), k);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("vq_loss: zero residuals zero the matching terms") {
    Tensor x({2, 2, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.3;
    Var x_hat = constant(x);
    Tensor ztv({4, 3});
    for (std::size_t i = 0; i < ztv.size(); ++i) ztv[i] = 0.7;
    Var z_e = parameter(ztv);
    Var rows = constant(ztv);
    const VqLossParts parts = vq_loss(x, x_hat, z_e, rows, 0.25);
    CHECK(parts.recon.value()[0] == 0.0);
    CHECK(parts.codebook.value()[0] == 0.0);
    CHECK(parts.commit.value()[0] == 0.0);
    CHECK(parts.total.value()[0] == 0.0);
}

TEST_CASE("vq_loss: constant residual of 0.1 over 100 elements gives recon 0.01") {
    Tensor x({1, 10, 10});
    Tensor xh({1, 10, 10});
    for (std::size_t i = 0; i < xh.size(); ++i) xh[i] = 0.1;
    Tensor zt({4, 2});
    const VqLossParts parts = vq_loss(x, constant(xh), parameter(zt), constant(zt), 0.25);
    CHECK(parts.recon.value()[0] == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("vq_loss gradient routing") {
    std::mt19937_64 rng(12);
    Tensor x({1, 4, 4});
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = unif(rng);

    Tensor cb_t = random_rows(5, 3, rng);
    Tensor z_t = random_rows(4, 3, rng);
    const std::vector<int> idx = {0, 2, 2, 4};

    Var cb = parameter(cb_t);
    Var z_e = parameter(z_t);
    Var rows = gather_rows(cb, idx);

    SUBCASE("codebook term reaches only the codebook") {
        const VqLossParts parts = vq_loss(x, constant(x), z_e, rows, 0.25);
        backward(parts.codebook);
        CHECK(cb.has_grad());
        bool cb_nonzero = false;
        for (std::size_t i = 0; i < cb.grad().size(); ++i)
            if (cb.grad()[i] != 0.0) cb_nonzero = true;
        CHECK(cb_nonzero);
        // The encoder side is behind a stop-gradient.
        if (z_e.has_grad())
            for (std::size_t i = 0; i < z_e.grad().size(); ++i) CHECK(z_e.grad()[i] == 0.0);
        // Unselected entries get no update; selected ones do.
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(cb.grad()(1, c) == 0.0);
            CHECK(cb.grad()(3, c) == 0.0);
        }
    }

    SUBCASE("commitment term reaches only the encoder") {
        const VqLossParts parts = vq_loss(x, constant(x), z_e, rows, 0.25);
        backward(parts.commit);
        CHECK(z_e.has_grad());
        bool z_nonzero = false;
        for (std::size_t i = 0; i < z_e.grad().size(); ++i)
            if (z_e.grad()[i] != 0.0) z_nonzero = true;
        CHECK(z_nonzero);
        if (cb.has_grad())
            for (std::size_t i = 0; i < cb.grad().size(); ++i) CHECK(cb.grad()[i] == 0.0);
    }

    SUBCASE("shape mismatches are rejected") {
        CHECK_THROWS_AS(vq_loss(Tensor({2, 2}), constant(Tensor({2, 3})), z_e, rows, 0.25),
                        ShapeError);
    }
}

TEST_CASE("arc_loss: hand-evaluated single-entry case") {
    // One positive token aligned with the entry (cos -> 1), one orthogonal
    // negative; s=1, m=0: loss = ln(1 + e^-1) up to the 1e-7 cosine clamp.
    Tensor z({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor cb({1, 2}, {1.0, 0.0});
    const NeighborSets sets = sets_for(z, cb, 1);
    REQUIRE(sets.members[0] == std::vector<int>{0});
    Var loss = arc_loss(constant(z), cb, sets, 1.0, 0.0);
    CHECK(loss.value()[0] == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-6));
}

TEST_CASE("arc_loss: vacuous negatives give exactly zero") {
    std::mt19937_64 rng(3);
    Tensor z = random_rows(4, 3, rng);
    Tensor cb = random_rows(2, 3, rng);
    const NeighborSets sets = sets_for(z, cb, 8);  // k >= N: everything positive
    Var loss = arc_loss(constant(z), cb, sets, 10.0, 0.0);
    CHECK(loss.value()[0] == 0.0);
}

TEST_CASE("arc_loss matches the naive definition on random instances") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + rng() % 8, k = 1 + rng() % 5, d = 2 + rng() % 6;
        const std::size_t topk = 1 + rng() % 3;
        const double s = 1.0 + (rng() % 190) / 10.0;  // up to 20
        const double m = (rng() % 100) / 100.0;       // up to 1.0
        Tensor z = random_rows(n, d, rng);
        Tensor cb = random_rows(k, d, rng);
        const NeighborSets sets = sets_for(z, cb, topk);
        Var loss = arc_loss(constant(z), cb, sets, s, m);
        const double ref = naive_arc_loss(z, cb, sets, s, m);
        CHECK(loss.value()[0] == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("arc_loss analytic gradient vs finite differences (spec instance)") {
    std::mt19937_64 rng(2718);
    Tensor z = random_rows(6, 5, rng);
    Tensor cb = random_rows(4, 5, rng);
    const NeighborSets sets = sets_for(z, cb, 3);
    auto builder = [&](const std::vector<Var>& in) {
        return arc_loss(in[0], cb, sets, 10.0, 0.1);
    };
    const GradCheckReport rep = grad_check(builder, {z}, 2e-4, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("stop-gradient: the codebook receives exactly nothing from arc_loss") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng() % 6, k = 1 + rng() % 4, d = 2 + rng() % 5;
        Tensor z_t = random_rows(n, d, rng);
        Tensor cb_t = random_rows(k, d, rng);
        const NeighborSets sets = sets_for(z_t, cb_t, 2);

        // Probe A: gradient of the arc term alone. The codebook parameter
        // node never appears on the arc path, so its gradient stays absent.
        Var cb_node = parameter(cb_t);
        Var z = parameter(z_t);
        Var arc = arc_loss(z, cb_node.value(), sets, 10.0, 0.1);
        backward(arc);
        CHECK(z.has_grad());
        if (cb_node.has_grad())
            for (std::size_t i = 0; i < cb_node.grad().size(); ++i)
                CHECK(cb_node.grad()[i] == 0.0);

        // Probe B: adding the arc term to a codebook-touching objective
        // leaves the codebook gradient bit-identical.
        std::vector<int> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(rng() % k);
        Var cb1 = parameter(cb_t);
        Var z1 = parameter(z_t);
        backward(reduce_mean(square(sub(gather_rows(cb1, idx), detach(z1)))));

        Var cb2 = parameter(cb_t);
        Var z2 = parameter(z_t);
        Var vq_term = reduce_mean(square(sub(gather_rows(cb2, idx), detach(z2))));
        Var total = add(vq_term, scale(arc_loss(z2, cb2.value(), sets, 10.0, 0.1), 0.7));
        backward(total);
        for (std::size_t i = 0; i < cb1.grad().size(); ++i)
            CHECK(cb1.grad()[i] == cb2.grad()[i]);
    }
}

TEST_CASE("arc_loss is non-negative") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 10, k = 1 + rng() % 6, d = 2 + rng() % 6;
        Tensor z = random_rows(n, d, rng);
        Tensor cb = random_rows(k, d, rng);
        const NeighborSets sets = sets_for(z, cb, 1 + rng() % 4);
        const double s = 1.0 + (rng() % 190) / 10.0;
        const double m = (rng() % 100) / 100.0;
        Var loss = arc_loss(constant(z), cb, sets, s, m);
        CHECK(loss.value()[0] >= 0.0);
    }
}

TEST_CASE("margin monotonicity while positive angles stay below pi") {
    std::mt19937_64 rng(66);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 3 + rng() % 5, k = 1 + rng() % 3, d = 2 + rng() % 4;
        Tensor z = random_rows(n, d, rng);
        Tensor cb = random_rows(k, d, rng);
        const NeighborSets sets = sets_for(z, cb, 2);

        // Largest positive angle determines the admissible margin range.
        const Tensor cos_t = matmul_nt(normalize_rows(z), normalize_rows(cb));
        double max_theta = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            for (int i : sets.members[j]) {
                const double c =
                    std::min(1.0 - 1e-7, std::max(-1.0 + 1e-7, cos_t(static_cast<std::size_t>(i), j)));
                max_theta = std::max(max_theta, std::acos(c));
            }
        const double pi = std::acos(-1.0);
        const double m_max = pi - max_theta;
        if (m_max <= 0.0) continue;

        double prev = -1.0;
        for (int step = 0; step <= 8; ++step) {
            const double m = m_max * step / 8.0;
            Var loss = arc_loss(constant(z), cb, sets, 10.0, m);
            if (step > 0) CHECK(loss.value()[0] >= prev - 1e-12);
            prev = loss.value()[0];
        }
    }
}

TEST_CASE("alignment: loss non-increasing as the positive cosine rises") {
    // One entry at (1,0); positive token sweeps from 90 degrees to aligned
    // while two negatives stay fixed.
    Tensor cb({1, 2}, {1.0, 0.0});
    double prev = 1e300;
    for (int step = 0; step <= 20; ++step) {
        const double phi = (std::acos(-1.0) / 2.0) * (1.0 - step / 20.0);
        Tensor z({3, 2},
                 {std::cos(phi), std::sin(phi), -0.8, 0.6, -0.2, -0.9});
        NeighborSets sets;
        sets.k = 1;
        sets.members = {{0}};
        Var loss = arc_loss(constant(z), cb, sets, 10.0, 0.1);
        CHECK(loss.value()[0] <= prev + 1e-12);
        prev = loss.value()[0];
    }
}

TEST_CASE("overflow diagnostic counts positive pairs with theta + m > pi") {
    // Positive token nearly opposite to the entry: theta close to pi, so any
    // positive margin pushes past pi.
    Tensor z({2, 2}, {-1.0, 0.01, 0.9, 0.1});
    Tensor cb({1, 2}, {1.0, 0.0});
    NeighborSets sets;
    sets.k = 1;
    sets.members = {{0}};
    std::int64_t overflow = 0;
    arc_loss(constant(z), cb, sets, 10.0, 0.5, &overflow);
    CHECK(overflow == 1);

    std::int64_t none = 0;
    NeighborSets aligned;
    aligned.k = 1;
    aligned.members = {{1}};
    arc_loss(constant(z), cb, aligned, 10.0, 0.5, &none);
    CHECK(none == 0);
}

TEST_CASE("gamma schedule") {
    CHECK(gamma_schedule(0, 1.0, 5e-4) == 1.0);
    CHECK(gamma_schedule(0, 0.25, 5e-4) == 0.25);
    CHECK(gamma_schedule(2000, 1.0, 5e-4) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(gamma_schedule(999999, 0.7, 0.0) == 0.7);
    CHECK_THROWS_AS(gamma_schedule(-1, 1.0, 5e-4), ContractError);
}

TEST_CASE("all residuals zero and vacuous negatives: total of zero") {
    Tensor x({1, 2, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5;
    Tensor zt({2, 2}, {0.6, 0.8, 0.0, 1.0});
    const VqLossParts parts = vq_loss(x, constant(x), parameter(zt), constant(zt), 0.25);
    const NeighborSets sets = sets_for(zt, zt, 5);  // k >= N
    Var arc = arc_loss(parameter(zt), zt, sets, 10.0, 0.0);
    Var total = add(parts.total, scale(arc, 1.0));
    CHECK(total.value()[0] == 0.0);
}

TEST_CASE("loss config validation") {
    LossConfig lc;
    lc.validate();
    lc.beta = 0.0;
    CHECK_THROWS_AS(lc.validate(), ConfigError);
    lc.beta = 0.25;
    lc.k = 0;
    CHECK_THROWS_AS(lc.validate(), ConfigError);
}

TEST_CASE("variant table") {
    CHECK(variant_from_string("vanilla") == Variant::vanilla);
    CHECK(variant_from_string("cosine-only") == Variant::cosine_only);
    CHECK(variant_from_string("bbnr-only") == Variant::bbnr_only);
    CHECK(variant_from_string("fixed-bound") == Variant::fixed_bound);
    CHECK(variant_from_string("full") == Variant::full);
    CHECK_THROWS_AS(variant_from_string("bogus"), ConfigError);

    CHECK_FALSE(variant_has_arc(Variant::vanilla));
    CHECK_FALSE(variant_has_arc(Variant::cosine_only));
    CHECK_FALSE(variant_has_arc(Variant::bbnr_only));
    CHECK(variant_has_arc(Variant::fixed_bound));
    CHECK(variant_has_arc(Variant::full));

    CHECK_FALSE(variant_has_bound(Variant::vanilla));
    CHECK_FALSE(variant_has_bound(Variant::cosine_only));
    CHECK(variant_has_bound(Variant::bbnr_only));

    CHECK_FALSE(variant_spherical_quantize(Variant::vanilla));
    CHECK(variant_spherical_quantize(Variant::cosine_only));
    CHECK_FALSE(variant_spherical_quantize(Variant::bbnr_only));

    CHECK_FALSE(variant_spherical_init(Variant::vanilla));
    CHECK_FALSE(variant_spherical_init(Variant::cosine_only));
    CHECK(variant_spherical_init(Variant::bbnr_only));
}

}  // TEST_SUITE
