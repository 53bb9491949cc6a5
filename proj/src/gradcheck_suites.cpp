#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "quantizer.hpp"

namespace arcvq {

namespace {

constexpr double kEps = 1e-5;
constexpr double kOpsTol = 1e-6;

Tensor random_tensor(std::vector<std::size_t> dims, std::mt19937_64& rng, double lo = -2.0,
                     double hi = 2.0) {
    std::uniform_real_distribution<double> unif(lo, hi);
    Tensor t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = unif(rng);
    return t;
}

// Draws from [-2,2] excluding a band around each kink.
Tensor random_away_from(std::vector<std::size_t> dims, std::mt19937_64& rng,
                        const std::vector<double>& kinks, double margin) {
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    Tensor t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v;
        bool ok;
        do {
            v = unif(rng);
            ok = true;
            for (double k : kinks)
                if (std::fabs(v - k) < margin) ok = false;
        } while (!ok);
        t[i] = v;
    }
    return t;
}

SuiteCheck fd_check(const std::string& name, const GraphBuilder& f,
                    const std::vector<Tensor>& inputs, double tol = kOpsTol, double eps = kEps) {
    const GradCheckReport rep = grad_check(f, inputs, eps, tol);
    return {name, rep.max_rel_err, tol, rep.pass};
}

// Weighted sum so every output element receives a distinct upstream gradient.
Var weighted_sum(const Var& v, const Tensor& weights) {
    return reduce_sum(mul(v, constant(weights)));
}

}  // namespace

std::vector<SuiteCheck> gradcheck_ops_suite() {
    std::mt19937_64 rng(20240817);
    std::vector<SuiteCheck> checks;

    const Tensor w23 = random_tensor({2, 3}, rng);
    checks.push_back(fd_check("add", [&](const std::vector<Var>& in) {
        return weighted_sum(add(in[0], in[1]), w23);
    }, {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}));

    checks.push_back(fd_check("sub", [&](const std::vector<Var>& in) {
        return weighted_sum(sub(in[0], in[1]), w23);
    }, {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}));

    checks.push_back(fd_check("mul", [&](const std::vector<Var>& in) {
        return weighted_sum(mul(in[0], in[1]), w23);
    }, {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}));

    checks.push_back(fd_check("scale", [&](const std::vector<Var>& in) {
        return weighted_sum(scale(in[0], -1.7), w23);
    }, {random_tensor({2, 3}, rng)}));

    const Tensor w24 = random_tensor({2, 4}, rng);
    checks.push_back(fd_check("matmul", [&](const std::vector<Var>& in) {
        return weighted_sum(matmul(in[0], in[1]), w24);
    }, {random_tensor({2, 3}, rng), random_tensor({3, 4}, rng)}));

    checks.push_back(fd_check("bias_add", [&](const std::vector<Var>& in) {
        return weighted_sum(bias_add(in[0], in[1]), w23);
    }, {random_tensor({2, 3}, rng), random_tensor({3}, rng)}));

    checks.push_back(fd_check("relu", [&](const std::vector<Var>& in) {
        return weighted_sum(relu(in[0]), w23);
    }, {random_away_from({2, 3}, rng, {0.0}, 0.1)}));

    checks.push_back(fd_check("tanh", [&](const std::vector<Var>& in) {
        return weighted_sum(tanh_op(in[0]), w23);
    }, {random_tensor({2, 3}, rng)}));

    checks.push_back(fd_check("square", [&](const std::vector<Var>& in) {
        return weighted_sum(square(in[0]), w23);
    }, {random_tensor({2, 3}, rng)}));

    checks.push_back(fd_check("sqrt", [&](const std::vector<Var>& in) {
        return weighted_sum(sqrt_op(in[0]), w23);
    }, {random_tensor({2, 3}, rng, 0.5, 2.5)}));

    checks.push_back(fd_check("clamp", [&](const std::vector<Var>& in) {
        return weighted_sum(clamp(in[0], -1.0, 1.0), w23);
    }, {random_away_from({2, 3}, rng, {-1.0, 1.0}, 0.1)}));

    const Tensor w6 = random_tensor({6}, rng);
    checks.push_back(fd_check("reshape", [&](const std::vector<Var>& in) {
        return weighted_sum(reshape(in[0], {6}), w6);
    }, {random_tensor({2, 3}, rng)}));

    const Tensor w32 = random_tensor({3, 2}, rng);
    checks.push_back(fd_check("transpose", [&](const std::vector<Var>& in) {
        return weighted_sum(transpose(in[0]), w32);
    }, {random_tensor({2, 3}, rng)}));

    checks.push_back(fd_check("reduce_sum", [&](const std::vector<Var>& in) {
        return reduce_sum(mul(in[0], constant(w23)));
    }, {random_tensor({2, 3}, rng)}));

    checks.push_back(fd_check("reduce_mean", [&](const std::vector<Var>& in) {
        return reduce_mean(mul(in[0], constant(w23)));
    }, {random_tensor({2, 3}, rng)}));

    const Tensor w2 = random_tensor({2}, rng);
    checks.push_back(fd_check("logsumexp", [&](const std::vector<Var>& in) {
        return weighted_sum(logsumexp(in[0]), w2);
    }, {random_tensor({2, 5}, rng)}));

    const std::vector<int> gather_idx = {1, 0, 1, 2};  // repeats test scatter accumulation
    const Tensor w43 = random_tensor({4, 3}, rng);
    checks.push_back(fd_check("gather_rows", [&](const std::vector<Var>& in) {
        return weighted_sum(gather_rows(in[0], gather_idx), w43);
    }, {random_tensor({3, 3}, rng)}));

    std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    checks.push_back(fd_check("permute", [&](const std::vector<Var>& in) {
        return weighted_sum(reshape(permute(in[0], {6}, perm), {2, 3}), w23);
    }, {random_tensor({2, 3}, rng)}));

    // detach and the straight-through estimator have definitional gradients;
    // they are checked analytically rather than against finite differences.
    {
        Tensor x = random_tensor({4}, rng);
        Var xv = parameter(x);
        Var root = reduce_sum(mul(detach(xv), xv));
        backward(root);
        double err = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            err = std::max(err, std::fabs(xv.grad()[i] - x[i]));
        checks.push_back({"detach", err, kOpsTol, err == 0.0});
    }
    {
        Tensor x = random_tensor({4}, rng);
        Var xv = parameter(x);
        Var root = reduce_sum(detach(square(xv)));
        backward(root);
        double err = 0.0;
        if (xv.has_grad())
            for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::fabs(xv.grad()[i]));
        checks.push_back({"detach_cuts_ancestors", err, kOpsTol, err == 0.0});
    }
    {
        Tensor z = random_tensor({2, 3}, rng);
        Tensor q = random_tensor({2, 3}, rng);
        Var zv = parameter(z);
        Var root = reduce_sum(mul(quantize_ste(zv, q), constant(w23)));
        backward(root);
        double err = 0.0;
        for (std::size_t i = 0; i < w23.size(); ++i)
            err = std::max(err, std::fabs(zv.grad()[i] - w23[i]));
        checks.push_back({"quantize_ste", err, kOpsTol, err == 0.0});
    }
    return checks;
}

std::vector<SuiteCheck> gradcheck_arcloss_suite() {
    std::vector<SuiteCheck> checks;
    const double ss[] = {5.0, 10.0, 20.0};
    const double ms[] = {0.1, 0.5, 1.0};
    const std::size_t ks[] = {1, 3, 8};
    constexpr double tol = 1e-4;

    std::mt19937_64 rng(777);
    for (double s : ss)
        for (double m : ms)
            for (std::size_t k : ks)
                for (int rep = 0; rep < 4; ++rep) {
                    const std::size_t n = 5 + static_cast<std::size_t>(rng() % 4);  // 5..8
                    const std::size_t kk = 3 + static_cast<std::size_t>(rng() % 3); // 3..5
                    const std::size_t d = 4 + static_cast<std::size_t>(rng() % 3);  // 4..6
                    Tensor z = random_tensor({n, d}, rng);
                    Tensor cb = random_tensor({kk, d}, rng);
                    // Neighbor sets are frozen at the base point: membership is
                    // piecewise constant in z, so differentiating through a
                    // fixed assignment is the smooth function being checked.
                    const Tensor cos0 = arcvq::matmul_nt(normalize_rows(z), normalize_rows(cb));
                    const NeighborSets sets = top_k_sets(cos0, k);

                    auto builder = [&](const std::vector<Var>& in) {
                        return arc_loss(in[0], cb, sets, s, m);
                    };
                    char name[96];
                    std::snprintf(name, sizeof name, "arcloss s=%g m=%g k=%zu rep=%d", s, m, k, rep);
                    // eps balances roundoff (~1e-16/eps on saturated softmax
                    // coordinates against the 1e-8 denominator floor) and
                    // truncation (~(s*eps)^2) across the s grid.
                    checks.push_back(fd_check(name, builder, {z}, tol, 2e-4));
                }
    return checks;
}

std::vector<SuiteCheck> gradcheck_pipeline_suite() {
    std::vector<SuiteCheck> checks;
    std::mt19937_64 rng(4242);
    constexpr double tol = 1e-5;

    for (int rep = 0; rep < 3; ++rep) {
        const std::size_t side = 8, patch = 4, d = 3, hidden = 6, b = 2;
        PatchAutoencoder m = PatchAutoencoder::init(side, patch, d, hidden, rng());
        Tensor images({b, side, side});
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t i = 0; i < images.size(); ++i) images[i] = unif(rng);

        // The straight-through estimator is checked at the quantizer's fixed
        // point (q == z): the value path then matches the identity the STE
        // backward assumes, so finite differences are applicable to every
        // encoder and decoder parameter. Frozen non-trivial q would make the
        // value path locally constant in the encoder by construction.
        auto builder = [&](const std::vector<Var>& in) {
            PatchAutoencoder shape = m;
            ModelNodes nodes;
            nodes.enc_w1 = in[0];
            nodes.enc_b1 = in[1];
            nodes.enc_w2 = in[2];
            nodes.enc_b2 = in[3];
            nodes.dec_w1 = in[4];
            nodes.dec_b1 = in[5];
            nodes.dec_w2 = in[6];
            nodes.dec_b2 = in[7];
            Var z = encode(shape, nodes, images);
            Var x_hat = decode(shape, nodes, quantize_ste(z, z.value()), b, side);
            return reduce_mean(square(sub(constant(images), x_hat)));
        };
        const std::vector<Tensor> params = {m.enc_w1, m.enc_b1, m.enc_w2, m.enc_b2,
                                            m.dec_w1, m.dec_b1, m.dec_w2, m.dec_b2};
        char name[64];
        std::snprintf(name, sizeof name, "pipeline rep=%d", rep);
        checks.push_back(fd_check(name, builder, params, tol));
    }
    return checks;
}

}  // namespace arcvq
