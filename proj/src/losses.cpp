#include "losses.hpp"

#include <cmath>

#include "diag.hpp"
#include "parallel.hpp"

namespace arcvq {

const char* to_string(Variant v) {
    switch (v) {
        case Variant::vanilla: return "vanilla";
        case Variant::cosine_only: return "cosine-only";
        case Variant::bbnr_only: return "bbnr-only";
        case Variant::fixed_bound: return "fixed-bound";
        case Variant::full: return "full";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "vanilla") return Variant::vanilla;
    if (s == "cosine-only") return Variant::cosine_only;
    if (s == "bbnr-only") return Variant::bbnr_only;
    if (s == "fixed-bound") return Variant::fixed_bound;
    if (s == "full") return Variant::full;
    throw ConfigError("unknown variant: " + s);
}

bool variant_has_arc(Variant v) {
    return v == Variant::fixed_bound || v == Variant::full;
}

bool variant_has_bound(Variant v) {
    return v == Variant::bbnr_only || v == Variant::fixed_bound || v == Variant::full;
}

bool variant_spherical_quantize(Variant v) {
    return v == Variant::cosine_only || v == Variant::fixed_bound || v == Variant::full;
}

bool variant_spherical_init(Variant v) {
    return v == Variant::bbnr_only || v == Variant::fixed_bound || v == Variant::full;
}

void LossConfig::validate() const {
    if (beta <= 0.0) throw ConfigError("loss config: beta must be > 0");
    if (s <= 0.0) throw ConfigError("loss config: s must be > 0");
    if (m < 0.0) throw ConfigError("loss config: m must be >= 0");
    if (k < 1) throw ConfigError("loss config: k must be >= 1");
    if (gamma0 < 0.0) throw ConfigError("loss config: gamma0 must be >= 0");
    if (lambda < 0.0) throw ConfigError("loss config: lambda must be >= 0");
}

VqLossParts vq_loss(const Tensor& x, const Var& x_hat, const Var& z_e, const Var& cb_rows,
                    double beta) {
    if (!x.same_dims(x_hat.value()))
        throw ShapeError("vq_loss: x dims (" + x.dims_string() + ") vs x_hat (" +
                         x_hat.value().dims_string() + ")");
    if (!z_e.value().same_dims(cb_rows.value()))
        throw ShapeError("vq_loss: z_e dims (" + z_e.value().dims_string() + ") vs quantized (" +
                         cb_rows.value().dims_string() + ")");

    VqLossParts parts;
    parts.recon = reduce_mean(square(sub(constant(x), x_hat)));
    // Codebook term: gradient flows into the gathered rows only; the encoder
    // side is frozen.
    parts.codebook = reduce_mean(square(sub(cb_rows, detach(z_e))));
    // Commitment term: the quantized rows are frozen, the encoder moves.
    parts.commit = reduce_mean(square(sub(constant(cb_rows.value()), z_e)));
    parts.total = add(add(parts.recon, parts.codebook), scale(parts.commit, beta));
    return parts;
}

namespace {

constexpr double kCosClampEps = 1e-7;
constexpr double kNormEps = 1e-12;
constexpr double kPi = 3.14159265358979323846;

}  // namespace

Var arc_loss(const Var& z, const Tensor& codebook_entries, const NeighborSets& sets,
             double s, double m, std::int64_t* overflow_pairs, const Tensor* cos_table) {
    const Tensor& zv = z.value();
    if (zv.rank() != 2) throw ShapeError("arc_loss: expected 2-D tokens, got (" + zv.dims_string() + ")");
    const std::size_t n = zv.rows(), d = zv.cols(), k = codebook_entries.rows();
    if (n == 0) throw ContractError("arc_loss: empty batch");
    if (codebook_entries.cols() != d)
        throw ShapeError("arc_loss: token dim " + std::to_string(d) + " vs codebook dim " +
                         std::to_string(codebook_entries.cols()));
    if (sets.members.size() != k)
        throw ContractError("arc_loss: neighbor sets built for a different codebook");
    ++diag::counters().arc_loss;

    auto ehat = std::make_shared<Tensor>(normalize_rows(codebook_entries, kNormEps));

    // cos[i][j], clamped away from +-1 so the angle-addition gradient stays
    // bounded; the gate zeroes the gradient where the clamp saturates.
    auto table = std::make_shared<Tensor>();
    if (cos_table != nullptr) {
        if (cos_table->rank() != 2 || cos_table->rows() != n || cos_table->cols() != k)
            throw ShapeError("arc_loss: cos table dims (" + cos_table->dims_string() + ")");
        *table = *cos_table;
    } else {
        *table = matmul_nt(normalize_rows(zv, kNormEps), *ehat);
    }

    const double lo = -1.0 + kCosClampEps, hi = 1.0 - kCosClampEps;
    auto gate = std::make_shared<std::vector<unsigned char>>(n * k, 1);
    {
        double* c = table->data();
        unsigned char* g = gate->data();
        for (std::size_t i = 0; i < n * k; ++i) {
            if (c[i] < lo) {
                c[i] = lo;
                g[i] = 0;
            } else if (c[i] > hi) {
                c[i] = hi;
                g[i] = 0;
            }
        }
    }

    auto pos = std::make_shared<std::vector<unsigned char>>(n * k, 0);
    for (std::size_t j = 0; j < k; ++j)
        for (int i : sets.members[j]) (*pos)[static_cast<std::size_t>(i) * k + j] = 1;

    const double cos_m = std::cos(m), sin_m = std::sin(m);
    const double overflow_cos = std::cos(kPi - m);

    // Per entry j: L_j = lse(all logits) - lse(positive logits), so the loss
    // is non-negative and exactly zero when every token is positive. The
    // softmax tables are kept for the backward pass, which then needs no
    // further transcendental calls on the NxK grid.
    auto soft_all = std::make_shared<Tensor>(Tensor({n, k}));
    auto soft_pos = std::make_shared<Tensor>(Tensor({n, k}));
    std::vector<double> lse_all(k), lse_pos(k);
    std::int64_t overflow = 0;
    {
        std::vector<double> max_all(k, -1e300), max_pos(k, -1e300);
        std::vector<double> logits(n * k);
        const double* c = table->data();
        const unsigned char* p = pos->data();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t idx = i * k + j;
                double l;
                if (p[idx]) {
                    const double sin_t = std::sqrt(1.0 - c[idx] * c[idx]);
                    l = s * (c[idx] * cos_m - sin_t * sin_m);
                    if (m > 0.0 && c[idx] < overflow_cos) ++overflow;
                    if (l > max_pos[j]) max_pos[j] = l;
                } else {
                    l = s * c[idx];
                }
                logits[idx] = l;
                if (l > max_all[j]) max_all[j] = l;
            }
        }
        std::vector<double> sum_all(k, 0.0), sum_pos(k, 0.0);
        double* sa = soft_all->data();
        double* sp = soft_pos->data();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t idx = i * k + j;
                const double ea = std::exp(logits[idx] - max_all[j]);
                sa[idx] = ea;
                sum_all[j] += ea;
                if (p[idx]) {
                    const double ep = std::exp(logits[idx] - max_pos[j]);
                    sp[idx] = ep;
                    sum_pos[j] += ep;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                sa[i * k + j] /= sum_all[j];
                if (p[i * k + j]) sp[i * k + j] /= sum_pos[j];
            }
        }
        for (std::size_t j = 0; j < k; ++j) {
            lse_all[j] = max_all[j] + std::log(sum_all[j]);
            lse_pos[j] = max_pos[j] + std::log(sum_pos[j]);
        }
    }
    if (overflow_pairs != nullptr) *overflow_pairs = overflow;

    double loss = 0.0;
    for (std::size_t j = 0; j < k; ++j) loss += lse_all[j] - lse_pos[j];
    loss /= static_cast<double>(k);

    auto node = std::make_shared<Node>();
    node->value = Tensor::scalar(loss);
    node->op = "arc_loss";
    node->parents = {z.node()};
    node->requires_grad = z.node()->requires_grad;
    if (node->requires_grad) {
        auto pz = z.node();
        node->backward_fn = [pz, ehat, table, gate, pos, soft_all, soft_pos, n, d, k, s, cos_m,
                             sin_m](Node& self) {
            if (!pz->requires_grad) return;
            if (!pz->has_grad) {
                pz->grad = Tensor(pz->value.dims());
                pz->has_grad = true;
            }
            const double g_up = self.grad[0];
            const double inv_k = 1.0 / static_cast<double>(k);
            const double* c = table->data();
            const unsigned char* gt = gate->data();
            const unsigned char* p = pos->data();
            const double* sa = soft_all->data();
            const double* sp = soft_pos->data();

            // coeff[i][j] = dL/d(raw cos[i][j])
            Tensor coeff({n, k});
            double* cf = coeff.data();
            parallel_for(n, [&](std::size_t r0, std::size_t r1) {
                for (std::size_t i = r0; i < r1; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t idx = i * k + j;
                        if (!gt[idx]) {
                            cf[idx] = 0.0;
                            continue;
                        }
                        double dlogit_dcos;
                        if (p[idx]) {
                            const double sin_t = std::sqrt(1.0 - c[idx] * c[idx]);
                            dlogit_dcos = s * (cos_m + sin_m * c[idx] / sin_t);
                        } else {
                            dlogit_dcos = s;
                        }
                        cf[idx] = g_up * inv_k * (sa[idx] - sp[idx]) * dlogit_dcos;
                    }
                }
            });

            // dL/dzhat_i = sum_j coeff[i][j] ehat_j, then through the sphere
            // map: dL/dz_i = (G_i - (G_i . zhat_i) zhat_i) / ||z_i||. Rows at
            // the eps guard use the linear map z/eps instead.
            const Tensor big_g = matmul(coeff, *ehat);
            const double* zp = pz->value.data();
            const double* gp = big_g.data();
            double* dst = pz->grad.data();
            parallel_for(n, [&](std::size_t r0, std::size_t r1) {
                for (std::size_t i = r0; i < r1; ++i) {
                    const double* zi = zp + i * d;
                    const double* gi = gp + i * d;
                    double* di = dst + i * d;
                    const double norm = l2_norm({zi, d});
                    if (norm > kNormEps) {
                        double dot = 0.0;
                        for (std::size_t c2 = 0; c2 < d; ++c2) dot += gi[c2] * (zi[c2] / norm);
                        for (std::size_t c2 = 0; c2 < d; ++c2)
                            di[c2] += (gi[c2] - dot * (zi[c2] / norm)) / norm;
                    } else {
                        for (std::size_t c2 = 0; c2 < d; ++c2) di[c2] += gi[c2] / kNormEps;
                    }
                }
            });
        };
    }
    return Var(node);
}

double gamma_schedule(std::int64_t t, double gamma0, double lambda) {
    if (t < 0) throw ContractError("gamma_schedule: negative step");
    return gamma0 * std::exp(-lambda * static_cast<double>(t));
}

}  // namespace arcvq
