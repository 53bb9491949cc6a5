#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "graph.hpp"
#include "quantizer.hpp"

namespace arcvq {

enum class Variant { vanilla, cosine_only, bbnr_only, fixed_bound, full };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);
bool variant_has_arc(Variant v);
bool variant_has_bound(Variant v);
bool variant_spherical_quantize(Variant v);
bool variant_spherical_init(Variant v);

struct LossConfig {
    double beta = 0.25;   // commitment weight
    double s = 10.0;      // logit scale
    double m = 0.1;       // additive angular margin, radians
    std::size_t k = 3;    // top-k positives per entry
    double gamma0 = 1.0;  // initial arc term weight
    double lambda = 5e-4; // gamma decay rate per step
    Variant variant = Variant::full;

    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    double recon = 0.0;
    double codebook_term = 0.0;
    double commit_term = 0.0;
    std::optional<double> arc;
    std::optional<double> gamma_t;
    std::optional<double> M_t;
    std::int64_t arc_overflow_pairs = 0;  // positive pairs with theta + m > pi
};

struct VqLossParts {
    Var total;     // recon + codebook + beta*commit
    Var recon;
    Var codebook;  // reaches only the codebook entries
    Var commit;    // reaches only the encoder
};

// Eq-style VQ objective: mean reductions per term. x_hat must depend on the
// encoder through the straight-through path; cb_rows must be a gather of the
// codebook parameter so the codebook term updates the selected entries.
VqLossParts vq_loss(const Tensor& x, const Var& x_hat, const Var& z_e, const Var& cb_rows,
                    double beta);

// Fused arccosine additive-margin loss over one batch. Positive logits are
// s*cos(theta+m) over each entry's top-k token set, negatives s*cos(theta),
// evaluated in log space. The codebook enters as a plain tensor snapshot, so
// no gradient can reach it; backward produces the analytic gradient w.r.t. z
// including the row-normalization Jacobian.
//
// cos_table, when given, must equal the [NxK] table of normalized inner
// products for (z, codebook_entries) (values clamped to [-1,1]); passing it
// avoids recomputing the batch's largest matmul.
Var arc_loss(const Var& z, const Tensor& codebook_entries, const NeighborSets& sets,
             double s, double m, std::int64_t* overflow_pairs = nullptr,
             const Tensor* cos_table = nullptr);

double gamma_schedule(std::int64_t t, double gamma0, double lambda);

}  // namespace arcvq
