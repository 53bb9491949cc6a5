#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace arcvq {

enum class BoundMode { exponential, fixed_one, unbounded };

const char* to_string(BoundMode m);
BoundMode bound_mode_from_string(const std::string& s);

// The KxD learnable codebook together with its norm-bound schedule state and
// the usage counters of the current evaluation window.
struct Codebook {
    Tensor entries;                    // [KxD]
    double alpha = 3e-4;               // bound growth rate per step
    std::int64_t step = 0;             // training-step counter t
    BoundMode bound_mode = BoundMode::exponential;
    std::vector<std::int64_t> usage;   // per-entry selection counts, one eval window

    std::size_t entry_count() const { return entries.rows(); }
    std::size_t dim() const { return entries.cols(); }
};

// Rows drawn i.i.d. uniform on (-1,1)^d, then projected to the unit sphere.
Codebook init_codebook(std::size_t k, std::size_t d, std::uint64_t seed);

// Baseline initialization: the same uniform draw without normalization.
Codebook init_codebook_uniform(std::size_t k, std::size_t d, std::uint64_t seed);

// Upper bound M(t) on entry norms. Exponential mode: exp(alpha*t); fixed-one:
// 1; unbounded: +inf.
double norm_bound(std::int64_t t, double alpha, BoundMode mode);
double current_bound(const Codebook& cb);

// Rescales every row with norm above M(t) back onto the ball surface,
// preserving direction. Rows inside the ball (and zero rows) are untouched.
void apply_bound(Codebook& cb);

struct CodebookStats {
    std::vector<double> norms;        // [K]
    Tensor pairwise;                  // [KxK] Euclidean distances
    double usage_fraction = 0.0;      // |{k: count>0}| / K
    double perplexity = 1.0;          // exp(entropy) of selection distribution
    std::size_t zero_norm_count = 0;  // rows that collapsed to zero
};

CodebookStats compute_stats(const Codebook& cb);

void record_usage(Codebook& cb, std::span<const int> indices);
void reset_usage(Codebook& cb);

// Lloyd's algorithm over the rows with farthest-point seeding. Chosen seed
// rows are ordered ascending, so reducing to the full K on a codebook with
// distinct rows returns it unchanged. Ties break toward the lowest centroid
// index; an emptied cluster is re-seeded from the farthest row.
Codebook kmeans_reduce(const Codebook& cb, std::size_t k_target, std::size_t iters,
                       std::uint64_t seed);

// Stats exports: norms.csv, pairwise.csv, usage.csv and a min-max scaled
// grayscale heatmap pairwise.pgm, all under dir.
void write_stats_files(const Codebook& cb, const CodebookStats& stats, const std::string& dir);

}  // namespace arcvq
