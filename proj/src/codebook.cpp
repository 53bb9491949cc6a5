#include "codebook.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "diag.hpp"
#include "image_io.hpp"

namespace arcvq {

const char* to_string(BoundMode m) {
    switch (m) {
        case BoundMode::exponential: return "exponential";
        case BoundMode::fixed_one: return "fixed-one";
        case BoundMode::unbounded: return "unbounded";
    }
    return "?";
}

BoundMode bound_mode_from_string(const std::string& s) {
    if (s == "exponential") return BoundMode::exponential;
    if (s == "fixed-one") return BoundMode::fixed_one;
    if (s == "unbounded") return BoundMode::unbounded;
    throw ConfigError("unknown bound mode: " + s);
}

static Codebook draw_uniform(std::size_t k, std::size_t d, std::uint64_t seed) {
    if (k < 1) throw ConfigError("codebook: K must be >= 1");
    if (d < 2) throw ConfigError("codebook: d must be >= 2");
    Codebook cb;
    cb.entries = Tensor({k, d});
    cb.usage.assign(k, 0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < d; ++j) cb.entries(i, j) = unif(rng);
    return cb;
}

Codebook init_codebook(std::size_t k, std::size_t d, std::uint64_t seed) {
    Codebook cb = draw_uniform(k, d, seed);
    std::mt19937_64 redraw_rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (std::size_t i = 0; i < k; ++i) {
        double* row = cb.entries.data() + i * d;
        double norm = l2_norm({row, d});
        while (norm == 0.0) {
            for (std::size_t j = 0; j < d; ++j) row[j] = unif(redraw_rng);
            norm = l2_norm({row, d});
        }
        for (std::size_t j = 0; j < d; ++j) row[j] /= norm;
    }
    return cb;
}

Codebook init_codebook_uniform(std::size_t k, std::size_t d, std::uint64_t seed) {
    return draw_uniform(k, d, seed);
}

double norm_bound(std::int64_t t, double alpha, BoundMode mode) {
    if (t < 0) throw ContractError("norm_bound: negative step");
    if (alpha < 0.0) throw ContractError("norm_bound: negative alpha");
    switch (mode) {
        case BoundMode::exponential: return std::exp(alpha * static_cast<double>(t));
        case BoundMode::fixed_one: return 1.0;
        case BoundMode::unbounded: return std::numeric_limits<double>::infinity();
    }
    return 1.0;
}

double current_bound(const Codebook& cb) {
    return norm_bound(cb.step, cb.alpha, cb.bound_mode);
}

void apply_bound(Codebook& cb) {
    ++diag::counters().apply_bound;
    if (!cb.entries.all_finite())
        throw NumericError("apply_bound: non-finite codebook entry at step " +
                           std::to_string(cb.step));
    const double bound = current_bound(cb);
    if (!std::isfinite(bound)) return;
    const std::size_t k = cb.entry_count(), d = cb.dim();
    for (std::size_t i = 0; i < k; ++i) {
        double* row = cb.entries.data() + i * d;
        const double norm = l2_norm({row, d});
        if (norm > bound) {
            const double f = bound / norm;
            for (std::size_t j = 0; j < d; ++j) row[j] *= f;
        }
    }
}

CodebookStats compute_stats(const Codebook& cb) {
    const std::size_t k = cb.entry_count(), d = cb.dim();
    CodebookStats st;
    st.norms.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        st.norms[i] = l2_norm({cb.entries.data() + i * d, d});
        if (st.norms[i] == 0.0) ++st.zero_norm_count;
    }
    st.pairwise = Tensor({k, k});
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            double acc = 0.0;
            const double* a = cb.entries.data() + i * d;
            const double* b = cb.entries.data() + j * d;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = a[c] - b[c];
                acc += diff * diff;
            }
            const double dist = std::sqrt(acc);
            st.pairwise(i, j) = dist;
            st.pairwise(j, i) = dist;
        }
    }
    std::int64_t total = 0;
    std::size_t active = 0;
    for (std::int64_t c : cb.usage) {
        total += c;
        if (c > 0) ++active;
    }
    st.usage_fraction = static_cast<double>(active) / static_cast<double>(k);
    if (total > 0) {
        double entropy = 0.0;
        for (std::int64_t c : cb.usage) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / static_cast<double>(total);
            entropy -= p * std::log(p);
        }
        st.perplexity = std::exp(entropy);
    } else {
        st.perplexity = 1.0;
    }
    return st;
}

void record_usage(Codebook& cb, std::span<const int> indices) {
    for (int i : indices) {
        if (i < 0 || static_cast<std::size_t>(i) >= cb.entry_count())
            throw ContractError("record_usage: index out of range");
        ++cb.usage[static_cast<std::size_t>(i)];
    }
}

void reset_usage(Codebook& cb) {
    std::fill(cb.usage.begin(), cb.usage.end(), 0);
}

Codebook kmeans_reduce(const Codebook& cb, std::size_t k_target, std::size_t iters,
                       std::uint64_t seed) {
    const std::size_t k = cb.entry_count(), d = cb.dim();
    if (k_target < 1 || k_target > k)
        throw ConfigError("kmeans_reduce: K_target must be in [1," + std::to_string(k) + "]");

    auto dist2 = [&](const double* a, const double* b) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = a[c] - b[c];
            acc += diff * diff;
        }
        return acc;
    };
    auto row = [&](std::size_t i) { return cb.entries.data() + i * d; };

    // Farthest-point seeding: random first pick, then repeatedly the row
    // farthest from its nearest chosen seed (ties toward the lowest index).
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> seeds;
    seeds.reserve(k_target);
    std::vector<double> nearest(k, std::numeric_limits<double>::infinity());
    std::vector<char> chosen(k, 0);
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    seeds.push_back(first);
    chosen[first] = 1;
    for (std::size_t i = 0; i < k; ++i) nearest[i] = dist2(row(i), row(first));
    while (seeds.size() < k_target) {
        std::size_t best = k;
        double best_d = -1.0;
        for (std::size_t i = 0; i < k; ++i) {
            if (chosen[i]) continue;
            if (nearest[i] > best_d) {
                best_d = nearest[i];
                best = i;
            }
        }
        seeds.push_back(best);
        chosen[best] = 1;
        for (std::size_t i = 0; i < k; ++i)
            nearest[i] = std::min(nearest[i], dist2(row(i), row(best)));
    }
    std::sort(seeds.begin(), seeds.end());

    Tensor centroids({k_target, d});
    for (std::size_t c = 0; c < k_target; ++c)
        std::copy(row(seeds[c]), row(seeds[c]) + d, centroids.data() + c * d);

    std::vector<std::size_t> assign(k, 0);
    for (std::size_t it = 0; it < iters; ++it) {
        // Assignment, ties toward the lowest centroid index.
        for (std::size_t i = 0; i < k; ++i) {
            double best_d = std::numeric_limits<double>::infinity();
            std::size_t best = 0;
            for (std::size_t c = 0; c < k_target; ++c) {
                const double dd = dist2(row(i), centroids.data() + c * d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            assign[i] = best;
        }
        // Means.
        Tensor next({k_target, d});
        std::vector<std::size_t> counts(k_target, 0);
        for (std::size_t i = 0; i < k; ++i) {
            double* crow = next.data() + assign[i] * d;
            const double* r = row(i);
            for (std::size_t c = 0; c < d; ++c) crow[c] += r[c];
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k_target; ++c) {
            if (counts[c] == 0) {
                // Re-seed from the row farthest from its assigned centroid.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < k; ++i) {
                    const double dd = dist2(row(i), centroids.data() + assign[i] * d);
                    if (dd > far_d) {
                        far_d = dd;
                        far = i;
                    }
                }
                std::copy(row(far), row(far) + d, next.data() + c * d);
            } else {
                double* crow = next.data() + c * d;
                for (std::size_t cc = 0; cc < d; ++cc) crow[cc] /= static_cast<double>(counts[c]);
            }
        }
        centroids = std::move(next);
    }

    Codebook out;
    out.entries = std::move(centroids);
    out.alpha = cb.alpha;
    out.step = cb.step;
    out.bound_mode = cb.bound_mode;
    out.usage.assign(k_target, 0);
    return out;
}

void write_stats_files(const Codebook& cb, const CodebookStats& stats, const std::string& dir) {
    const std::size_t k = cb.entry_count();
    {
        FILE* f = std::fopen((dir + "/norms.csv").c_str(), "w");
        if (!f) throw IoError("cannot write " + dir + "/norms.csv");
        std::fprintf(f, "index,norm\n");
        for (std::size_t i = 0; i < k; ++i) std::fprintf(f, "%zu,%.12g\n", i, stats.norms[i]);
        std::fclose(f);
    }
    {
        FILE* f = std::fopen((dir + "/pairwise.csv").c_str(), "w");
        if (!f) throw IoError("cannot write " + dir + "/pairwise.csv");
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j)
                std::fprintf(f, "%s%.12g", j ? "," : "", stats.pairwise(i, j));
            std::fprintf(f, "\n");
        }
        std::fclose(f);
    }
    {
        FILE* f = std::fopen((dir + "/usage.csv").c_str(), "w");
        if (!f) throw IoError("cannot write " + dir + "/usage.csv");
        std::fprintf(f, "index,count\n");
        for (std::size_t i = 0; i < k; ++i)
            std::fprintf(f, "%zu,%lld\n", i, static_cast<long long>(cb.usage[i]));
        std::fclose(f);
    }
    write_pgm_minmax(stats.pairwise, dir + "/pairwise.pgm");
}

}  // namespace arcvq
