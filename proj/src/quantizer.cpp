#include "quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "diag.hpp"
#include "parallel.hpp"

namespace arcvq {

const char* to_string(QuantizeMode m) {
    return m == QuantizeMode::euclidean ? "euclidean" : "spherical";
}

Tensor normalize_rows(const Tensor& v, double eps) {
    if (v.rank() != 2) throw ShapeError("normalize_rows: expected 2-D tensor, got (" + v.dims_string() + ")");
    if (eps <= 0.0) throw ContractError("normalize_rows: eps must be > 0");
    ++diag::counters().normalize_rows;
    const std::size_t n = v.rows(), d = v.cols();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = v.data() + i * d;
        double* dst = out.data() + i * d;
        const double norm = std::max(l2_norm({src, d}), eps);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] / norm;
    }
    return out;
}

QuantizationResult quantize(const Tensor& z, const Codebook& cb, QuantizeMode mode) {
    if (z.rank() != 2) throw ShapeError("quantize: expected 2-D tokens, got (" + z.dims_string() + ")");
    if (cb.entry_count() == 0) throw ConfigError("quantize: empty codebook");
    const std::size_t n = z.rows(), d = z.cols(), k = cb.entry_count();
    if (d != cb.dim())
        throw ShapeError("quantize: token dim " + std::to_string(d) + " vs codebook dim " +
                         std::to_string(cb.dim()));

    QuantizationResult qr;
    qr.mode = mode;
    qr.indices.resize(n);

    if (mode == QuantizeMode::spherical) {
        const Tensor zn = normalize_rows(z);
        const Tensor en = normalize_rows(cb.entries);
        qr.cos_table = matmul_nt(zn, en);
        double* ct = qr.cos_table.data();
        parallel_for(n, [&](std::size_t r0, std::size_t r1) {
            for (std::size_t i = r0; i < r1; ++i) {
                double* row = ct + i * k;
                std::size_t best = 0;
                double best_cos = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < k; ++j) {
                    row[j] = std::min(1.0, std::max(-1.0, row[j]));
                    if (row[j] > best_cos) {
                        best_cos = row[j];
                        best = j;
                    }
                }
                qr.indices[i] = static_cast<int>(best);
            }
        });
    } else {
        // ||z - e||^2 = ||z||^2 - 2 z.e + ||e||^2; the z term is constant per
        // token and dropped.
        const Tensor dots = matmul_nt(z, cb.entries);
        std::vector<double> e2(k);
        for (std::size_t j = 0; j < k; ++j)
            e2[j] = [&] {
                const double* row = cb.entries.data() + j * d;
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) acc += row[c] * row[c];
                return acc;
            }();
        const double* dp = dots.data();
        parallel_for(n, [&](std::size_t r0, std::size_t r1) {
            for (std::size_t i = r0; i < r1; ++i) {
                const double* row = dp + i * k;
                std::size_t best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < k; ++j) {
                    const double dd = e2[j] - 2.0 * row[j];
                    if (dd < best_d) {
                        best_d = dd;
                        best = j;
                    }
                }
                qr.indices[i] = static_cast<int>(best);
            }
        });
    }

    qr.quantized = Tensor({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = cb.entries.data() + static_cast<std::size_t>(qr.indices[i]) * d;
        std::copy(row, row + d, qr.quantized.data() + i * d);
    }
    return qr;
}

Tensor angles(const Tensor& cos_table, double eps) {
    if (eps <= 0.0 || eps > 1e-3) throw ContractError("angles: eps must be in (0, 1e-3]");
    Tensor out(cos_table.dims());
    const double lo = -1.0 + eps, hi = 1.0 - eps;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::acos(std::min(hi, std::max(lo, cos_table[i])));
    return out;
}

NeighborSets top_k_sets(const Tensor& cos_table, std::size_t k) {
    if (cos_table.rank() != 2) throw ShapeError("top_k_sets: expected 2-D cosine table");
    if (k < 1) throw ContractError("top_k_sets: k must be >= 1");
    const std::size_t n = cos_table.rows(), kk = cos_table.cols();
    const std::size_t take = std::min(k, n);
    NeighborSets sets;
    sets.k = k;
    sets.members.assign(kk, {});
    // Insertion scan: take is tiny (the top-k ablation grid caps at 8), so an
    // O(N*take) pass beats sorting machinery. Ordering is (cos desc, token
    // asc); the scan in ascending token order preserves that tie-break.
    parallel_for(kk, [&](std::size_t c0, std::size_t c1) {
        std::vector<int> best(take);
        std::vector<double> val(take);
        for (std::size_t j = c0; j < c1; ++j) {
            std::size_t filled = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double c = cos_table(i, j);
                std::size_t pos;
                if (filled < take) {
                    pos = filled++;
                } else if (c > val[take - 1]) {
                    pos = take - 1;
                } else {
                    continue;
                }
                // Strict comparison: equal cosines keep the earlier token first.
                while (pos > 0 && val[pos - 1] < c) {
                    val[pos] = val[pos - 1];
                    best[pos] = best[pos - 1];
                    --pos;
                }
                val[pos] = c;
                best[pos] = static_cast<int>(i);
            }
            sets.members[j].assign(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(filled));
        }
    });
    return sets;
}

}  // namespace arcvq
