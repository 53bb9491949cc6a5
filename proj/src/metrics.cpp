#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace arcvq {

namespace {

constexpr double kPsnrCap = 100.0;

double mse(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

}  // namespace

double psnr(const Tensor& x, const Tensor& x_hat, double peak) {
    if (!x.same_dims(x_hat))
        throw ShapeError("psnr: dims mismatch (" + x.dims_string() + ") vs (" +
                         x_hat.dims_string() + ")");
    if (peak <= 0.0) throw ContractError("psnr: peak must be > 0");
    const double e = mse(x, x_hat);
    if (e == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / e));
}

double ssim(const Tensor& x, const Tensor& x_hat, bool* global_fallback) {
    if (!x.same_dims(x_hat))
        throw ShapeError("ssim: dims mismatch (" + x.dims_string() + ") vs (" +
                         x_hat.dims_string() + ")");
    if (x.rank() != 2) throw ShapeError("ssim: expected single-channel 2-D images");
    const std::size_t h = x.rows(), w = x.cols();
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    constexpr std::size_t win = 11;

    if (h < win || w < win) {
        // Global-statistics fallback: one window covering the whole image.
        if (global_fallback) *global_fallback = true;
        const double n = static_cast<double>(x.size());
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            mx += x[i];
            my += x_hat[i];
        }
        mx /= n;
        my /= n;
        double vx = 0.0, vy = 0.0, cov = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            vx += (x[i] - mx) * (x[i] - mx);
            vy += (x_hat[i] - my) * (x_hat[i] - my);
            cov += (x[i] - mx) * (x_hat[i] - my);
        }
        vx /= n;
        vy /= n;
        cov /= n;
        return ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    if (global_fallback) *global_fallback = false;

    // 11-tap Gaussian, sigma 1.5, normalized.
    double kernel[win];
    {
        double sum = 0.0;
        for (std::size_t i = 0; i < win; ++i) {
            const double t = static_cast<double>(i) - 5.0;
            kernel[i] = std::exp(-t * t / (2.0 * 1.5 * 1.5));
            sum += kernel[i];
        }
        for (double& v : kernel) v /= sum;
    }

    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t r = 0; r + win <= h; ++r) {
        for (std::size_t c = 0; c + win <= w; ++c) {
            double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
            for (std::size_t i = 0; i < win; ++i) {
                for (std::size_t j = 0; j < win; ++j) {
                    const double wgt = kernel[i] * kernel[j];
                    const double a = x(r + i, c + j);
                    const double b = x_hat(r + i, c + j);
                    mx += wgt * a;
                    my += wgt * b;
                    xx += wgt * a * a;
                    yy += wgt * b * b;
                    xy += wgt * a * b;
                }
            }
            const double vx = xx - mx * mx;
            const double vy = yy - my * my;
            const double cov = xy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

Tensor pca_components(const Tensor& rows, std::size_t count) {
    if (rows.rank() != 2) throw ShapeError("pca: expected 2-D input");
    const std::size_t n = rows.rows(), d = rows.cols();
    count = std::min(count, d);

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += rows(i, j);
    for (double& v : mean) v /= static_cast<double>(n);

    Tensor centered({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered(i, j) = rows(i, j) - mean[j];

    Tensor cov = matmul_tn(centered, centered);
    for (std::size_t i = 0; i < cov.size(); ++i) cov[i] /= static_cast<double>(n);

    Tensor comps({count, d});
    for (std::size_t c = 0; c < count; ++c) {
        // Deterministic start, re-orthogonalized against earlier components
        // every sweep to keep the basis orthonormal even under slow
        // convergence.
        std::vector<double> v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = 1.0 + 0.001 * static_cast<double>(j + c);
        for (int iter = 0; iter < 100; ++iter) {
            std::vector<double> nv(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) nv[i] += cov(i, j) * v[j];
            for (std::size_t prev = 0; prev < c; ++prev) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += nv[j] * comps(prev, j);
                for (std::size_t j = 0; j < d; ++j) nv[j] -= dot * comps(prev, j);
            }
            const double norm = l2_norm(nv);
            if (norm < 1e-300) {
                // Degenerate direction (rank-deficient input): fall back to a
                // basis vector orthogonalized against earlier components.
                std::fill(nv.begin(), nv.end(), 0.0);
                nv[c % d] = 1.0;
                for (std::size_t prev = 0; prev < c; ++prev) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < d; ++j) dot += nv[j] * comps(prev, j);
                    for (std::size_t j = 0; j < d; ++j) nv[j] -= dot * comps(prev, j);
                }
                const double fn = l2_norm(nv);
                if (fn > 0.0)
                    for (double& t : nv) t /= fn;
                v = nv;
                break;
            }
            for (double& t : nv) t /= norm;
            v = nv;
        }
        for (std::size_t j = 0; j < d; ++j) comps(c, j) = v[j];
    }
    return comps;
}

Tensor latent_map_rgb(const QuantizationResult& qr, const Codebook& cb, std::size_t grid_h,
                      std::size_t grid_w) {
    const std::size_t n = qr.indices.size();
    if (n != grid_h * grid_w)
        throw ContractError("latent_map: token count " + std::to_string(n) +
                            " does not match grid " + std::to_string(grid_h) + "x" +
                            std::to_string(grid_w));
    const std::size_t d = cb.dim();
    const std::size_t ncomp = std::min<std::size_t>(3, d);
    const Tensor comps = pca_components(cb.entries, ncomp);

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < cb.entry_count(); ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += cb.entries(i, j);
    for (double& v : mean) v /= static_cast<double>(cb.entry_count());

    Tensor coords({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = cb.entries.data() + static_cast<std::size_t>(qr.indices[i]) * d;
        for (std::size_t c = 0; c < ncomp; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += (row[j] - mean[j]) * comps(c, j);
            coords(i, c) = acc;
        }
    }

    Tensor rgb({grid_h, grid_w, 3});
    for (std::size_t c = 0; c < 3; ++c) {
        double lo = coords(0, c), hi = coords(0, c);
        for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, coords(i, c));
            hi = std::max(hi, coords(i, c));
        }
        const double span = hi - lo;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = span > 1e-12 ? (coords(i, c) - lo) / span : 0.0;
            rgb[i * 3 + c] = v;
        }
    }
    return rgb;
}

}  // namespace arcvq
