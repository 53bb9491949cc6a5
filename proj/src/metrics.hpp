#pragma once

#include "codebook.hpp"
#include "quantizer.hpp"
#include "tensor.hpp"

namespace arcvq {

struct EvalReport {
    double l1 = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    double usage_fraction = 0.0;
    double perplexity = 1.0;
    bool ssim_global_fallback = false;  // set when images are below the window size
};

// 10*log10(peak^2/MSE); identical inputs return the 100 dB cap.
double psnr(const Tensor& x, const Tensor& x_hat, double peak = 1.0);

// Standard single-channel SSIM: 11x11 Gaussian window (sigma 1.5),
// C1=(0.01)^2, C2=(0.03)^2 at dynamic range 1, averaged over valid window
// positions. Images smaller than the window fall back to one global window;
// *global_fallback reports which path ran.
double ssim(const Tensor& x, const Tensor& x_hat, bool* global_fallback = nullptr);

// Fig-style latent map: top-3 PCA components of the mean-centered codebook
// rows (power iteration with deflation), each token's assigned entry
// projected to RGB, channels min-max scaled per image. d < 3 pads the
// missing channels with zeros.
Tensor latent_map_rgb(const QuantizationResult& qr, const Codebook& cb, std::size_t grid_h,
                      std::size_t grid_w);

// Top `count` principal components (rows) of the mean-centered input rows.
Tensor pca_components(const Tensor& rows, std::size_t count);

}  // namespace arcvq
