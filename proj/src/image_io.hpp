#pragma once

#include <string>

#include "tensor.hpp"

namespace arcvq {

// Binary 8-bit grayscale PGM (P5). Values expected in [0,1]; clamped.
void write_pgm(const Tensor& img, const std::string& path);

// PGM with min-max scaling of the input range to [0,255].
void write_pgm_minmax(const Tensor& img, const std::string& path);

// Binary 8-bit RGB PPM (P6) from an [HxWx3] tensor with values in [0,1].
void write_ppm(const Tensor& rgb, const std::string& path);

}  // namespace arcvq
