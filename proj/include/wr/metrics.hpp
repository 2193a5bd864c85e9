#pragma once

// Restoration quality metrics, computed in double precision on [0,1] images.
// PSNR returns +infinity for identical inputs. SSIM uses the standard 11x11
// Gaussian window (sigma 1.5, K1 0.01, K2 0.03, dynamic range 1), valid
// windows only, averaged over channels and batch.

#include "wr/tensor.hpp"

namespace wr::metrics {

// 10*log10(peak^2 / MSE) over every element; identical inputs -> +infinity.
double psnr(const Tensor4<double>& a, const Tensor4<double>& b, double peak = 1.0);
double psnr(const Tensor4<float>& a, const Tensor4<float>& b, double peak = 1.0);

// Mean local structural similarity; throws ArgumentError when the image is
// smaller than the 11x11 window.
double ssim(const Tensor4<double>& a, const Tensor4<double>& b);
double ssim(const Tensor4<float>& a, const Tensor4<float>& b);

}  // namespace wr::metrics
