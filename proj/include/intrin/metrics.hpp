#pragma once

#include "intrin/tensor.hpp"

#include <array>

namespace intrin {

// Image-quality metrics over [C,H,W] tensors restricted to a binary mask
// [1,H,W] (foreground = mask > 0.5). Only masked pixels ever enter a value:
// editing background pixels changes nothing. Empty masks are errors.

// Scale-invariant depth MSE: with d = log(pred) - log(gt) over mask pixels,
// mean(d^2) - mean(d)^2 (the log-residual variance). Depths under the mask
// must be strictly positive.
double si_depth_mse(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// 10 log10(1 / MSE) over masked pixels and channels, returned in dB and
// capped at 99 (identical inputs hit the cap).
double psnr(const Tensor& a, const Tensor& b, const Tensor& mask);

// SSIM with an 11x11 Gaussian window (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2),
// averaged over channels and masked window centers. Each window clips to the
// image and keeps only masked pixels; the Gaussian weights renormalize over
// that support, so masks narrower than the window still evaluate.
double ssim(const Tensor& a, const Tensor& b, const Tensor& mask);

// Mean angular deviation in degrees: arccos(clamp(pred . gt, -1, 1)) over
// masked pixels. Inputs are [3,H,W] unit-vector fields.
double normal_angle_error(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Albedo metrics after the per-channel least-squares brightness fit
// s_c = sum(pred*gt) / sum(pred^2) over the mask; the scaled prediction is
// clamped to [0,1] before PSNR/SSIM. A channel that is identically zero
// under the mask has no fit and is an error.
struct SiAlbedo {
    double psnr = 0.0;
    double ssim = 0.0;
    std::array<double, 3> scale{1, 1, 1};
};
SiAlbedo si_albedo_metrics(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Perceptual stand-in used wherever reconstructions are ranked:
// 0.5 * masked L1 + 0.5 * (1 - SSIM), evaluated at full resolution and at a
// 2x bilinear downsample, averaged. If downsampling empties the mask (or the
// image is a single pixel wide), the full-resolution value stands alone.
double recon_proxy_error(const Tensor& a, const Tensor& b, const Tensor& mask);

} // namespace intrin
