#pragma once

#include "ddsr/tensor.hpp"

namespace ddsr {

// Images are [C,H,W] in [0,1]. Identical inputs report the 100 dB cap.
double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0);

// Structural similarity, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// valid-region average over channels.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

// Mean |amplitude(pred) - amplitude(gt)| over spectral bins with normalized
// radial frequency >= cutoff (Nyquist is 0.5), averaged over channels.
double high_band_amplitude_error(const Tensor<float>& pred, const Tensor<float>& gt,
                                 double cutoff = 0.25);

// Mean spectral amplitude in the band >= cutoff, single image.
double high_band_mass(const Tensor<float>& img, double cutoff = 0.25);

}  // namespace ddsr
