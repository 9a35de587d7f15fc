#pragma once

#include <complex>

#include "ddsr/ops.hpp"

namespace ddsr {

// In-place 2-D DFT of one H x W plane, orthonormal normalization
// (1/sqrt(H*W) in both directions). Handles arbitrary sizes: mixed radix
// 2/3/5 with a Bluestein fallback for other factors.
template <typename T>
void fft2_plane(std::complex<T>* data, int h, int w, bool inverse);

// Real/imaginary planes of a batch of 2-D spectra.
template <typename T>
struct Spectrum {
    Tensor<T> real;
    Tensor<T> imag;
};

// [N,C,H,W] -> [N,C,H,W,2] interleaved (re, im); differentiable linear map.
template <typename T> Tensor<T> fft2_packed(const Tensor<T>& x);
// slice of the last (size-2) axis
template <typename T> Tensor<T> complex_plane(const Tensor<T>& packed, int k);

template <typename T>
Spectrum<T> fft2(const Tensor<T>& x);

template <typename T>
struct Ifft2Result {
    Tensor<T> out;          // real part of the inverse transform
    double imag_residue;    // max |imaginary part|, diagnostic only
};

template <typename T>
Ifft2Result<T> ifft2(const Spectrum<T>& spec);

// Per-bin magnitude, optionally log(1+.), optionally rolled so DC sits at the
// plane center. Forward-only (no gradient).
template <typename T>
Tensor<T> amplitude_map(const Spectrum<T>& spec, bool log_scale, bool center_shift = true);

}  // namespace ddsr
