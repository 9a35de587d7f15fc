#pragma once

#include "ddsr/model.hpp"

namespace ddsr {

template <typename T>
struct FdaState {
    Tensor<T> f0f;                        // initial frequency-domain feature
    std::vector<Tensor<T>> stage_feats;   // F^f_n after each fusion block
    Spectrum<T> o_f;                      // predicted HR spectrum
    Tensor<T> o;                          // real(ifft2(O^f))
    double imag_residue = 0.0;
};

// F^f_0 = conv3x3(concat(Re, Im) of fft2(x))
template <typename T>
Tensor<T> init_freq_feature(const Tensor<T>& x, Model<T>& model);

// One fusion block: two residual refinements, the second consuming the
// projected spectrum of the stage's backbone group feature.
template <typename T>
Tensor<T> fusion_block(const Tensor<T>& prev, const Tensor<T>& group_feat, Model<T>& model,
                       int stage);

// Upsampler: conv to d^f*rho^2 channels, pixel shuffle, additive fusion of the
// projected spectrum of the backbone's penultimate HR feature, final conv to
// 2c channels split into (real, imag).
template <typename T>
Spectrum<T> freq_upsample(const Tensor<T>& feat, const Tensor<T>& penultimate_hr,
                          Model<T>& model);

// Full branch: init -> n^f fusion stages over the last n^f group features ->
// upsample -> inverse transform.
template <typename T>
FdaState<T> fda_forward(const Tensor<T>& x, const BackboneActs<T>& acts, Model<T>& model);

}  // namespace ddsr
