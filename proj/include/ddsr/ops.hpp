#pragma once

#include "ddsr/tensor.hpp"

namespace ddsr {

// ---- elementwise ----
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

// ---- layout ----
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// NCHW channel axis
template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1);
template <typename T> Tensor<T> reflect_pad2d(const Tensor<T>& x, int bottom, int right);
template <typename T> Tensor<T> crop2d(const Tensor<T>& x, int h, int w);
// [N,C*s*s,H,W] -> [N,C,H*s,W*s]; channel c*s*s + dy*s + dx feeds offset (dy,dx)
template <typename T> Tensor<T> pixel_shuffle(const Tensor<T>& x, int s);
template <typename T> Tensor<T> pixel_unshuffle(const Tensor<T>& x, int s);
// [N,C,H,W] -> [nWindows, w*w, C]; H and W must be multiples of w
template <typename T> Tensor<T> window_partition(const Tensor<T>& x, int w);
template <typename T> Tensor<T> window_merge(const Tensor<T>& blocks, int w, int n, int c,
                                             int h, int wd);

// ---- linear algebra ----
// x[..., Din] @ w[Din, Dout] (+ b[Dout])
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b = nullptr);
// [B,m,k] x [B,k,n] -> [B,m,n]
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);
// [B,m,k] x [B,n,k]^T -> [B,m,n]
template <typename T> Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b);
// x[N,Ci,H,W], w[Co,Ci,kh,kw], stride 1, zero padding `pad` on both axes
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, int pad);
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int pad) {
    return conv2d<T>(x, w, nullptr, pad);
}

// ---- normalization / shaping over the last axis ----
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);

// ---- reductions ----
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);
// mean(|a - b|) over all elements
template <typename T> Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> void check_finite(const Tensor<T>& t, const char* what);

}  // namespace ddsr
