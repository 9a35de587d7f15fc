#include "ddsr/ops.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstring>
#include <thread>

namespace ddsr {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T> using MapM = Eigen::Map<RowMat<T>>;
template <typename T> using CMapM = Eigen::Map<const RowMat<T>>;

// Work is split into fixed-size blocks (independent of thread count) so that
// every Eigen kernel sees the same operand extents no matter how many
// workers run. Block contents are disjoint, so scheduling order is free.
void run_blocks(int64_t n, int64_t block, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    int64_t nb = (n + block - 1) / block;
    int nt = static_cast<int>(std::min<int64_t>(thread_count(), nb));
    if (nt <= 1) {
        for (int64_t b = 0; b < nb; ++b) fn(b * block, std::min(n, (b + 1) * block));
        return;
    }
    std::atomic<int64_t> next{0};
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (;;) {
            int64_t b = next.fetch_add(1);
            if (b >= nb) return;
            try {
                fn(b * block, std::min(n, (b + 1) * block));
            } catch (...) {
                if (!failed.exchange(true)) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

constexpr int64_t kGemmRowBlock = 256;

// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int64_t m, int64_t k, int64_t n, bool acc) {
    CMapM<T> a(A, m, k), b(B, k, n);
    MapM<T> c(C, m, n);
    run_blocks(m, kGemmRowBlock, [&](int64_t r0, int64_t r1) {
        if (acc)
            c.middleRows(r0, r1 - r0).noalias() += a.middleRows(r0, r1 - r0) * b;
        else
            c.middleRows(r0, r1 - r0).noalias() = a.middleRows(r0, r1 - r0) * b;
    });
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, int64_t m, int64_t k, int64_t n, bool acc) {
    CMapM<T> a(A, m, k), b(B, n, k);
    MapM<T> c(C, m, n);
    run_blocks(m, kGemmRowBlock, [&](int64_t r0, int64_t r1) {
        if (acc)
            c.middleRows(r0, r1 - r0).noalias() += a.middleRows(r0, r1 - r0) * b.transpose();
        else
            c.middleRows(r0, r1 - r0).noalias() = a.middleRows(r0, r1 - r0) * b.transpose();
    });
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int64_t m, int64_t k, int64_t n, bool acc) {
    CMapM<T> a(A, k, m), b(B, k, n);
    MapM<T> c(C, m, n);
    run_blocks(m, kGemmRowBlock, [&](int64_t r0, int64_t r1) {
        if (acc)
            c.middleRows(r0, r1 - r0).noalias() +=
                a.middleCols(r0, r1 - r0).transpose() * b;
        else
            c.middleRows(r0, r1 - r0).noalias() =
                a.middleCols(r0, r1 - r0).transpose() * b;
    });
}

template <typename T>
void acc_grad(TensorNode<T>& p, const T* g, int64_t n) {
    T* dst = p.grad_buf();
    for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

template <typename T>
Tensor<T> elementwise_binary(const Tensor<T>& a, const Tensor<T>& b, const char* what,
                             T (*fwd)(T, T),
                             std::function<void(TensorNode<T>&)> backward) {
    DDSR_CHECK(a.shape() == b.shape(), what << ": shape mismatch " << shape_str(a.shape())
                                            << " vs " << shape_str(b.shape()));
    int64_t n = a.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    parallel_for(n, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) out[static_cast<size_t>(i)] = fwd(pa[i], pb[i]);
    });
    return make_op<T>(a.shape(), std::move(out), {a, b}, std::move(backward));
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary<T>(a, b, "add", [](T x, T y) { return x + y; },
        [](TensorNode<T>& out) {
            int64_t n = static_cast<int64_t>(out.value.size());
            for (int i = 0; i < 2; ++i)
                if (out.parents[static_cast<size_t>(i)]->requires_grad)
                    acc_grad(*out.parents[static_cast<size_t>(i)], out.grad.data(), n);
        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary<T>(a, b, "sub", [](T x, T y) { return x - y; },
        [](TensorNode<T>& out) {
            int64_t n = static_cast<int64_t>(out.value.size());
            const T* g = out.grad.data();
            if (out.parents[0]->requires_grad) acc_grad(*out.parents[0], g, n);
            if (out.parents[1]->requires_grad) {
                T* dst = out.parents[1]->grad_buf();
                for (int64_t i = 0; i < n; ++i) dst[i] -= g[i];
            }
        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary<T>(a, b, "mul", [](T x, T y) { return x * y; },
        [](TensorNode<T>& out) {
            int64_t n = static_cast<int64_t>(out.value.size());
            const T* g = out.grad.data();
            const T* va = out.parents[0]->value.data();
            const T* vb = out.parents[1]->value.data();
            if (out.parents[0]->requires_grad) {
                T* dst = out.parents[0]->grad_buf();
                for (int64_t i = 0; i < n; ++i) dst[i] += g[i] * vb[i];
            }
            if (out.parents[1]->requires_grad) {
                T* dst = out.parents[1]->grad_buf();
                for (int64_t i = 0; i < n; ++i) dst[i] += g[i] * va[i];
            }
        });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    int64_t n = a.numel();
    std::vector<T> out(a.data());
    for (auto& v : out) v += s;
    return make_op<T>(a.shape(), std::move(out), {a}, [n](TensorNode<T>& o) {
        if (o.parents[0]->requires_grad) acc_grad(*o.parents[0], o.grad.data(), n);
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
    int64_t n = a.numel();
    std::vector<T> out(a.data());
    for (auto& v : out) v *= s;
    return make_op<T>(a.shape(), std::move(out), {a}, [n, s](TensorNode<T>& o) {
        if (!o.parents[0]->requires_grad) return;
        T* dst = o.parents[0]->grad_buf();
        const T* g = o.grad.data();
        for (int64_t i = 0; i < n; ++i) dst[i] += s * g[i];
    });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    int64_t n = x.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* px = x.ptr();
    parallel_for(n, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            double v = static_cast<double>(px[i]);
            out[static_cast<size_t>(i)] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
        }
    });
    return make_op<T>(x.shape(), std::move(out), {x}, [n](TensorNode<T>& o) {
        if (!o.parents[0]->requires_grad) return;
        const T* g = o.grad.data();
        const T* xv = o.parents[0]->value.data();
        T* dst = o.parents[0]->grad_buf();
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        for (int64_t i = 0; i < n; ++i) {
            double v = static_cast<double>(xv[i]);
            double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            dst[i] += g[i] * static_cast<T>(cdf + v * pdf);
        }
    });
}

// --------------------------------------------------------------------- layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    DDSR_CHECK(numel(shape) == x.numel(), "reshape: cannot view " << shape_str(x.shape())
                                              << " as " << shape_str(shape));
    int64_t n = x.numel();
    std::vector<T> out(x.data());
    return make_op<T>(std::move(shape), std::move(out), {x}, [n](TensorNode<T>& o) {
        if (o.parents[0]->requires_grad) acc_grad(*o.parents[0], o.grad.data(), n);
    });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    DDSR_CHECK(a.ndim() == 4 && b.ndim() == 4, "concat_channels expects NCHW tensors");
    DDSR_CHECK(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
               "concat_channels: incompatible shapes " << shape_str(a.shape()) << " vs "
                                                       << shape_str(b.shape()));
    int nb = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<T> out(static_cast<size_t>(nb) * (ca + cb) * plane);
    for (int s = 0; s < nb; ++s) {
        std::memcpy(out.data() + s * (ca + cb) * plane, a.ptr() + s * ca * plane,
                    sizeof(T) * static_cast<size_t>(ca * plane));
        std::memcpy(out.data() + s * (ca + cb) * plane + ca * plane, b.ptr() + s * cb * plane,
                    sizeof(T) * static_cast<size_t>(cb * plane));
    }
    return make_op<T>({nb, ca + cb, h, w}, std::move(out), {a, b},
                      [nb, ca, cb, plane](TensorNode<T>& o) {
                          const T* g = o.grad.data();
                          if (o.parents[0]->requires_grad) {
                              T* da = o.parents[0]->grad_buf();
                              for (int s = 0; s < nb; ++s)
                                  for (int64_t i = 0; i < ca * plane; ++i)
                                      da[s * ca * plane + i] += g[s * (ca + cb) * plane + i];
                          }
                          if (o.parents[1]->requires_grad) {
                              T* db = o.parents[1]->grad_buf();
                              for (int s = 0; s < nb; ++s)
                                  for (int64_t i = 0; i < cb * plane; ++i)
                                      db[s * cb * plane + i] +=
                                          g[s * (ca + cb) * plane + ca * plane + i];
                          }
                      });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1) {
    DDSR_CHECK(x.ndim() == 4, "slice_channels expects NCHW");
    int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    DDSR_CHECK(0 <= c0 && c0 < c1 && c1 <= c, "slice_channels: bad range [" << c0 << "," << c1
                                                                            << ") of " << c);
    int co = c1 - c0;
    int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<T> out(static_cast<size_t>(nb) * co * plane);
    for (int s = 0; s < nb; ++s)
        std::memcpy(out.data() + s * co * plane, x.ptr() + (s * c + c0) * plane,
                    sizeof(T) * static_cast<size_t>(co * plane));
    return make_op<T>({nb, co, h, w}, std::move(out), {x},
                      [nb, c, c0, co, plane](TensorNode<T>& o) {
                          if (!o.parents[0]->requires_grad) return;
                          T* dx = o.parents[0]->grad_buf();
                          const T* g = o.grad.data();
                          for (int s = 0; s < nb; ++s)
                              for (int64_t i = 0; i < co * plane; ++i)
                                  dx[(s * c + c0) * plane + i] += g[s * co * plane + i];
                      });
}

template <typename T>
Tensor<T> reflect_pad2d(const Tensor<T>& x, int bottom, int right) {
    DDSR_CHECK(x.ndim() == 4, "reflect_pad2d expects NCHW");
    int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    DDSR_CHECK(bottom >= 0 && right >= 0 && bottom < h && right < w,
               "reflect_pad2d: pad (" << bottom << "," << right << ") too large for " << h
                                      << "x" << w);
    if (bottom == 0 && right == 0) return reshape(x, x.shape());
    int ho = h + bottom, wo = w + right;
    std::vector<T> out(static_cast<size_t>(nb) * c * ho * wo);
    const T* px = x.ptr();
    int64_t planes = static_cast<int64_t>(nb) * c;
    parallel_for(planes, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
            const T* src = px + p * h * w;
            T* dst = out.data() + p * ho * wo;
            for (int y = 0; y < ho; ++y) {
                int sy = y < h ? y : 2 * h - 2 - y;
                for (int xx = 0; xx < wo; ++xx) {
                    int sx = xx < w ? xx : 2 * w - 2 - xx;
                    dst[y * wo + xx] = src[sy * w + sx];
                }
            }
        }
    });
    return make_op<T>({nb, c, ho, wo}, std::move(out), {x},
                      [planes, h, w, ho, wo](TensorNode<T>& o) {
                          if (!o.parents[0]->requires_grad) return;
                          T* dx = o.parents[0]->grad_buf();
                          const T* g = o.grad.data();
                          for (int64_t p = 0; p < planes; ++p) {
                              const T* gs = g + p * ho * wo;
                              T* ds = dx + p * h * w;
                              for (int y = 0; y < ho; ++y) {
                                  int sy = y < h ? y : 2 * h - 2 - y;
                                  for (int xx = 0; xx < wo; ++xx) {
                                      int sx = xx < w ? xx : 2 * w - 2 - xx;
                                      ds[sy * w + sx] += gs[y * wo + xx];
                                  }
                              }
                          }
                      });
}

template <typename T>
Tensor<T> crop2d(const Tensor<T>& x, int h, int w) {
    DDSR_CHECK(x.ndim() == 4, "crop2d expects NCHW");
    int nb = x.dim(0), c = x.dim(1), hi = x.dim(2), wi = x.dim(3);
    DDSR_CHECK(h <= hi && w <= wi && h > 0 && w > 0, "crop2d: target " << h << "x" << w
                                                         << " exceeds " << hi << "x" << wi);
    if (h == hi && w == wi) return reshape(x, x.shape());
    int64_t planes = static_cast<int64_t>(nb) * c;
    std::vector<T> out(static_cast<size_t>(planes) * h * w);
    const T* px = x.ptr();
    for (int64_t p = 0; p < planes; ++p)
        for (int y = 0; y < h; ++y)
            std::memcpy(out.data() + (p * h + y) * w, px + (p * hi + y) * wi,
                        sizeof(T) * static_cast<size_t>(w));
    return make_op<T>({nb, c, h, w}, std::move(out), {x},
                      [planes, h, w, hi, wi](TensorNode<T>& o) {
                          if (!o.parents[0]->requires_grad) return;
                          T* dx = o.parents[0]->grad_buf();
                          const T* g = o.grad.data();
                          for (int64_t p = 0; p < planes; ++p)
                              for (int y = 0; y < h; ++y)
                                  for (int xx = 0; xx < w; ++xx)
                                      dx[(p * hi + y) * wi + xx] += g[(p * h + y) * w + xx];
                      });
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int s) {
    DDSR_CHECK(x.ndim() == 4, "pixel_shuffle expects NCHW");
    int nb = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    DDSR_CHECK(s >= 1, "pixel_shuffle: scale must be >= 1");
    DDSR_CHECK(ci % (s * s) == 0, "pixel_shuffle: " << ci << " channels not divisible by "
                                                    << s << "^2");
    int co = ci / (s * s);
    int ho = h * s, wo = w * s;
    std::vector<T> out(static_cast<size_t>(x.numel()));
    const T* px = x.ptr();
    auto shuffle = [=](const T* in, T* dst) {
        for (int n = 0; n < nb; ++n)
            for (int c = 0; c < co; ++c)
                for (int dy = 0; dy < s; ++dy)
                    for (int dx = 0; dx < s; ++dx) {
                        const T* src = in + (((static_cast<int64_t>(n) * ci) +
                                              (c * s * s + dy * s + dx)) * h) * w;
                        T* d = dst + ((static_cast<int64_t>(n) * co + c) * ho + dy) * wo + dx;
                        for (int y = 0; y < h; ++y)
                            for (int xx = 0; xx < w; ++xx)
                                d[static_cast<int64_t>(y) * s * wo + xx * s] = src[y * w + xx];
                    }
    };
    shuffle(px, out.data());
    return make_op<T>({nb, co, ho, wo}, std::move(out), {x},
                      [=](TensorNode<T>& o) {
                          if (!o.parents[0]->requires_grad) return;
                          T* dx = o.parents[0]->grad_buf();
                          const T* g = o.grad.data();
                          for (int n = 0; n < nb; ++n)
                              for (int c = 0; c < co; ++c)
                                  for (int dy = 0; dy < s; ++dy)
                                      for (int dx2 = 0; dx2 < s; ++dx2) {
                                          T* d = dx + (((static_cast<int64_t>(n) * ci) +
                                                        (c * s * s + dy * s + dx2)) * h) * w;
                                          const T* src = g + ((static_cast<int64_t>(n) * co + c) *
                                                              ho + dy) * wo + dx2;
                                          for (int y = 0; y < h; ++y)
                                              for (int xx = 0; xx < w; ++xx)
                                                  d[y * w + xx] +=
                                                      src[static_cast<int64_t>(y) * s * wo +
                                                          xx * s];
                                      }
                      });
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int s) {
    DDSR_CHECK(x.ndim() == 4, "pixel_unshuffle expects NCHW");
    int nb = x.dim(0), ci = x.dim(1), hi = x.dim(2), wi = x.dim(3);
    DDSR_CHECK(s >= 1 && hi % s == 0 && wi % s == 0,
               "pixel_unshuffle: spatial dims " << hi << "x" << wi << " not divisible by " << s);
    int co = ci * s * s, h = hi / s, w = wi / s;
    std::vector<T> out(static_cast<size_t>(x.numel()));
    const T* px = x.ptr();
    for (int n = 0; n < nb; ++n)
        for (int c = 0; c < ci; ++c)
            for (int dy = 0; dy < s; ++dy)
                for (int dx = 0; dx < s; ++dx) {
                    const T* src = px + ((static_cast<int64_t>(n) * ci + c) * hi + dy) * wi + dx;
                    T* d = out.data() + ((static_cast<int64_t>(n) * co) +
                                         (c * s * s + dy * s + dx)) * h * w;
                    for (int y = 0; y < h; ++y)
                        for (int xx = 0; xx < w; ++xx)
                            d[y * w + xx] = src[static_cast<int64_t>(y) * s * wi + xx * s];
                }
    return make_op<T>({nb, co, h, w}, std::move(out), {x},
                      [=](TensorNode<T>& o) {
                          if (!o.parents[0]->requires_grad) return;
                          T* dx = o.parents[0]->grad_buf();
                          const T* g = o.grad.data();
                          for (int n = 0; n < nb; ++n)
                              for (int c = 0; c < ci; ++c)
                                  for (int dy = 0; dy < s; ++dy)
                                      for (int dx2 = 0; dx2 < s; ++dx2) {
                                          T* d = dx + ((static_cast<int64_t>(n) * ci + c) * hi +
                                                       dy) * wi + dx2;
                                          const T* src = g + ((static_cast<int64_t>(n) * co) +
                                                              (c * s * s + dy * s + dx2)) * h * w;
                                          for (int y = 0; y < h; ++y)
                                              for (int xx = 0; xx < w; ++xx)
                                                  d[static_cast<int64_t>(y) * s * wi + xx * s] +=
                                                      src[y * w + xx];
                                      }
                      });
}

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int w) {
    DDSR_CHECK(x.ndim() == 4, "window_partition expects NCHW");
    DDSR_CHECK(w > 0, "window_partition: window must be positive");
    int nb = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    DDSR_CHECK(h % w == 0 && wd % w == 0, "window_partition: " << h << "x" << wd
                                              << " not divisible by window " << w);
    int by = h / w, bx = wd / w;
    int nblocks = nb * by * bx, l = w * w;
    std::vector<T> out(static_cast<size_t>(nblocks) * l * c);
    const T* px = x.ptr();
    for (int n = 0; n < nb; ++n)
        for (int cy = 0; cy < by; ++cy)
            for (int cx = 0; cx < bx; ++cx) {
                int blk = (n * by + cy) * bx + cx;
                for (int iy = 0; iy < w; ++iy)
                    for (int ix = 0; ix < w; ++ix) {
                        int pos = iy * w + ix;
                        int yy = cy * w + iy, xx = cx * w + ix;
                        for (int ch = 0; ch < c; ++ch)
                            out[(static_cast<int64_t>(blk) * l + pos) * c + ch] =
                                px[((static_cast<int64_t>(n) * c + ch) * h + yy) * wd + xx];
                    }
            }
    return make_op<T>({nblocks, l, c}, std::move(out), {x},
                      [=](TensorNode<T>& o) {
                          if (!o.parents[0]->requires_grad) return;
                          T* dx = o.parents[0]->grad_buf();
                          const T* g = o.grad.data();
                          for (int n = 0; n < nb; ++n)
                              for (int cy = 0; cy < by; ++cy)
                                  for (int cx = 0; cx < bx; ++cx) {
                                      int blk = (n * by + cy) * bx + cx;
                                      for (int iy = 0; iy < w; ++iy)
                                          for (int ix = 0; ix < w; ++ix) {
                                              int pos = iy * w + ix;
                                              int yy = cy * w + iy, xx = cx * w + ix;
                                              for (int ch = 0; ch < c; ++ch)
                                                  dx[((static_cast<int64_t>(n) * c + ch) * h +
                                                      yy) * wd + xx] +=
                                                      g[(static_cast<int64_t>(blk) * l + pos) *
                                                            c + ch];
                                          }
                                  }
                      });
}

template <typename T>
Tensor<T> window_merge(const Tensor<T>& blocks, int w, int n, int c, int h, int wd) {
    DDSR_CHECK(blocks.ndim() == 3, "window_merge expects [blocks, w*w, C]");
    DDSR_CHECK(h % w == 0 && wd % w == 0, "window_merge: bad target dims");
    int by = h / w, bx = wd / w;
    DDSR_CHECK(blocks.dim(0) == n * by * bx && blocks.dim(1) == w * w && blocks.dim(2) == c,
               "window_merge: block tensor " << shape_str(blocks.shape())
                                             << " inconsistent with target");
    int l = w * w;
    std::vector<T> out(static_cast<size_t>(n) * c * h * wd);
    const T* pb = blocks.ptr();
    for (int s = 0; s < n; ++s)
        for (int cy = 0; cy < by; ++cy)
            for (int cx = 0; cx < bx; ++cx) {
                int blk = (s * by + cy) * bx + cx;
                for (int iy = 0; iy < w; ++iy)
                    for (int ix = 0; ix < w; ++ix) {
                        int pos = iy * w + ix;
                        int yy = cy * w + iy, xx = cx * w + ix;
                        for (int ch = 0; ch < c; ++ch)
                            out[((static_cast<int64_t>(s) * c + ch) * h + yy) * wd + xx] =
                                pb[(static_cast<int64_t>(blk) * l + pos) * c + ch];
                    }
            }
    return make_op<T>({n, c, h, wd}, std::move(out), {blocks},
                      [=](TensorNode<T>& o) {
                          if (!o.parents[0]->requires_grad) return;
                          T* db = o.parents[0]->grad_buf();
                          const T* g = o.grad.data();
                          for (int s = 0; s < n; ++s)
                              for (int cy = 0; cy < by; ++cy)
                                  for (int cx = 0; cx < bx; ++cx) {
                                      int blk = (s * by + cy) * bx + cx;
                                      for (int iy = 0; iy < w; ++iy)
                                          for (int ix = 0; ix < w; ++ix) {
                                              int pos = iy * w + ix;
                                              int yy = cy * w + iy, xx = cx * w + ix;
                                              for (int ch = 0; ch < c; ++ch)
                                                  db[(static_cast<int64_t>(blk) * l + pos) * c +
                                                     ch] +=
                                                      g[((static_cast<int64_t>(s) * c + ch) * h +
                                                         yy) * wd + xx];
                                          }
                                  }
                      });
}

// ------------------------------------------------------------- linear algebra

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b) {
    DDSR_CHECK(w.ndim() == 2, "linear: weight must be 2-D, got " << shape_str(w.shape()));
    int din = w.dim(0), dout = w.dim(1);
    DDSR_CHECK(x.ndim() >= 1 && x.dim(x.ndim() - 1) == din,
               "linear: input " << shape_str(x.shape()) << " incompatible with weight "
                                << shape_str(w.shape()));
    if (b) DDSR_CHECK(b->ndim() == 1 && b->dim(0) == dout, "linear: bad bias shape");
    int64_t rows = x.numel() / din;
    Shape out_shape = x.shape();
    out_shape.back() = dout;
    std::vector<T> out(static_cast<size_t>(rows) * dout);
    gemm_nn(x.ptr(), w.ptr(), out.data(), rows, din, dout, false);
    if (b) {
        const T* pb = b->ptr();
        parallel_for(rows, [&](int64_t r0, int64_t r1) {
            for (int64_t r = r0; r < r1; ++r) {
                T* row = out.data() + r * dout;
                for (int j = 0; j < dout; ++j) row[j] += pb[j];
            }
        });
    }
    std::vector<Tensor<T>> inputs = b ? std::vector<Tensor<T>>{x, w, *b}
                                      : std::vector<Tensor<T>>{x, w};
    bool has_bias = b != nullptr;
    return make_op<T>(std::move(out_shape), std::move(out), std::move(inputs),
                      [rows, din, dout, has_bias](TensorNode<T>& o) {
                          const T* g = o.grad.data();
                          auto& xn = *o.parents[0];
                          auto& wn = *o.parents[1];
                          if (xn.requires_grad)
                              gemm_nt(g, wn.value.data(), xn.grad_buf(), rows, dout, din, true);
                          if (wn.requires_grad)
                              gemm_tn(xn.value.data(), g, wn.grad_buf(), din, rows, dout, true);
                          if (has_bias && o.parents[2]->requires_grad) {
                              T* db = o.parents[2]->grad_buf();
                              for (int64_t r = 0; r < rows; ++r)
                                  for (int j = 0; j < dout; ++j) db[j] += g[r * dout + j];
                          }
                      });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    DDSR_CHECK(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
               "bmm: incompatible " << shape_str(a.shape()) << " x " << shape_str(b.shape()));
    int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<T> out(static_cast<size_t>(bs) * m * n);
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    run_blocks(bs, 8, [&](int64_t s0, int64_t s1) {
        for (int64_t s = s0; s < s1; ++s) {
            CMapM<T> ma(pa + s * m * k, m, k), mb(pb + s * k * n, k, n);
            MapM<T> mc(out.data() + s * m * n, m, n);
            mc.noalias() = ma * mb;
        }
    });
    return make_op<T>({static_cast<int>(bs), static_cast<int>(m), static_cast<int>(n)},
                      std::move(out), {a, b}, [bs, m, k, n](TensorNode<T>& o) {
                          const T* g = o.grad.data();
                          auto& an = *o.parents[0];
                          auto& bn = *o.parents[1];
                          if (an.requires_grad) {
                              T* da = an.grad_buf();
                              for (int64_t s = 0; s < bs; ++s)
                                  gemm_nt(g + s * m * n, bn.value.data() + s * k * n,
                                          da + s * m * k, m, n, k, true);
                          }
                          if (bn.requires_grad) {
                              T* db = bn.grad_buf();
                              for (int64_t s = 0; s < bs; ++s)
                                  gemm_tn(an.value.data() + s * m * k, g + s * m * n,
                                          db + s * k * n, k, m, n, true);
                          }
                      });
}

template <typename T>
Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
    DDSR_CHECK(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
               "bmm_nt: incompatible " << shape_str(a.shape()) << " x " << shape_str(b.shape()));
    int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
    std::vector<T> out(static_cast<size_t>(bs) * m * n);
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    run_blocks(bs, 8, [&](int64_t s0, int64_t s1) {
        for (int64_t s = s0; s < s1; ++s) {
            CMapM<T> ma(pa + s * m * k, m, k), mb(pb + s * n * k, n, k);
            MapM<T> mc(out.data() + s * m * n, m, n);
            mc.noalias() = ma * mb.transpose();
        }
    });
    return make_op<T>({static_cast<int>(bs), static_cast<int>(m), static_cast<int>(n)},
                      std::move(out), {a, b}, [bs, m, k, n](TensorNode<T>& o) {
                          const T* g = o.grad.data();
                          auto& an = *o.parents[0];
                          auto& bn = *o.parents[1];
                          if (an.requires_grad) {
                              T* da = an.grad_buf();
                              for (int64_t s = 0; s < bs; ++s)
                                  gemm_nn(g + s * m * n, bn.value.data() + s * n * k,
                                          da + s * m * k, m, n, k, true);
                          }
                          if (bn.requires_grad) {
                              T* db = bn.grad_buf();
                              for (int64_t s = 0; s < bs; ++s)
                                  gemm_tn(g + s * m * n, an.value.data() + s * m * k,
                                          db + s * n * k, n, m, k, true);
                          }
                      });
}

namespace {

// gathers one sample's padded patches: cols[K, P] with K = Ci*kh*kw, P = Ho*Wo
template <typename T>
void im2col(const T* x, int ci, int h, int w, int kh, int kw, int pad, int ho, int wo, T* cols) {
    for (int c = 0; c < ci; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                T* row = cols + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) *
                                    (static_cast<int64_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    int sy = oy + ky - pad;
                    if (sy < 0 || sy >= h) {
                        std::fill(row + static_cast<int64_t>(oy) * wo,
                                  row + static_cast<int64_t>(oy + 1) * wo, T(0));
                        continue;
                    }
                    for (int ox = 0; ox < wo; ++ox) {
                        int sx = ox + kx - pad;
                        row[static_cast<int64_t>(oy) * wo + ox] =
                            (sx < 0 || sx >= w) ? T(0)
                                                : x[(static_cast<int64_t>(c) * h + sy) * w + sx];
                    }
                }
            }
}

template <typename T>
void col2im_acc(const T* cols, int ci, int h, int w, int kh, int kw, int pad, int ho, int wo,
                T* dx) {
    for (int c = 0; c < ci; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const T* row = cols + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) *
                                          (static_cast<int64_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    int sy = oy + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        int sx = ox + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        dx[(static_cast<int64_t>(c) * h + sy) * w + sx] +=
                            row[static_cast<int64_t>(oy) * wo + ox];
                    }
                }
            }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, int pad) {
    DDSR_CHECK(x.ndim() == 4 && w.ndim() == 4, "conv2d expects NCHW input and OIHW weight");
    int nb = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    DDSR_CHECK(w.dim(1) == ci, "conv2d: input has " << ci << " channels but weight expects "
                                                    << w.dim(1));
    DDSR_CHECK(pad >= 0, "conv2d: negative padding");
    DDSR_CHECK(pad == 0 || (kh % 2 == 1 && kw % 2 == 1),
               "conv2d: even kernel " << kh << "x" << kw << " with same-padding requested");
    int ho = h + 2 * pad - kh + 1, wo = wd + 2 * pad - kw + 1;
    DDSR_CHECK(ho >= 1 && wo >= 1, "conv2d: kernel larger than padded input");
    if (b) DDSR_CHECK(b->ndim() == 1 && b->dim(0) == co, "conv2d: bad bias shape");

    int64_t K = static_cast<int64_t>(ci) * kh * kw;
    int64_t P = static_cast<int64_t>(ho) * wo;
    auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(nb) * K * P);
    std::vector<T> out(static_cast<size_t>(nb) * co * P);
    const T* px = x.ptr();
    const T* pw = w.ptr();
    run_blocks(nb, 1, [&](int64_t s0, int64_t s1) {
        for (int64_t s = s0; s < s1; ++s) {
            T* cs = cols->data() + s * K * P;
            im2col(px + s * ci * static_cast<int64_t>(h) * wd, ci, h, wd, kh, kw, pad, ho, wo, cs);
            gemm_nn(pw, cs, out.data() + s * co * P, co, K, P, false);
        }
    });
    if (b) {
        const T* pb = b->ptr();
        for (int64_t s = 0; s < nb; ++s)
            for (int c = 0; c < co; ++c) {
                T* row = out.data() + (s * co + c) * P;
                T bias = pb[c];
                for (int64_t i = 0; i < P; ++i) row[i] += bias;
            }
    }
    std::vector<Tensor<T>> inputs = b ? std::vector<Tensor<T>>{x, w, *b}
                                      : std::vector<Tensor<T>>{x, w};
    bool has_bias = b != nullptr;
    return make_op<T>({nb, co, ho, wo}, std::move(out), std::move(inputs),
        [nb, ci, h, wd, co, kh, kw, pad, ho, wo, K, P, has_bias, cols](TensorNode<T>& o) {
            const T* g = o.grad.data();
            auto& xn = *o.parents[0];
            auto& wn = *o.parents[1];
            if (wn.requires_grad) {
                T* dw = wn.grad_buf();
                for (int64_t s = 0; s < nb; ++s)
                    gemm_nt(g + s * co * P, cols->data() + s * K * P, dw, co, P, K, true);
            }
            if (has_bias && o.parents[2]->requires_grad) {
                T* db = o.parents[2]->grad_buf();
                for (int64_t s = 0; s < nb; ++s)
                    for (int c = 0; c < co; ++c) {
                        const T* row = g + (s * co + c) * P;
                        T acc(0);
                        for (int64_t i = 0; i < P; ++i) acc += row[i];
                        db[c] += acc;
                    }
            }
            if (xn.requires_grad) {
                T* dx = xn.grad_buf();
                const T* pwv = wn.value.data();
                run_blocks(nb, 1, [&](int64_t s0, int64_t s1) {
                    std::vector<T> dcols(static_cast<size_t>(K) * P);
                    for (int64_t s = s0; s < s1; ++s) {
                        gemm_tn(pwv, g + s * co * P, dcols.data(), K, co, P, false);
                        col2im_acc(dcols.data(), ci, h, wd, kh, kw, pad, ho, wo,
                                   dx + s * ci * static_cast<int64_t>(h) * wd);
                    }
                });
            }
        });
}

// ------------------------------------------------- normalization / activation

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    DDSR_CHECK(x.ndim() >= 1, "layer_norm: scalar input");
    int d = x.dim(x.ndim() - 1);
    DDSR_CHECK(d >= 1 && eps > T(0), "layer_norm: bad last dim or eps");
    DDSR_CHECK(gamma.ndim() == 1 && gamma.dim(0) == d && beta.ndim() == 1 && beta.dim(0) == d,
               "layer_norm: gamma/beta must be [" << d << "]");
    int64_t rows = x.numel() / d;
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.numel()));
    auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    std::vector<T> out(static_cast<size_t>(x.numel()));
    const T* px = x.ptr();
    const T* pg = gamma.ptr();
    const T* pb = beta.ptr();
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const T* row = px + r * d;
            double mean = 0;
            for (int j = 0; j < d; ++j) mean += row[j];
            mean /= d;
            double var = 0;
            for (int j = 0; j < d; ++j) {
                double c = row[j] - mean;
                var += c * c;
            }
            var /= d;
            double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
            (*invstd)[static_cast<size_t>(r)] = static_cast<T>(is);
            T* xh = xhat->data() + r * d;
            T* po = out.data() + r * d;
            for (int j = 0; j < d; ++j) {
                xh[j] = static_cast<T>((row[j] - mean) * is);
                po[j] = xh[j] * pg[j] + pb[j];
            }
        }
    });
    return make_op<T>(x.shape(), std::move(out), {x, gamma, beta},
        [rows, d, xhat, invstd](TensorNode<T>& o) {
            const T* g = o.grad.data();
            auto& xn = *o.parents[0];
            auto& gn = *o.parents[1];
            auto& bn = *o.parents[2];
            const T* pg = gn.value.data();
            if (gn.requires_grad || bn.requires_grad) {
                T* dgamma = gn.requires_grad ? gn.grad_buf() : nullptr;
                T* dbeta = bn.requires_grad ? bn.grad_buf() : nullptr;
                for (int64_t r = 0; r < rows; ++r) {
                    const T* gr = g + r * d;
                    const T* xh = xhat->data() + r * d;
                    for (int j = 0; j < d; ++j) {
                        if (dgamma) dgamma[j] += gr[j] * xh[j];
                        if (dbeta) dbeta[j] += gr[j];
                    }
                }
            }
            if (xn.requires_grad) {
                T* dx = xn.grad_buf();
                for (int64_t r = 0; r < rows; ++r) {
                    const T* gr = g + r * d;
                    const T* xh = xhat->data() + r * d;
                    double m1 = 0, m2 = 0;
                    for (int j = 0; j < d; ++j) {
                        double dyh = static_cast<double>(gr[j]) * pg[j];
                        m1 += dyh;
                        m2 += dyh * xh[j];
                    }
                    m1 /= d;
                    m2 /= d;
                    double is = (*invstd)[static_cast<size_t>(r)];
                    T* dr = dx + r * d;
                    for (int j = 0; j < d; ++j) {
                        double dyh = static_cast<double>(gr[j]) * pg[j];
                        dr[j] += static_cast<T>(is * (dyh - m1 - xh[j] * m2));
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
    DDSR_CHECK(x.ndim() >= 1, "softmax: scalar input");
    int d = x.dim(x.ndim() - 1);
    int64_t rows = x.numel() / d;
    std::vector<T> out(static_cast<size_t>(x.numel()));
    const T* px = x.ptr();
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const T* row = px + r * d;
            T* po = out.data() + r * d;
            T mx = row[0];
            for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
            double sum = 0;
            for (int j = 0; j < d; ++j) {
                double e = std::exp(static_cast<double>(row[j] - mx));
                po[j] = static_cast<T>(e);
                sum += e;
            }
            double inv = 1.0 / sum;
            for (int j = 0; j < d; ++j) po[j] = static_cast<T>(po[j] * inv);
        }
    });
    return make_op<T>(x.shape(), std::move(out), {x}, [rows, d](TensorNode<T>& o) {
        if (!o.parents[0]->requires_grad) return;
        const T* g = o.grad.data();
        const T* y = o.value.data();
        T* dx = o.parents[0]->grad_buf();
        for (int64_t r = 0; r < rows; ++r) {
            const T* gr = g + r * d;
            const T* yr = y + r * d;
            double s = 0;
            for (int j = 0; j < d; ++j) s += static_cast<double>(gr[j]) * yr[j];
            T* dr = dx + r * d;
            for (int j = 0; j < d; ++j)
                dr[j] += static_cast<T>(yr[j] * (static_cast<double>(gr[j]) - s));
        }
    });
}

// ----------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    double acc = 0;
    for (T v : x.data()) acc += v;
    int64_t n = x.numel();
    return make_op<T>({1}, {static_cast<T>(acc)}, {x}, [n](TensorNode<T>& o) {
        if (!o.parents[0]->requires_grad) return;
        T g = o.grad[0];
        T* dst = o.parents[0]->grad_buf();
        for (int64_t i = 0; i < n; ++i) dst[i] += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    double acc = 0;
    for (T v : x.data()) acc += v;
    int64_t n = x.numel();
    return make_op<T>({1}, {static_cast<T>(acc / static_cast<double>(n))}, {x},
                      [n](TensorNode<T>& o) {
                          if (!o.parents[0]->requires_grad) return;
                          T g = static_cast<T>(o.grad[0] / static_cast<double>(n));
                          T* dst = o.parents[0]->grad_buf();
                          for (int64_t i = 0; i < n; ++i) dst[i] += g;
                      });
}

template <typename T>
Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b) {
    DDSR_CHECK(a.shape() == b.shape(), "l1_mean: shape mismatch " << shape_str(a.shape())
                                           << " vs " << shape_str(b.shape()));
    int64_t n = a.numel();
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(pa[i]) - pb[i]);
    return make_op<T>({1}, {static_cast<T>(acc / static_cast<double>(n))}, {a, b},
                      [n](TensorNode<T>& o) {
                          T g = static_cast<T>(o.grad[0] / static_cast<double>(n));
                          const T* va = o.parents[0]->value.data();
                          const T* vb = o.parents[1]->value.data();
                          T* da = o.parents[0]->requires_grad ? o.parents[0]->grad_buf() : nullptr;
                          T* db = o.parents[1]->requires_grad ? o.parents[1]->grad_buf() : nullptr;
                          for (int64_t i = 0; i < n; ++i) {
                              T s = va[i] > vb[i] ? g : (va[i] < vb[i] ? -g : T(0));
                              if (da) da[i] += s;
                              if (db) db[i] -= s;
                          }
                      });
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
    const auto& v = t.data();
    for (size_t i = 0; i < v.size(); ++i)
        DDSR_CHECK(std::isfinite(static_cast<double>(v[i])),
                   what << ": non-finite value at flat index " << i);
}

#define DDSR_INSTANTIATE(T)                                                                      \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                      \
    template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);                                      \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                               \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                     \
    template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                  \
    template Tensor<T> slice_channels<T>(const Tensor<T>&, int, int);                           \
    template Tensor<T> reflect_pad2d<T>(const Tensor<T>&, int, int);                            \
    template Tensor<T> crop2d<T>(const Tensor<T>&, int, int);                                   \
    template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, int);                                 \
    template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, int);                               \
    template Tensor<T> window_partition<T>(const Tensor<T>&, int);                              \
    template Tensor<T> window_merge<T>(const Tensor<T>&, int, int, int, int, int);              \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);         \
    template Tensor<T> bmm<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> bmm_nt<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, int);    \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
    template Tensor<T> softmax_lastdim<T>(const Tensor<T>&);                                    \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                            \
    template Tensor<T> mean_all<T>(const Tensor<T>&);                                           \
    template Tensor<T> l1_mean<T>(const Tensor<T>&, const Tensor<T>&);                          \
    template void check_finite<T>(const Tensor<T>&, const char*);

DDSR_INSTANTIATE(float)
DDSR_INSTANTIATE(double)
#undef DDSR_INSTANTIATE

}  // namespace ddsr
