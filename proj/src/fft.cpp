#include "ddsr/fft.hpp"

#include <map>
#include <mutex>

namespace ddsr {

namespace {

template <typename T>
using C = std::complex<T>;

// Unnormalized forward DFT machinery. Inverse transforms are done by
// conjugating on the way in and out.
template <typename T>
struct FftPlan {
    int n = 0;
    std::vector<C<T>> twiddle;  // e^{-2*pi*i*j/n}, j = 0..n-1
    // Bluestein state, set up when n has a prime factor > 5
    bool bluestein = false;
    int m = 0;                        // pow2 convolution length >= 2n-1
    std::vector<C<T>> chirp;          // e^{-i*pi*j^2/n}
    std::vector<C<T>> chirp_fft;      // FFT_m of the extended conjugate chirp
    std::shared_ptr<const FftPlan<T>> pow2;  // plan for length m
};

inline bool smooth235(int n) {
    for (int r : {2, 3, 5})
        while (n % r == 0) n /= r;
    return n == 1;
}

// y[k] = sum_j x[j*stride] * w^(jk), recursive mixed-radix DIT.
// tw is the root twiddle table of size root_n; the current length n divides
// root_n, so w_n^j = tw[j * (root_n / n)].
template <typename T>
void fft_rec(const C<T>* x, C<T>* y, int n, int stride, const std::vector<C<T>>& tw,
             int root_n) {
    if (n == 1) {
        y[0] = x[0];
        return;
    }
    int r = 0;
    for (int cand : {2, 3, 5})
        if (n % cand == 0) {
            r = cand;
            break;
        }
    int m = n / r;
    for (int q = 0; q < r; ++q) fft_rec(x + q * stride, y + q * m, m, stride * r, tw, root_n);
    int step = root_n / n;
    C<T> t[5];
    for (int k = 0; k < m; ++k) {
        for (int q = 0; q < r; ++q) {
            int64_t idx = (static_cast<int64_t>(q) * k * step) % root_n;
            t[q] = y[q * m + k] * tw[static_cast<size_t>(idx)];
        }
        for (int p = 0; p < r; ++p) {
            C<T> acc = t[0];
            for (int q = 1; q < r; ++q) {
                int64_t idx = (static_cast<int64_t>(p) * q * (root_n / r)) % root_n;
                acc += t[q] * tw[static_cast<size_t>(idx)];
            }
            y[p * m + k] = acc;
        }
    }
}

template <typename T>
std::shared_ptr<const FftPlan<T>> get_plan(int n);

// forward unnormalized DFT of contiguous data via the plan
template <typename T>
void run_plan(const FftPlan<T>& plan, const C<T>* in, C<T>* out) {
    if (!plan.bluestein) {
        fft_rec(in, out, plan.n, 1, plan.twiddle, plan.n);
        return;
    }
    int n = plan.n, m = plan.m;
    std::vector<C<T>> u(static_cast<size_t>(m), C<T>(0, 0));
    for (int j = 0; j < n; ++j) u[static_cast<size_t>(j)] = in[j] * plan.chirp[static_cast<size_t>(j)];
    std::vector<C<T>> fu(static_cast<size_t>(m));
    run_plan(*plan.pow2, u.data(), fu.data());
    for (int j = 0; j < m; ++j) fu[static_cast<size_t>(j)] *= plan.chirp_fft[static_cast<size_t>(j)];
    // inverse pow2 FFT by conjugation
    for (auto& v : fu) v = std::conj(v);
    run_plan(*plan.pow2, fu.data(), u.data());
    T inv_m = T(1) / static_cast<T>(m);
    for (int k = 0; k < n; ++k)
        out[k] = std::conj(u[static_cast<size_t>(k)]) * inv_m * plan.chirp[static_cast<size_t>(k)];
}

template <typename T>
std::shared_ptr<const FftPlan<T>> build_plan(int n) {
    auto plan = std::make_shared<FftPlan<T>>();
    plan->n = n;
    plan->twiddle.resize(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        double a = -2.0 * M_PI * j / n;
        plan->twiddle[static_cast<size_t>(j)] = C<T>(static_cast<T>(std::cos(a)),
                                                     static_cast<T>(std::sin(a)));
    }
    if (!smooth235(n)) {
        plan->bluestein = true;
        int m = 1;
        while (m < 2 * n - 1) m <<= 1;
        plan->m = m;
        plan->chirp.resize(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            int64_t a = (static_cast<int64_t>(j) * j) % (2 * n);
            double ang = -M_PI * static_cast<double>(a) / n;
            plan->chirp[static_cast<size_t>(j)] = C<T>(static_cast<T>(std::cos(ang)),
                                                       static_cast<T>(std::sin(ang)));
        }
        plan->pow2 = get_plan<T>(m);
        std::vector<C<T>> b(static_cast<size_t>(m), C<T>(0, 0));
        for (int j = 0; j < n; ++j) {
            C<T> v = std::conj(plan->chirp[static_cast<size_t>(j)]);
            b[static_cast<size_t>(j)] = v;
            if (j > 0) b[static_cast<size_t>(m - j)] = v;
        }
        plan->chirp_fft.resize(static_cast<size_t>(m));
        run_plan(*plan->pow2, b.data(), plan->chirp_fft.data());
    }
    return plan;
}

template <typename T>
std::shared_ptr<const FftPlan<T>> get_plan(int n) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const FftPlan<T>>> cache;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(n);
        if (it != cache.end()) return it->second;
    }
    auto plan = build_plan<T>(n);
    std::lock_guard<std::mutex> lock(mu);
    auto [it, inserted] = cache.emplace(n, plan);
    return it->second;
}

template <typename T>
void dft_1d(const FftPlan<T>& plan, C<T>* data, bool inverse) {
    int n = plan.n;
    std::vector<C<T>> tmp(static_cast<size_t>(n));
    if (inverse)
        for (int j = 0; j < n; ++j) data[j] = std::conj(data[j]);
    run_plan(plan, data, tmp.data());
    if (inverse)
        for (int j = 0; j < n; ++j) data[j] = std::conj(tmp[static_cast<size_t>(j)]);
    else
        std::copy(tmp.begin(), tmp.end(), data);
}

}  // namespace

template <typename T>
void fft2_plane(std::complex<T>* data, int h, int w, bool inverse) {
    DDSR_CHECK(h >= 1 && w >= 1, "fft2_plane: empty plane");
    auto row_plan = get_plan<T>(w);
    auto col_plan = get_plan<T>(h);
    for (int y = 0; y < h; ++y) dft_1d(*row_plan, data + static_cast<int64_t>(y) * w, inverse);
    std::vector<C<T>> col(static_cast<size_t>(h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[static_cast<size_t>(y)] = data[static_cast<int64_t>(y) * w + x];
        dft_1d(*col_plan, col.data(), inverse);
        for (int y = 0; y < h; ++y) data[static_cast<int64_t>(y) * w + x] = col[static_cast<size_t>(y)];
    }
    T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(h) * w));
    int64_t n = static_cast<int64_t>(h) * w;
    for (int64_t i = 0; i < n; ++i) data[i] *= scale;
}

namespace {

// all leading axes are treated as independent planes
template <typename T>
void plane_dims(const Tensor<T>& x, int64_t& planes, int& h, int& w) {
    DDSR_CHECK(x.ndim() >= 2, "fft2 expects at least 2 dims, got " << shape_str(x.shape()));
    h = x.dim(x.ndim() - 2);
    w = x.dim(x.ndim() - 1);
    planes = x.numel() / (static_cast<int64_t>(h) * w);
}

}  // namespace

template <typename T>
Tensor<T> fft2_packed(const Tensor<T>& x) {
    int64_t planes;
    int h, w;
    plane_dims(x, planes, h, w);
    get_plan<T>(h);
    get_plan<T>(w);
    int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<T> out(static_cast<size_t>(x.numel()) * 2);
    const T* px = x.ptr();
    parallel_for(planes, [&](int64_t p0, int64_t p1) {
        std::vector<C<T>> buf(static_cast<size_t>(hw));
        for (int64_t p = p0; p < p1; ++p) {
            const T* src = px + p * hw;
            for (int64_t i = 0; i < hw; ++i) buf[static_cast<size_t>(i)] = C<T>(src[i], T(0));
            fft2_plane(buf.data(), h, w, false);
            T* dst = out.data() + p * hw * 2;
            for (int64_t i = 0; i < hw; ++i) {
                dst[2 * i] = buf[static_cast<size_t>(i)].real();
                dst[2 * i + 1] = buf[static_cast<size_t>(i)].imag();
            }
        }
    });
    Shape os = x.shape();
    os.push_back(2);
    return make_op<T>(std::move(os), std::move(out), {x}, [planes, h, w, hw](TensorNode<T>& o) {
        if (!o.parents[0]->requires_grad) return;
        T* dx = o.parents[0]->grad_buf();
        const T* g = o.grad.data();
        parallel_for(planes, [&](int64_t p0, int64_t p1) {
            std::vector<C<T>> buf(static_cast<size_t>(hw));
            for (int64_t p = p0; p < p1; ++p) {
                const T* src = g + p * hw * 2;
                for (int64_t i = 0; i < hw; ++i)
                    buf[static_cast<size_t>(i)] = C<T>(src[2 * i], src[2 * i + 1]);
                fft2_plane(buf.data(), h, w, true);
                T* dst = dx + p * hw;
                for (int64_t i = 0; i < hw; ++i) dst[i] += buf[static_cast<size_t>(i)].real();
            }
        });
    });
}

template <typename T>
Tensor<T> complex_plane(const Tensor<T>& packed, int k) {
    DDSR_CHECK(packed.ndim() >= 1 && packed.dim(packed.ndim() - 1) == 2 && (k == 0 || k == 1),
               "complex_plane: expects interleaved complex tensor and k in {0,1}");
    int64_t n = packed.numel() / 2;
    std::vector<T> out(static_cast<size_t>(n));
    const T* p = packed.ptr();
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = p[2 * i + k];
    Shape os(packed.shape().begin(), packed.shape().end() - 1);
    return make_op<T>(std::move(os), std::move(out), {packed}, [n, k](TensorNode<T>& o) {
        if (!o.parents[0]->requires_grad) return;
        T* dp = o.parents[0]->grad_buf();
        const T* g = o.grad.data();
        for (int64_t i = 0; i < n; ++i) dp[2 * i + k] += g[i];
    });
}

template <typename T>
Spectrum<T> fft2(const Tensor<T>& x) {
    Tensor<T> packed = fft2_packed(x);
    return {complex_plane(packed, 0), complex_plane(packed, 1)};
}

template <typename T>
Ifft2Result<T> ifft2(const Spectrum<T>& spec) {
    const Tensor<T>& re = spec.real;
    const Tensor<T>& im = spec.imag;
    DDSR_CHECK(re.shape() == im.shape(), "ifft2: real " << shape_str(re.shape()) << " vs imag "
                                                        << shape_str(im.shape()));
    int64_t planes;
    int h, w;
    plane_dims(re, planes, h, w);
    get_plan<T>(h);
    get_plan<T>(w);
    int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<T> out(static_cast<size_t>(re.numel()));
    std::vector<double> residues(static_cast<size_t>(planes), 0.0);
    const T* pr = re.ptr();
    const T* pi = im.ptr();
    parallel_for(planes, [&](int64_t p0, int64_t p1) {
        std::vector<C<T>> buf(static_cast<size_t>(hw));
        for (int64_t p = p0; p < p1; ++p) {
            for (int64_t i = 0; i < hw; ++i)
                buf[static_cast<size_t>(i)] = C<T>(pr[p * hw + i], pi[p * hw + i]);
            fft2_plane(buf.data(), h, w, true);
            double res = 0;
            T* dst = out.data() + p * hw;
            for (int64_t i = 0; i < hw; ++i) {
                dst[i] = buf[static_cast<size_t>(i)].real();
                res = std::max(res, std::abs(static_cast<double>(buf[static_cast<size_t>(i)].imag())));
            }
            residues[static_cast<size_t>(p)] = res;
        }
    });
    double residue = 0;
    for (double r : residues) residue = std::max(residue, r);
    Tensor<T> y = make_op<T>(re.shape(), std::move(out), {re, im},
                             [planes, h, w, hw](TensorNode<T>& o) {
                                 const T* g = o.grad.data();
                                 auto& rn = *o.parents[0];
                                 auto& in = *o.parents[1];
                                 if (!rn.requires_grad && !in.requires_grad) return;
                                 T* dr = rn.requires_grad ? rn.grad_buf() : nullptr;
                                 T* di = in.requires_grad ? in.grad_buf() : nullptr;
                                 parallel_for(planes, [&](int64_t p0, int64_t p1) {
                                     std::vector<C<T>> buf(static_cast<size_t>(hw));
                                     for (int64_t p = p0; p < p1; ++p) {
                                         for (int64_t i = 0; i < hw; ++i)
                                             buf[static_cast<size_t>(i)] = C<T>(g[p * hw + i], T(0));
                                         fft2_plane(buf.data(), h, w, false);
                                         for (int64_t i = 0; i < hw; ++i) {
                                             if (dr) dr[p * hw + i] += buf[static_cast<size_t>(i)].real();
                                             if (di) di[p * hw + i] += buf[static_cast<size_t>(i)].imag();
                                         }
                                     }
                                 });
                             });
    return {y, residue};
}

template <typename T>
Tensor<T> amplitude_map(const Spectrum<T>& spec, bool log_scale, bool center_shift) {
    const Tensor<T>& re = spec.real;
    const Tensor<T>& im = spec.imag;
    DDSR_CHECK(re.shape() == im.shape(), "amplitude_map: shape mismatch");
    int64_t planes;
    int h, w;
    plane_dims(re, planes, h, w);
    int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<T> out(static_cast<size_t>(re.numel()));
    const T* pr = re.ptr();
    const T* pi = im.ptr();
    for (int64_t p = 0; p < planes; ++p) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int64_t i = p * hw + static_cast<int64_t>(y) * w + x;
                double mag = std::hypot(static_cast<double>(pr[i]), static_cast<double>(pi[i]));
                if (log_scale) mag = std::log1p(mag);
                int oy = center_shift ? (y + h / 2) % h : y;
                int ox = center_shift ? (x + w / 2) % w : x;
                out[static_cast<size_t>(p * hw + static_cast<int64_t>(oy) * w + ox)] =
                    static_cast<T>(mag);
            }
    }
    return Tensor<T>::from(re.shape(), std::move(out));
}

#define DDSR_INSTANTIATE(T)                                                          \
    template void fft2_plane<T>(std::complex<T>*, int, int, bool);                   \
    template Tensor<T> fft2_packed<T>(const Tensor<T>&);                             \
    template Tensor<T> complex_plane<T>(const Tensor<T>&, int);                      \
    template Spectrum<T> fft2<T>(const Tensor<T>&);                                  \
    template Ifft2Result<T> ifft2<T>(const Spectrum<T>&);                            \
    template Tensor<T> amplitude_map<T>(const Spectrum<T>&, bool, bool);

DDSR_INSTANTIATE(float)
DDSR_INSTANTIATE(double)
#undef DDSR_INSTANTIATE

}  // namespace ddsr
