#include "ddsr/metrics.hpp"

#include <cmath>
#include <complex>

#include "ddsr/fft.hpp"

namespace ddsr {

double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak) {
    DDSR_CHECK(a.shape() == b.shape(), "psnr: shape mismatch");
    double mse = 0;
    const float* pa = a.ptr();
    const float* pb = b.ptr();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(pa[i]) - pb[i];
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    if (mse <= 0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

namespace {

constexpr int kSsimWin = 11;
constexpr double kSsimSigma = 1.5;

const std::vector<double>& ssim_kernel() {
    static std::vector<double> k = [] {
        std::vector<double> v(kSsimWin);
        double sum = 0;
        int r = kSsimWin / 2;
        for (int i = 0; i < kSsimWin; ++i) {
            double d = i - r;
            v[static_cast<size_t>(i)] = std::exp(-0.5 * d * d / (kSsimSigma * kSsimSigma));
            sum += v[static_cast<size_t>(i)];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return k;
}

// separable Gaussian filter, valid region only: output is (h-10)x(w-10)
std::vector<double> filter_valid(const float* img, int h, int w, int& oh, int& ow) {
    const auto& k = ssim_kernel();
    oh = h - kSsimWin + 1;
    ow = w - kSsimWin + 1;
    std::vector<double> tmp(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < kSsimWin; ++i) acc += k[static_cast<size_t>(i)] * img[y * w + x + i];
            tmp[static_cast<size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < kSsimWin; ++i)
                acc += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
            out[static_cast<size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
    DDSR_CHECK(a.shape() == b.shape() && a.ndim() == 3, "ssim: expects matching [C,H,W]");
    int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    DDSR_CHECK(h >= kSsimWin && w >= kSsimWin, "ssim: image smaller than the 11x11 window");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    for (int ch = 0; ch < c; ++ch) {
        const float* pa = a.ptr() + static_cast<size_t>(ch) * h * w;
        const float* pb = b.ptr() + static_cast<size_t>(ch) * h * w;
        std::vector<float> aa(static_cast<size_t>(h) * w), bb(aa.size()), ab(aa.size());
        for (size_t i = 0; i < aa.size(); ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        int oh, ow;
        auto mu_a = filter_valid(pa, h, w, oh, ow);
        auto mu_b = filter_valid(pb, h, w, oh, ow);
        auto m_aa = filter_valid(aa.data(), h, w, oh, ow);
        auto m_bb = filter_valid(bb.data(), h, w, oh, ow);
        auto m_ab = filter_valid(ab.data(), h, w, oh, ow);
        double acc = 0;
        for (size_t i = 0; i < mu_a.size(); ++i) {
            double va = m_aa[i] - mu_a[i] * mu_a[i];
            double vb = m_bb[i] - mu_b[i] * mu_b[i];
            double cov = m_ab[i] - mu_a[i] * mu_b[i];
            double num = (2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2);
            double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
            acc += num / den;
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / c;
}

namespace {

// orthonormal per-channel amplitude spectra
std::vector<double> amplitudes(const Tensor<float>& img) {
    int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<double> amp(static_cast<size_t>(c) * h * w);
    std::vector<std::complex<float>> buf(static_cast<size_t>(h) * w);
    for (int ch = 0; ch < c; ++ch) {
        const float* p = img.ptr() + static_cast<size_t>(ch) * h * w;
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
            buf[static_cast<size_t>(i)] = std::complex<float>(p[i], 0.0f);
        fft2_plane(buf.data(), h, w, false);
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
            amp[static_cast<size_t>(ch) * h * w + static_cast<size_t>(i)] =
                std::abs(std::complex<double>(buf[static_cast<size_t>(i)]));
    }
    return amp;
}

bool in_high_band(int y, int x, int h, int w, double cutoff) {
    int fy = y <= h / 2 ? y : y - h;
    int fx = x <= w / 2 ? x : x - w;
    double ny = static_cast<double>(fy) / h;
    double nx = static_cast<double>(fx) / w;
    return std::sqrt(ny * ny + nx * nx) >= cutoff;
}

}  // namespace

double high_band_amplitude_error(const Tensor<float>& pred, const Tensor<float>& gt,
                                 double cutoff) {
    DDSR_CHECK(pred.shape() == gt.shape() && pred.ndim() == 3,
               "high_band_amplitude_error: expects matching [C,H,W]");
    int c = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    auto ap = amplitudes(pred);
    auto ag = amplitudes(gt);
    double acc = 0;
    int64_t count = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!in_high_band(y, x, h, w, cutoff)) continue;
                size_t i = (static_cast<size_t>(ch) * h + y) * w + x;
                acc += std::abs(ap[i] - ag[i]);
                ++count;
            }
    DDSR_CHECK(count > 0, "high_band_amplitude_error: empty band");
    return acc / static_cast<double>(count);
}

double high_band_mass(const Tensor<float>& img, double cutoff) {
    DDSR_CHECK(img.ndim() == 3, "high_band_mass expects [C,H,W]");
    int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    auto amp = amplitudes(img);
    double acc = 0;
    int64_t count = 0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!in_high_band(y, x, h, w, cutoff)) continue;
                acc += amp[(static_cast<size_t>(ch) * h + y) * w + x];
                ++count;
            }
    DDSR_CHECK(count > 0, "high_band_mass: empty band");
    return acc / static_cast<double>(count);
}

}  // namespace ddsr
