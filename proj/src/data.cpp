#include "ddsr/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ddsr/image.hpp"

namespace ddsr {

const char* profile_name(DegradationProfile p) {
    return p == DegradationProfile::Simulated ? "simulated" : "realistic";
}

DegradationProfile profile_from_name(const std::string& s) {
    if (s == "simulated") return DegradationProfile::Simulated;
    if (s == "realistic") return DegradationProfile::Realistic;
    DDSR_CHECK(false, "unknown degradation profile '" << s << "'");
    return DegradationProfile::Simulated;
}

void DegradationSpec::validate() const {
    DDSR_CHECK(scale >= 1, "degradation: scale must be positive");
    DDSR_CHECK(blur_lo >= 0 && blur_hi >= blur_lo, "degradation: bad blur range");
    DDSR_CHECK(noise_sigma >= 0 && noise_sigma <= 1, "degradation: noise sigma outside [0,1]");
}

namespace {

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

struct ResampleTap {
    int first;
    std::vector<double> w;
};

// one tap list per output coordinate; kernel widened by 1/scale when shrinking
std::vector<ResampleTap> make_taps(int in_n, int out_n) {
    double scale = static_cast<double>(out_n) / in_n;
    double support = scale < 1.0 ? 2.0 / scale : 2.0;
    std::vector<ResampleTap> taps(static_cast<size_t>(out_n));
    for (int i = 0; i < out_n; ++i) {
        double center = (i + 0.5) / scale - 0.5;
        int lo = static_cast<int>(std::floor(center - support + 0.5));
        int hi = static_cast<int>(std::floor(center + support + 0.5));
        ResampleTap tap;
        tap.first = lo;
        double sum = 0;
        for (int j = lo; j <= hi; ++j) {
            double t = center - j;
            double w = scale < 1.0 ? cubic_kernel(t * scale) : cubic_kernel(t);
            tap.w.push_back(w);
            sum += w;
        }
        DDSR_CHECK(sum > 0, "resize_bicubic: degenerate kernel");
        for (auto& w : tap.w) w /= sum;
        taps[static_cast<size_t>(i)] = std::move(tap);
    }
    return taps;
}

// resample the last axis of rows of length in_n
void resample_axis(const float* src, float* dst, int64_t rows, int in_n,
                   const std::vector<ResampleTap>& taps) {
    int out_n = static_cast<int>(taps.size());
    for (int64_t r = 0; r < rows; ++r) {
        const float* s = src + r * in_n;
        float* d = dst + r * out_n;
        for (int i = 0; i < out_n; ++i) {
            const ResampleTap& tap = taps[static_cast<size_t>(i)];
            double acc = 0;
            for (size_t k = 0; k < tap.w.size(); ++k) {
                int j = std::clamp(tap.first + static_cast<int>(k), 0, in_n - 1);
                acc += tap.w[k] * s[j];
            }
            d[i] = static_cast<float>(acc);
        }
    }
}

// transpose [rows, cols] -> [cols, rows] per channel plane
std::vector<float> transpose_plane(const std::vector<float>& v, int c, int h, int w) {
    std::vector<float> out(v.size());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(static_cast<size_t>(ch) * w + x) * h + y] =
                    v[(static_cast<size_t>(ch) * h + y) * w + x];
    return out;
}

}  // namespace

Tensor<float> resize_bicubic(const Tensor<float>& img, int out_h, int out_w) {
    DDSR_CHECK(img.ndim() == 3, "resize_bicubic expects [C,H,W]");
    int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    DDSR_CHECK(out_h >= 1 && out_w >= 1, "resize_bicubic: empty target");
    auto wtaps = make_taps(w, out_w);
    std::vector<float> tmp(static_cast<size_t>(c) * h * out_w);
    resample_axis(img.ptr(), tmp.data(), static_cast<int64_t>(c) * h, w, wtaps);
    // columns: transpose, resample rows, transpose back
    std::vector<float> tr = transpose_plane(tmp, c, h, out_w);
    auto htaps = make_taps(h, out_h);
    std::vector<float> tr_out(static_cast<size_t>(c) * out_w * out_h);
    resample_axis(tr.data(), tr_out.data(), static_cast<int64_t>(c) * out_w, h, htaps);
    std::vector<float> out = transpose_plane(tr_out, c, out_w, out_h);
    // transpose_plane(tr_out) treats planes as [out_w, out_h]; result is [out_h, out_w]
    return Tensor<float>::from({c, out_h, out_w}, std::move(out));
}

Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma) {
    DDSR_CHECK(img.ndim() == 3, "gaussian_blur expects [C,H,W]");
    if (sigma <= 0) return Tensor<float>::from(img.shape(), img.data());
    int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    std::vector<float> tmp(img.data().size()), out(img.data().size());
    const float* src = img.ptr();
    // horizontal
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    int sx = std::clamp(x + i, 0, w - 1);
                    acc += k[static_cast<size_t>(i + radius)] *
                           src[(static_cast<size_t>(ch) * h + y) * w + sx];
                }
                tmp[(static_cast<size_t>(ch) * h + y) * w + x] = static_cast<float>(acc);
            }
    // vertical
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    int sy = std::clamp(y + i, 0, h - 1);
                    acc += k[static_cast<size_t>(i + radius)] *
                           tmp[(static_cast<size_t>(ch) * h + sy) * w + x];
                }
                out[(static_cast<size_t>(ch) * h + y) * w + x] = static_cast<float>(acc);
            }
    return Tensor<float>::from(img.shape(), std::move(out));
}

void clip01(Tensor<float>& img) {
    for (auto& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
}

Tensor<float> degrade(const Tensor<float>& hr, const DegradationSpec& spec,
                      uint64_t image_index) {
    spec.validate();
    DDSR_CHECK(hr.ndim() == 3, "degrade expects [C,H,W]");
    int h = hr.dim(1), w = hr.dim(2);
    DDSR_CHECK(h % spec.scale == 0 && w % spec.scale == 0,
               "degrade: " << h << "x" << w << " not divisible by scale " << spec.scale);
    int lh = h / spec.scale, lw = w / spec.scale;
    if (spec.profile == DegradationProfile::Simulated) {
        Tensor<float> lr = resize_bicubic(hr, lh, lw);
        clip01(lr);
        return lr;
    }
    Rng rng = Rng(spec.seed).fork(0xde90 + image_index);
    double sigma = rng.uniform(spec.blur_lo, spec.blur_hi);
    Tensor<float> lr = resize_bicubic(gaussian_blur(hr, sigma), lh, lw);
    if (spec.noise_sigma > 0) {
        for (auto& v : lr.data())
            v += static_cast<float>(rng.normal(0.0, spec.noise_sigma));
    }
    clip01(lr);
    return lr;
}

namespace {

Tensor<float> blank(int size) { return Tensor<float>::zeros({3, size, size}); }

void synth_gratings(Tensor<float>& img, Rng& rng) {
    // frequencies stay below ~0.17 cycles/px so a 2x downsample keeps them
    int s = img.dim(1);
    double base[3] = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    struct Wave { double fx, fy, phase, amp; };
    std::vector<Wave> waves;
    for (int i = 0; i < 4; ++i)
        waves.push_back({rng.uniform(-0.17, 0.17) * 2 * M_PI, rng.uniform(-0.17, 0.17) * 2 * M_PI,
                         rng.uniform(0.0, 2 * M_PI), rng.uniform(0.05, 0.22)});
    float* p = img.ptr();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                double v = base[c];
                for (const auto& wv : waves)
                    v += wv.amp * std::sin(wv.fx * x + wv.fy * y + wv.phase + 0.9 * c);
                p[(static_cast<size_t>(c) * s + y) * s + x] = static_cast<float>(v);
            }
}

void synth_rectangles(Tensor<float>& img, Rng& rng) {
    int s = img.dim(1);
    float* p = img.ptr();
    double bg[3] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    for (int c = 0; c < 3; ++c)
        std::fill(p + static_cast<size_t>(c) * s * s, p + static_cast<size_t>(c + 1) * s * s,
                  static_cast<float>(bg[c]));
    int n = static_cast<int>(rng.uniform_int(8, 16));
    for (int i = 0; i < n; ++i) {
        int y0 = static_cast<int>(rng.uniform_int(0, s - 2));
        int x0 = static_cast<int>(rng.uniform_int(0, s - 2));
        int hh = static_cast<int>(rng.uniform_int(1, std::max<int64_t>(2, s / 3)));
        int ww = static_cast<int>(rng.uniform_int(1, std::max<int64_t>(2, s / 3)));
        double col[3] = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
        for (int c = 0; c < 3; ++c)
            for (int y = y0; y < std::min(s, y0 + hh); ++y)
                for (int x = x0; x < std::min(s, x0 + ww); ++x)
                    p[(static_cast<size_t>(c) * s + y) * s + x] = static_cast<float>(col[c]);
    }
}

void synth_checker(Tensor<float>& img, Rng& rng) {
    int s = img.dim(1);
    float* p = img.ptr();
    int cell_a = static_cast<int>(rng.uniform_int(4, 6));
    int cell_b = static_cast<int>(rng.uniform_int(8, 14));
    double lo = rng.uniform(0.0, 0.25), hi = rng.uniform(0.75, 1.0);
    double tint[3] = {rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0)};
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            int cell = (x < s / 2) ? cell_a : cell_b;
            bool on = ((y / cell) + (x / cell)) % 2 == 0;
            double v = on ? hi : lo;
            for (int c = 0; c < 3; ++c)
                p[(static_cast<size_t>(c) * s + y) * s + x] = static_cast<float>(v * tint[c]);
        }
}

void synth_blobs(Tensor<float>& img, Rng& rng) {
    int s = img.dim(1);
    float* p = img.ptr();
    double bg = rng.uniform(0.2, 0.5);
    for (auto& v : img.data()) v = static_cast<float>(bg);
    int n = static_cast<int>(rng.uniform_int(6, 12));
    for (int i = 0; i < n; ++i) {
        double cy = rng.uniform(0.0, s), cx = rng.uniform(0.0, s);
        double rad = rng.uniform(s * 0.04, s * 0.25);
        double col[3] = {rng.uniform(-0.5, 0.6), rng.uniform(-0.5, 0.6), rng.uniform(-0.5, 0.6)};
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) {
                    double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                    p[(static_cast<size_t>(c) * s + y) * s + x] +=
                        static_cast<float>(col[c] * std::exp(-d2 / (2 * rad * rad)));
                }
    }
}

void synth_strokes(Tensor<float>& img, Rng& rng) {
    int s = img.dim(1);
    float* p = img.ptr();
    double bg = rng.uniform(0.75, 0.95);
    for (auto& v : img.data()) v = static_cast<float>(bg);
    int n = static_cast<int>(rng.uniform_int(12, 24));
    for (int i = 0; i < n; ++i) {
        double y = rng.uniform(0.0, s), x = rng.uniform(0.0, s);
        double ang = rng.uniform(0.0, 2 * M_PI);
        double len = rng.uniform(s * 0.1, s * 0.5);
        double ink = rng.uniform(0.0, 0.3);
        int steps = static_cast<int>(len * 2);
        double dy = std::sin(ang) * 0.5, dx = std::cos(ang) * 0.5;
        for (int t = 0; t < steps; ++t) {
            int iy = static_cast<int>(y), ix = static_cast<int>(x);
            // 2 px wide so strokes survive a 2x downsample
            for (int oy = 0; oy < 2; ++oy)
                for (int ox = 0; ox < 2; ++ox) {
                    int yy = iy + oy, xx = ix + ox;
                    if (yy >= 0 && yy < s && xx >= 0 && xx < s)
                        for (int c = 0; c < 3; ++c)
                            p[(static_cast<size_t>(c) * s + yy) * s + xx] =
                                static_cast<float>(ink);
                }
            y += dy;
            x += dx;
        }
    }
}

}  // namespace

std::vector<Tensor<float>> make_hr_corpus(int n, int size, uint64_t seed, int index_offset) {
    DDSR_CHECK(n >= 0 && size >= 8, "make_hr_corpus: bad arguments");
    std::vector<Tensor<float>> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        uint64_t idx = static_cast<uint64_t>(index_offset + i);
        Rng rng = Rng(seed).fork(0xc0ffee + idx);
        Tensor<float> img = blank(size);
        switch (idx % 5) {
            case 0: synth_gratings(img, rng); break;
            case 1: synth_rectangles(img, rng); break;
            case 2: synth_checker(img, rng); break;
            case 3: synth_blobs(img, rng); break;
            default: synth_strokes(img, rng); break;
        }
        clip01(img);
        out.push_back(std::move(img));
    }
    return out;
}

DataSet make_synthetic_dataset(int n, int hr_size, const DegradationSpec& spec,
                               uint64_t corpus_seed, int index_offset) {
    DataSet ds;
    ds.hr = make_hr_corpus(n, hr_size, corpus_seed, index_offset);
    for (size_t i = 0; i < ds.hr.size(); ++i)
        ds.lr.push_back(degrade(ds.hr[i], spec, static_cast<uint64_t>(index_offset) + i));
    return ds;
}

DataSet load_image_dataset(const std::string& dir, const DegradationSpec& spec) {
    namespace fs = std::filesystem;
    DDSR_CHECK_DATA(fs::is_directory(dir), "data directory '" << dir << "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    DDSR_CHECK_DATA(!files.empty(), "data directory '" << dir << "' holds no PNG images");
    DataSet ds;
    for (size_t i = 0; i < files.size(); ++i) {
        Tensor<float> hr = read_png(files[i].string());
        // crop to a multiple of the scale
        int h = hr.dim(1) - hr.dim(1) % spec.scale;
        int w = hr.dim(2) - hr.dim(2) % spec.scale;
        DDSR_CHECK_DATA(h >= spec.scale && w >= spec.scale,
                   "image " << files[i] << " smaller than one scale step");
        hr = crop_image(hr, 0, 0, h, w);
        ds.lr.push_back(degrade(hr, spec, i));
        ds.hr.push_back(std::move(hr));
    }
    return ds;
}

Tensor<float> crop_image(const Tensor<float>& img, int y0, int x0, int h, int w) {
    DDSR_CHECK(img.ndim() == 3, "crop_image expects [C,H,W]");
    int c = img.dim(0), ih = img.dim(1), iw = img.dim(2);
    DDSR_CHECK(y0 >= 0 && x0 >= 0 && y0 + h <= ih && x0 + w <= iw, "crop_image: out of bounds");
    std::vector<float> out(static_cast<size_t>(c) * h * w);
    const float* p = img.ptr();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(static_cast<size_t>(ch) * h + y) * w + x] =
                    p[(static_cast<size_t>(ch) * ih + (y0 + y)) * iw + (x0 + x)];
    return Tensor<float>::from({c, h, w}, std::move(out));
}

}  // namespace ddsr
