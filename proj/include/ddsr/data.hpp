#pragma once

#include "ddsr/tensor.hpp"

namespace ddsr {

enum class DegradationProfile { Simulated, Realistic };

const char* profile_name(DegradationProfile p);
DegradationProfile profile_from_name(const std::string& s);

// Deterministic recipe producing LR images from HR images. The simulated
// profile is bicubic-only; the realistic profile is Gaussian blur -> bicubic
// downsample -> additive Gaussian noise, clipped to [0,1].
struct DegradationSpec {
    DegradationProfile profile = DegradationProfile::Simulated;
    double blur_lo = 1.2;
    double blur_hi = 2.2;
    double noise_sigma = 0.01;
    int scale = 2;
    uint64_t seed = 7;

    void validate() const;
};

// Images are [C,H,W] float tensors in [0,1].

// Separable Catmull-Rom (a = -0.5) resampler; kernel footprint is widened and
// renormalized when shrinking, plain cubic interpolation when enlarging.
Tensor<float> resize_bicubic(const Tensor<float>& img, int out_h, int out_w);

// sigma 0 is the identity
Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma);

// Degrades one HR image; fully determined by (spec, image_index).
Tensor<float> degrade(const Tensor<float>& hr, const DegradationSpec& spec, uint64_t image_index);

// Procedurally generated HR corpus: gratings, rectangles, checkerboards,
// blobs, and stroke images, cycled by index. Image i is a pure function of
// (seed, index_offset + i).
std::vector<Tensor<float>> make_hr_corpus(int n, int size, uint64_t seed, int index_offset = 0);

struct DataSet {
    std::vector<Tensor<float>> hr;
    std::vector<Tensor<float>> lr;
};

DataSet make_synthetic_dataset(int n, int hr_size, const DegradationSpec& spec,
                               uint64_t corpus_seed, int index_offset = 0);

// Loads every PNG in a directory as HR and degrades per spec. Errors if the
// directory holds no usable image.
DataSet load_image_dataset(const std::string& dir, const DegradationSpec& spec);

Tensor<float> crop_image(const Tensor<float>& img, int y0, int x0, int h, int w);
void clip01(Tensor<float>& img);

}  // namespace ddsr
