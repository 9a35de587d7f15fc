#pragma once

#include "ddsr/tensor.hpp"

namespace ddsr {

// 8-bit PNG I/O. Images in memory are [C,H,W] float in [0,1]; grayscale files
// load with the gray plane replicated to 3 channels, alpha is dropped.
Tensor<float> read_png(const std::string& path);

// Writes [3,H,W] (RGB) or [1,H,W] (gray). Values are clipped to [0,1] and
// quantized round-half-up.
void write_png(const std::string& path, const Tensor<float>& img);

uint8_t quantize8(float v);

}  // namespace ddsr
