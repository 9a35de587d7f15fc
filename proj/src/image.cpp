#include "ddsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>

namespace ddsr {

uint8_t quantize8(float v) {
    float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<uint8_t>(std::floor(c * 255.0f + 0.5f));
}

Tensor<float> read_png(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    DDSR_CHECK_DATA(fp != nullptr, "cannot open image '" << path << "'");
    png_byte header[8];
    DDSR_CHECK_DATA(std::fread(header, 1, 8, fp.get()) == 8 && !png_sig_cmp(header, 0, 8),
               "'" << path << "' is not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    DDSR_CHECK(png, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        DDSR_CHECK(false, "libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        DDSR_CHECK(false, "libpng failed reading '" << path << "'");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w, h;
    int bit_depth, color_type;
    png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<png_byte> row(png_get_rowbytes(png, info));
    std::vector<float> data(static_cast<size_t>(3) * h * w);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                data[(static_cast<size_t>(c) * h + y) * w + x] =
                    static_cast<float>(row[x * 3 + static_cast<size_t>(c)]) / 255.0f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return Tensor<float>::from({3, static_cast<int>(h), static_cast<int>(w)}, std::move(data));
}

void write_png(const std::string& path, const Tensor<float>& img) {
    DDSR_CHECK(img.ndim() == 3 && (img.dim(0) == 3 || img.dim(0) == 1),
               "write_png expects [3,H,W] or [1,H,W], got " << shape_str(img.shape()));
    int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    DDSR_CHECK(fp != nullptr, "cannot write image '" << path << "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    DDSR_CHECK(png, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        DDSR_CHECK(false, "libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        DDSR_CHECK(false, "libpng failed writing '" << path << "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(w) * c);
    const float* p = img.ptr();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                row[static_cast<size_t>(x) * c + ch] =
                    quantize8(p[(static_cast<size_t>(ch) * h + y) * w + x]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace ddsr
