#pragma once
#include "intrin/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace intrin {

// Interleaved 8-bit image, row-major; ch is 1 (gray) or 3 (rgb).
struct Image8 {
    int64_t h = 0, w = 0, ch = 0;
    std::vector<uint8_t> px;

    uint8_t& at(int64_t y, int64_t x, int64_t c) { return px[(y * w + x) * ch + c]; }
    uint8_t at(int64_t y, int64_t x, int64_t c) const { return px[(y * w + x) * ch + c]; }
};

// PNG I/O. Reading converts palette/alpha/16-bit variants down to 8-bit
// gray or rgb; writing accepts exactly 1 or 3 channels.
Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

// [C,H,W] floats in [0,1] <-> bytes (values clamped, then rounded).
Tensor image_to_float(const Image8& img);
Image8 float_to_image(const Tensor& chw);

// 16-bit binary PGM (P5, maxval 65535), big-endian samples per the format.
void write_pgm16(const std::string& path, const std::vector<uint16_t>& px, int64_t h, int64_t w);
std::vector<uint16_t> read_pgm16(const std::string& path, int64_t& h, int64_t& w);

} // namespace intrin
