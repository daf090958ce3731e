#include "intrin/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace intrin {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

Image8 read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path + " for reading");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    // normalize every variant to 8-bit gray or rgb
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int64_t ch = (int64_t)png_get_channels(png, info);
    if (ch != 1 && ch != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": unsupported channel count after conversion");
    }

    Image8 img;
    img.h = h;
    img.w = w;
    img.ch = ch;
    img.px.resize((size_t)h * w * ch);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; y++) rows[y] = img.px.data() + (size_t)y * w * ch;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const Image8& img) {
    if (img.ch != 1 && img.ch != 3)
        throw std::invalid_argument("write_png: channel count must be 1 or 3");
    if (img.h < 1 || img.w < 1 || (int64_t)img.px.size() != img.h * img.w * img.ch)
        throw std::invalid_argument("write_png: inconsistent image dimensions");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, (png_uint_32)img.w, (png_uint_32)img.h, 8,
                 img.ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int64_t y = 0; y < img.h; y++)
        png_write_row(png, const_cast<png_bytep>(img.px.data() + (size_t)y * img.w * img.ch));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor image_to_float(const Image8& img) {
    Tensor out({img.ch, img.h, img.w});
    for (int64_t c = 0; c < img.ch; c++)
        for (int64_t y = 0; y < img.h; y++)
            for (int64_t x = 0; x < img.w; x++)
                out.ptr()[(c * img.h + y) * img.w + x] = (double)img.at(y, x, c) / 255.0;
    return out;
}

Image8 float_to_image(const Tensor& chw) {
    if (chw.shape.size() != 3 || (chw.shape[0] != 1 && chw.shape[0] != 3))
        throw std::invalid_argument("float_to_image expects [1|3,H,W], got " + chw.shape_str());
    Image8 img;
    img.ch = chw.shape[0];
    img.h = chw.shape[1];
    img.w = chw.shape[2];
    img.px.resize((size_t)img.ch * img.h * img.w);
    for (int64_t c = 0; c < img.ch; c++)
        for (int64_t y = 0; y < img.h; y++)
            for (int64_t x = 0; x < img.w; x++) {
                double v = chw.ptr()[(c * img.h + y) * img.w + x];
                v = std::min(1.0, std::max(0.0, v));
                img.at(y, x, c) = (uint8_t)std::lround(v * 255.0);
            }
    return img;
}

void write_pgm16(const std::string& path, const std::vector<uint16_t>& px, int64_t h, int64_t w) {
    if ((int64_t)px.size() != h * w) throw std::invalid_argument("write_pgm16: size mismatch");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
    std::fprintf(fp.get(), "P5\n%lld %lld\n65535\n", (long long)w, (long long)h);
    for (uint16_t v : px) {
        uint8_t be[2] = {(uint8_t)(v >> 8), (uint8_t)(v & 0xff)};
        if (std::fwrite(be, 1, 2, fp.get()) != 2) throw std::runtime_error("short write to " + path);
    }
}

std::vector<uint16_t> read_pgm16(const std::string& path, int64_t& h, int64_t& w) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path + " for reading");
    char magic[3] = {};
    long long ww = 0, hh = 0, maxv = 0;
    if (std::fscanf(fp.get(), "%2s %lld %lld %lld", magic, &ww, &hh, &maxv) != 4 ||
        std::strcmp(magic, "P5") != 0 || maxv != 65535)
        throw std::runtime_error(path + ": not a 16-bit P5 PGM");
    std::fgetc(fp.get()); // the single whitespace byte after maxval
    w = ww;
    h = hh;
    std::vector<uint16_t> px((size_t)(ww * hh));
    for (auto& v : px) {
        int hi = std::fgetc(fp.get()), lo = std::fgetc(fp.get());
        if (hi == EOF || lo == EOF) throw std::runtime_error(path + ": truncated pixel data");
        v = (uint16_t)((hi << 8) | lo);
    }
    return px;
}

} // namespace intrin
