#include "rdstn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <memory>

#include "rdstn/errors.hpp"

namespace rdstn {

Image::Image(int c, int h, int w, double fill) : channels(c), height(h), width(w) {
    if (c < 1 || h < 1 || w < 1) throw InvalidArgument("image dimensions must be positive");
    values.assign(static_cast<std::size_t>(c) * h * w, fill);
}

void Image::clamp_unit() {
    for (double& v : values) v = std::clamp(v, 0.0, 1.0);
}

Image Image::crop(int top, int left, int h, int w) const {
    if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > height || left + w > width) {
        throw InvalidArgument("crop window outside the image");
    }
    Image out(channels, h, w);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = at(c, top + y, left + x);
    return out;
}

Image to_grayscale(const Image& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) throw InvalidArgument("grayscale conversion needs 1 or 3 channels");
    Image out(1, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(0, y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

Image load_png(const std::filesystem::path& path, int channels) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open " + path.string());

    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }

    Image img;
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("cannot decode " + path.string() + ": " + message);
    }

    png_init_io(png, file.get());
    png_read_info(png, info);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int src_channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * h);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const int kept = src_channels >= 3 ? 3 : 1;
    img = Image(kept, h, w);
    const double maxval = depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < kept; ++c) {
                const std::size_t idx = static_cast<std::size_t>(x) * src_channels + c;
                double raw;
                if (depth == 16) {
                    std::uint16_t v;
                    std::memcpy(&v, rows[y] + 2 * idx, 2);
                    raw = v;
                } else {
                    raw = rows[y][idx];
                }
                img.at(c, y, x) = raw / maxval;
            }
        }
    }

    if (channels == 1 && img.channels == 3) return to_grayscale(img);
    if (channels == 3 && img.channels == 1) {
        Image rgb(3, h, w);
        for (int c = 0; c < 3; ++c) std::copy(img.values.begin(), img.values.end(),
                                              rgb.values.begin() + static_cast<std::ptrdiff_t>(c) * h * w);
        return rgb;
    }
    return img;
}

void save_png(const Image& img, const std::filesystem::path& path, int bit_depth) {
    if (img.channels != 1 && img.channels != 3) throw InvalidArgument("PNG output needs 1 or 3 channels");
    if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("PNG bit depth must be 8 or 16");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot create " + path.string());

    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }

    const int bytes = bit_depth / 8;
    const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels * bytes;
    std::vector<png_byte> buffer(rowbytes * img.height);
    const double maxval = bit_depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                const auto q = static_cast<unsigned>(std::lround(v * maxval));
                png_byte* dst = buffer.data() + y * rowbytes + (static_cast<std::size_t>(x) * img.channels + c) * bytes;
                if (bytes == 2) {
                    dst[0] = static_cast<png_byte>(q >> 8);
                    dst[1] = static_cast<png_byte>(q & 0xff);
                } else {
                    dst[0] = static_cast<png_byte>(q);
                }
            }
        }
    }
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + y * rowbytes;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("cannot encode " + path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, img.width, img.height, bit_depth,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace rdstn
