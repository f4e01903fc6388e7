#pragma once

#include <filesystem>
#include <vector>

namespace rdstn {

// Planar (C, H, W) image with intensities in [0, 1].
struct Image {
    int channels = 1;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Image() = default;
    Image(int channels, int height, int width, double fill = 0.0);

    double& at(int c, int y, int x) { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

    void clamp_unit();
    Image crop(int top, int left, int h, int w) const;

    friend bool operator==(const Image&, const Image&) = default;
};

// Luma-weighted (ITU-R BT.601) conversion; identity for single-channel input.
Image to_grayscale(const Image& img);

// Reads 8/16-bit grayscale and 8-bit RGB PNGs (palette and alpha are expanded
// or stripped). Samples are divided by the bit depth's maximum value. When
// `channels` is 1 or 3 the result is converted to that channel count.
Image load_png(const std::filesystem::path& path, int channels = 0);

// Writes an 8-bit (or 16-bit) grayscale / RGB PNG, rounding to nearest.
void save_png(const Image& img, const std::filesystem::path& path, int bit_depth = 8);

}  // namespace rdstn
