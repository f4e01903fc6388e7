#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rdstn/image.hpp"

namespace rdstn {

using Rng = std::mt19937_64;

// Independent stream for (seed, worker, step); the sample sequence does not
// depend on how many workers share the load.
Rng derive_rng(std::uint64_t seed, std::uint64_t worker, std::uint64_t step);

// Normalised pixel-centre coordinate, (row, col) order, each in [-1, 1].
struct QueryPoint {
    double y = 0.0;
    double x = 0.0;
    friend bool operator==(const QueryPoint&, const QueryPoint&) = default;
};

// Centre of cell i among n cells: -1 + (2i + 1) / n.
double cell_center(int i, int n);
// Inverse of cell_center for exact centres.
int center_index(double coord, int n);

struct CoordinateGrid {
    int height = 0;
    int width = 0;
    std::vector<QueryPoint> points;  // row-major

    const QueryPoint& at(int y, int x) const { return points[static_cast<std::size_t>(y) * width + x]; }
};

CoordinateGrid make_coord_grid(int h, int w);

// Separable Catmull-Rom (a = -0.5) resampling with reflect borders. When
// shrinking, the kernel is widened by the scale factor so it low-passes
// instead of aliasing. Output is clamped to [0, 1].
Image downsample_bicubic(const Image& img, int out_h, int out_w);

// Catmull-Rom cubic kernel, a = -0.5.
double cubic_kernel(double t);

// Mirror index (..., 2, 1, 0, 1, 2, ...) into [0, n).
int reflect_index(int i, int n);

struct TrainingPair {
    Image lr_patch;
    std::vector<QueryPoint> query_coords;  // in the HR crop frame
    std::vector<std::vector<double>> targets;
    double scale = 1.0;
    int hr_size = 0;
};

struct PairOptions {
    int patch = 48;
    int k_samples = 2304;
    bool augment = false;  // random horizontal / vertical flips
};

// Returns std::nullopt when `hr` is smaller than the required crop so the
// caller can draw another image.
std::optional<TrainingPair> synthesize_training_pair(const Image& hr, const PairOptions& opts, double scale,
                                                     Rng& rng);

struct DatasetSplit {
    std::vector<std::string> train_paths;
    std::vector<std::string> test_paths;
    std::uint64_t seed = 0;
    double ratio = 0.8;
};

// PNG files under `dir` (recursive, sorted), skipping segmentation masks
// whose stem contains "_mask".
std::vector<std::string> discover_images(const std::filesystem::path& dir);

DatasetSplit split_dataset(const std::filesystem::path& dir, double ratio, std::uint64_t seed);
DatasetSplit split_paths(std::vector<std::string> paths, double ratio, std::uint64_t seed);

void save_manifest(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_manifest(const std::filesystem::path& path);

Image add_gaussian_noise(const Image& img, double sigma, Rng& rng);

}  // namespace rdstn
