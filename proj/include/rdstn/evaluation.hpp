#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdstn/model.hpp"

namespace rdstn {

double mean_squared_error(const Image& pred, const Image& gt);

// Peak 1.0. Identical images give +infinity, which reports flag as
// "identical".
double psnr(const Image& pred, const Image& gt);

struct BenchmarkRow {
    std::string method;
    double scale = 1.0;
    double psnr_db = 0.0;  // may be +inf
    std::size_t n_images = 0;
    double sigma = 0.0;
    bool best = false;  // highest PSNR at this scale (ties all flagged)

    friend bool operator==(const BenchmarkRow&, const BenchmarkRow&) = default;
};

struct BenchmarkTable {
    std::vector<BenchmarkRow> rows;
    nlohmann::json metadata = nlohmann::json::object();
};

struct SweepOptions {
    std::vector<double> scales;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;
    UpscaleOptions upscale;
};

// LR size for a degradation by `scale`: round(dim / scale), at least 1.
int degraded_size(int dim, double scale);

// Per image: LR = bicubic downsample by scale (+ optional noise), SR back to
// the original size with bicubic (model == nullptr) or the model, PSNR
// against the original. One row per scale holding the mean over images.
std::vector<BenchmarkRow> eval_scale_sweep(const std::vector<Image>& images, const std::string& method,
                                           const Model* model, const SweepOptions& opts);

struct LoadedImages {
    std::vector<Image> images;
    std::vector<std::string> paths;
    std::size_t skipped = 0;
};

// Unreadable files are skipped and counted.
LoadedImages load_images(const std::vector<std::string>& paths, int channels);

// Every PNG under `dir` is a test image; records the skip count in metadata.
BenchmarkTable generalization_eval(const std::vector<std::pair<std::string, const Model*>>& methods,
                                   const std::filesystem::path& dir, int channels, const SweepOptions& opts);

// Sorts rows by (method, scale) and sets the per-scale best flags.
void finalize_table(BenchmarkTable& table);

nlohmann::json table_to_json(const BenchmarkTable& table);
BenchmarkTable table_from_json(const nlohmann::json& j);
std::string table_to_csv(const BenchmarkTable& table);

// Writes report.csv and report.json into `out_dir`.
void emit_report(const BenchmarkTable& table, const std::filesystem::path& out_dir);

}  // namespace rdstn
