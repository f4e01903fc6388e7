#include "rdstn/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "rdstn/errors.hpp"

namespace rdstn {

Rng derive_rng(std::uint64_t seed, std::uint64_t worker, std::uint64_t step) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(worker), hi(worker), lo(step), hi(step)};
    return Rng(seq);
}

double cell_center(int i, int n) {
    // Same value as -1 + (2i+1)/n with a single rounding; keeps the grid
    // exactly antisymmetric.
    return static_cast<double>(2 * i + 1 - n) / static_cast<double>(n);
}

int center_index(double coord, int n) {
    return static_cast<int>(std::lround(((coord + 1.0) * n - 1.0) / 2.0));
}

CoordinateGrid make_coord_grid(int h, int w) {
    if (h < 1 || w < 1) throw InvalidArgument("coordinate grid dimensions must be positive");
    CoordinateGrid grid{h, w, {}};
    grid.points.reserve(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) grid.points.push_back({cell_center(y, h), cell_center(x, w)});
    return grid;
}

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
    return 0.0;
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

namespace {

struct Tap {
    int index;
    double weight;
};

std::vector<std::vector<Tap>> axis_taps(int n_in, int n_out) {
    const double scale = static_cast<double>(n_in) / n_out;
    const double stretch = std::max(scale, 1.0);
    const double support = 2.0 * stretch;
    std::vector<std::vector<Tap>> taps(n_out);
    for (int j = 0; j < n_out; ++j) {
        const double center = (j + 0.5) * scale - 0.5;
        const int first = static_cast<int>(std::ceil(center - support));
        const int last = static_cast<int>(std::floor(center + support));
        double total = 0.0;
        for (int i = first; i <= last; ++i) {
            const double w = cubic_kernel((i - center) / stretch);
            if (w == 0.0) continue;
            taps[j].push_back({reflect_index(i, n_in), w});
            total += w;
        }
        for (auto& t : taps[j]) t.weight /= total;
    }
    return taps;
}

}  // namespace

Image downsample_bicubic(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InvalidArgument("resample target size must be positive");
    const auto row_taps = axis_taps(img.height, out_h);
    const auto col_taps = axis_taps(img.width, out_w);

    Image horizontal(img.channels, img.height, out_w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < out_w; ++x) {
                double s = 0.0;
                for (const auto& t : col_taps[x]) s += t.weight * img.at(c, y, t.index);
                horizontal.at(c, y, x) = s;
            }

    Image out(img.channels, out_h, out_w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                double s = 0.0;
                for (const auto& t : row_taps[y]) s += t.weight * horizontal.at(c, t.index, x);
                out.at(c, y, x) = s;
            }
    out.clamp_unit();
    return out;
}

std::optional<TrainingPair> synthesize_training_pair(const Image& hr, const PairOptions& opts, double scale,
                                                     Rng& rng) {
    if (opts.patch < 1 || opts.k_samples < 1) throw InvalidArgument("patch and k_samples must be positive");
    if (!(scale >= 1.0)) throw InvalidArgument("scale must be at least 1");
    const int side = static_cast<int>(std::lround(scale * opts.patch));
    if (side > hr.height || side > hr.width) return std::nullopt;

    std::uniform_int_distribution<int> top_dist(0, hr.height - side);
    std::uniform_int_distribution<int> left_dist(0, hr.width - side);
    const int top = top_dist(rng);
    const int left = left_dist(rng);
    Image crop = hr.crop(top, left, side, side);

    if (opts.augment) {
        std::bernoulli_distribution coin(0.5);
        const bool flip_h = coin(rng);
        const bool flip_v = coin(rng);
        Image flipped = crop;
        for (int c = 0; c < crop.channels; ++c)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x)
                    flipped.at(c, y, x) = crop.at(c, flip_v ? side - 1 - y : y, flip_h ? side - 1 - x : x);
        crop = std::move(flipped);
    }

    TrainingPair pair;
    pair.scale = scale;
    pair.hr_size = side;
    pair.lr_patch = downsample_bicubic(crop, opts.patch, opts.patch);

    const std::size_t cells = static_cast<std::size_t>(side) * side;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(opts.k_samples), cells);
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, cells - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    pair.query_coords.reserve(k);
    pair.targets.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const int y = static_cast<int>(order[i] / side);
        const int x = static_cast<int>(order[i] % side);
        pair.query_coords.push_back({cell_center(y, side), cell_center(x, side)});
        std::vector<double> target(crop.channels);
        for (int c = 0; c < crop.channels; ++c) target[c] = crop.at(c, y, x);
        pair.targets.push_back(std::move(target));
    }
    return pair;
}

std::vector<std::string> discover_images(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw EmptyDataset("not a directory: " + dir.string());
    std::vector<std::string> found;
    for (const auto& entry : fs::recursive_directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext != ".png") continue;
        const std::string stem = entry.path().stem().string();
        if (stem.find("_mask") != std::string::npos) continue;
        found.push_back(entry.path().string());
    }
    std::sort(found.begin(), found.end());
    return found;
}

DatasetSplit split_paths(std::vector<std::string> paths, double ratio, std::uint64_t seed) {
    if (paths.empty()) throw EmptyDataset("no images to split");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidArgument("split ratio must be in (0, 1]");
    std::sort(paths.begin(), paths.end());
    Rng rng(seed);
    for (std::size_t i = paths.size() - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(paths[i], paths[pick(rng)]);
    }
    // Small slack keeps e.g. 0.8 * 10 from rounding up to 9.
    const auto n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(paths.size()) - 1e-9));
    DatasetSplit split;
    split.seed = seed;
    split.ratio = ratio;
    split.train_paths.assign(paths.begin(), paths.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test_paths.assign(paths.begin() + static_cast<std::ptrdiff_t>(n_train), paths.end());
    return split;
}

DatasetSplit split_dataset(const std::filesystem::path& dir, double ratio, std::uint64_t seed) {
    auto paths = discover_images(dir);
    if (paths.empty()) throw EmptyDataset("no PNG images found in " + dir.string());
    return split_paths(std::move(paths), ratio, seed);
}

void save_manifest(const DatasetSplit& split, const std::filesystem::path& path) {
    nlohmann::json j;
    j["seed"] = split.seed;
    j["ratio"] = split.ratio;
    j["train"] = split.train_paths;
    j["test"] = split.test_paths;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetSplit load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        DatasetSplit split;
        split.seed = j.at("seed").get<std::uint64_t>();
        split.ratio = j.at("ratio").get<double>();
        split.train_paths = j.at("train").get<std::vector<std::string>>();
        split.test_paths = j.at("test").get<std::vector<std::string>>();
        return split;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("malformed manifest " + path.string() + ": " + e.what());
    }
}

Image add_gaussian_noise(const Image& img, double sigma, Rng& rng) {
    if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
    if (sigma == 0.0) return img;
    Image out = img;
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : out.values) v = std::clamp(v + noise(rng), 0.0, 1.0);
    return out;
}

}  // namespace rdstn
