#include "rdstn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "rdstn/data_pipeline.hpp"
#include "rdstn/errors.hpp"

namespace rdstn {

double mean_squared_error(const Image& pred, const Image& gt) {
    if (pred.channels != gt.channels || pred.height != gt.height || pred.width != gt.width) {
        throw InvalidArgument("PSNR needs images of identical shape");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        const double d = pred.values[i] - gt.values[i];
        sum += d * d;
    }
    return sum / static_cast<double>(gt.values.size());
}

double psnr(const Image& pred, const Image& gt) {
    const double mse = mean_squared_error(pred, gt);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

int degraded_size(int dim, double scale) {
    return std::max(1, static_cast<int>(std::lround(dim / scale)));
}

std::vector<BenchmarkRow> eval_scale_sweep(const std::vector<Image>& images, const std::string& method,
                                           const Model* model, const SweepOptions& opts) {
    if (images.empty()) throw EmptyDataset("no evaluation images");
    std::vector<BenchmarkRow> rows;
    for (std::size_t si = 0; si < opts.scales.size(); ++si) {
        const double scale = opts.scales[si];
        if (!(scale >= 1.0)) throw InvalidArgument("evaluation scales must be >= 1");
        double total = 0.0;
        for (std::size_t i = 0; i < images.size(); ++i) {
            const Image& gt = images[i];
            Image lr = downsample_bicubic(gt, degraded_size(gt.height, scale), degraded_size(gt.width, scale));
            if (opts.noise_sigma > 0.0) {
                Rng rng = derive_rng(opts.noise_seed, i, si);
                lr = add_gaussian_noise(lr, opts.noise_sigma, rng);
            }
            const Image sr = model ? upscale(lr, *model, gt.height, gt.width, opts.upscale)
                                   : downsample_bicubic(lr, gt.height, gt.width);
            total += psnr(sr, gt);
        }
        rows.push_back({method, scale, total / static_cast<double>(images.size()), images.size(), opts.noise_sigma, false});
    }
    return rows;
}

LoadedImages load_images(const std::vector<std::string>& paths, int channels) {
    LoadedImages out;
    for (const auto& p : paths) {
        try {
            out.images.push_back(load_png(p, channels));
            out.paths.push_back(p);
        } catch (const Error&) {
            ++out.skipped;
        }
    }
    return out;
}

BenchmarkTable generalization_eval(const std::vector<std::pair<std::string, const Model*>>& methods,
                                   const std::filesystem::path& dir, int channels, const SweepOptions& opts) {
    const auto paths = discover_images(dir);
    if (paths.empty()) throw EmptyDataset("no PNG images found in " + dir.string());
    const LoadedImages loaded = load_images(paths, channels);
    if (loaded.images.empty()) throw EmptyDataset("no readable images in " + dir.string());
    BenchmarkTable table;
    for (const auto& [name, model] : methods) {
        auto rows = eval_scale_sweep(loaded.images, name, model, opts);
        table.rows.insert(table.rows.end(), rows.begin(), rows.end());
    }
    table.metadata["dataset"] = dir.string();
    table.metadata["skipped_images"] = loaded.skipped;
    table.metadata["sigma"] = opts.noise_sigma;
    finalize_table(table);
    return table;
}

void finalize_table(BenchmarkTable& table) {
    std::stable_sort(table.rows.begin(), table.rows.end(), [](const BenchmarkRow& a, const BenchmarkRow& b) {
        return std::tie(a.method, a.scale) < std::tie(b.method, b.scale);
    });
    std::map<double, double> best;
    for (const auto& r : table.rows) {
        auto [it, inserted] = best.emplace(r.scale, r.psnr_db);
        if (!inserted) it->second = std::max(it->second, r.psnr_db);
    }
    for (auto& r : table.rows) r.best = r.psnr_db == best.at(r.scale);
}

nlohmann::json table_to_json(const BenchmarkTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json row;
        row["method"] = r.method;
        row["scale"] = r.scale;
        const bool identical = std::isinf(r.psnr_db);
        row["psnr_db"] = identical ? nlohmann::json(nullptr) : nlohmann::json(r.psnr_db);
        row["identical"] = identical;
        row["n_images"] = r.n_images;
        row["sigma"] = r.sigma;
        row["best"] = r.best;
        rows.push_back(std::move(row));
    }
    return {{"metadata", table.metadata}, {"rows", rows}};
}

BenchmarkTable table_from_json(const nlohmann::json& j) {
    BenchmarkTable table;
    try {
        table.metadata = j.at("metadata");
        for (const auto& row : j.at("rows")) {
            BenchmarkRow r;
            r.method = row.at("method").get<std::string>();
            r.scale = row.at("scale").get<double>();
            r.psnr_db = row.at("identical").get<bool>() ? std::numeric_limits<double>::infinity()
                                                        : row.at("psnr_db").get<double>();
            r.n_images = row.at("n_images").get<std::size_t>();
            r.sigma = row.at("sigma").get<double>();
            r.best = row.at("best").get<bool>();
            table.rows.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed report: ") + e.what());
    }
    return table;
}

std::string table_to_csv(const BenchmarkTable& table) {
    std::ostringstream out;
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "method,scale,psnr_db,n_images,sigma\n";
    for (const auto& r : table.rows) {
        out << r.method << ',' << r.scale << ',';
        if (std::isinf(r.psnr_db)) {
            out << "inf";
        } else {
            out << r.psnr_db;
        }
        out << ',' << r.n_images << ',' << r.sigma << '\n';
    }
    return out.str();
}

void emit_report(const BenchmarkTable& table, const std::filesystem::path& out_dir) {
    if (table.rows.empty()) throw InvalidArgument("refusing to write an empty report");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create report directory " + out_dir.string());
    auto write = [](const std::filesystem::path& p, const std::string& text) {
        std::ofstream out(p);
        if (!out) throw IoError("cannot write " + p.string());
        out << text;
        if (!out) throw IoError("failed writing " + p.string());
    };
    write(out_dir / "report.csv", table_to_csv(table));
    write(out_dir / "report.json", table_to_json(table).dump(2) + "\n");
}

}  // namespace rdstn
