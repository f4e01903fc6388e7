#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rdstn/checkpoint.hpp"
#include "rdstn/config.hpp"
#include "rdstn/data_pipeline.hpp"
#include "rdstn/errors.hpp"
#include "rdstn/evaluation.hpp"
#include "rdstn/training.hpp"

namespace fs = std::filesystem;
using namespace rdstn;

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_number(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument("--" + key + ": expected a number, got '" + text + "'");
    }
}

// Converts a flag string to the JSON type the config key holds by default.
nlohmann::json flag_value(const std::string& key, const std::string& text, const nlohmann::json& like) {
    if (like.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw InvalidArgument("--" + key + ": expected true or false, got '" + text + "'");
    }
    if (like.is_array()) {
        const bool integral = !like.empty() && like.front().is_number_integer();
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& item : split_list(text)) {
            const double v = parse_number(key, item);
            if (integral) arr.push_back(static_cast<long long>(v));
            else arr.push_back(v);
        }
        return arr;
    }
    if (like.is_number_unsigned()) return static_cast<unsigned long long>(parse_number(key, text));
    if (like.is_number_integer()) return static_cast<long long>(parse_number(key, text));
    if (like.is_number()) return parse_number(key, text);
    return text;
}

struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "JSON config file (flat keys)");
        for (const auto& key : config_keys()) {
            app->add_option("--" + key, values[key], "config key '" + key + "'");
        }
    }

    RunConfig resolve(CLI::App* app) const {
        nlohmann::json overlay = nlohmann::json::object();
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw InvalidArgument("cannot open config file " + config_file);
            try {
                overlay = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& ex) {
                throw InvalidArgument("config file " + config_file + " is not valid JSON: " + ex.what());
            }
            if (!overlay.is_object()) throw InvalidArgument("config file must hold a JSON object");
        }
        const nlohmann::json defaults = to_json(default_run_config());
        for (const auto& key : config_keys()) {
            if (app->count("--" + key) == 0) continue;
            overlay[key] = flag_value(key, values.at(key), defaults.at(key));
        }
        RunConfig cfg = run_config_from_json(overlay);
        cfg.model.validate();
        cfg.train.validate();
        return cfg;
    }
};

std::string data_dir_or_env(const std::string& given) {
    if (!given.empty()) return given;
    if (const char* env = std::getenv("RDSTN_DATA_ROOT")) return env;
    return {};
}

// Either a manifest or a directory; with a directory the split is derived
// on the fly from (ratio, seed).
DatasetSplit resolve_split(const std::string& manifest, const std::string& data_dir, double ratio,
                           std::uint64_t seed) {
    if (!manifest.empty()) return load_manifest(manifest);
    const std::string dir = data_dir_or_env(data_dir);
    if (dir.empty()) throw InvalidArgument("need --manifest or --data-dir (or RDSTN_DATA_ROOT)");
    return split_dataset(dir, ratio, seed);
}

std::vector<double> parse_scales(const std::string& text) {
    std::vector<double> scales;
    for (const auto& item : split_list(text)) {
        const double s = parse_number("scales", item);
        if (!(s >= 1.0)) throw InvalidArgument("scales must be >= 1, got " + item);
        scales.push_back(s);
    }
    if (scales.empty()) throw InvalidArgument("no scales given");
    return scales;
}

// "2.5" -> round(2.5 * dim); "300x200" -> explicit height x width.
std::pair<int, int> target_size(const std::string& text, int h, int w) {
    const auto x = text.find_first_of("xX");
    if (x != std::string::npos) {
        const int th = static_cast<int>(parse_number("scale", text.substr(0, x)));
        const int tw = static_cast<int>(parse_number("scale", text.substr(x + 1)));
        if (th < 1 || tw < 1) throw InvalidArgument("target size must be positive: " + text);
        return {th, tw};
    }
    const double s = parse_number("scale", text);
    if (!(s > 0.0)) throw InvalidArgument("scale must be positive: " + text);
    return {std::max(1, static_cast<int>(std::lround(s * h))), std::max(1, static_cast<int>(std::lround(s * w)))};
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

int run_split(const std::string& data_dir, double ratio, std::uint64_t seed, const std::string& out) {
    const std::string dir = data_dir_or_env(data_dir);
    if (dir.empty()) throw InvalidArgument("need --data-dir (or RDSTN_DATA_ROOT)");
    const DatasetSplit split = split_dataset(dir, ratio, seed);
    save_manifest(split, out);
    std::cout << "train " << split.train_paths.size() << " test " << split.test_paths.size() << " -> " << out << '\n';
    return 0;
}

void print_progress(std::int64_t step, double loss, int total) {
    const int every = std::max(1, total / 20);
    if (step % every == 0 || step == total) std::cout << "step " << step << "/" << total << " loss " << loss << '\n';
}

int run_train(const RunConfig& cfg, const DatasetSplit& split, const std::string& out_dir, const std::string& resume) {
    FitOptions opts;
    opts.out_dir = out_dir;
    if (!resume.empty()) opts.resume_from = resume;
    opts.on_step = [&](std::int64_t step, double loss) { print_progress(step, loss, cfg.train.steps); };
    const FitResult res = fit(cfg, split, opts);
    write_json(to_json(cfg), fs::path(out_dir) / "config.json");
    std::cout << "parameters " << count_parameters(restore_model(res.last)) << '\n';
    std::cout << "checkpoints " << (fs::path(out_dir) / "best.ckpt").string() << ' '
              << (fs::path(out_dir) / "last.ckpt").string() << '\n';
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string method = "rdstn";
    std::string manifest;
    std::string data_dir;
    std::string scales = "1.6,1.7,1.8,1.9,2,2.5,3,3.5,4,6,8,10";
    double sigma = 0.0;
    std::uint64_t noise_seed = 0;
    std::string out_dir = ".";
    bool no_ensemble = false;
};

int run_eval(const EvalArgs& a) {
    if (a.method != "rdstn" && a.method != "bicubic") throw InvalidArgument("--method must be rdstn or bicubic");
    std::optional<Model> model;
    nlohmann::json meta = nlohmann::json::object();
    int channels = 1;
    if (a.method == "rdstn") {
        if (a.checkpoint.empty()) throw InvalidArgument("--checkpoint is required for --method rdstn");
        const Checkpoint ckpt = load_checkpoint(a.checkpoint);
        model = restore_model(ckpt);
        channels = model->config.encoder.channels;
        meta["checkpoint"] = a.checkpoint;
        meta["checkpoint_checksum"] = content_checksum(ckpt);
    }
    SweepOptions opts;
    opts.scales = parse_scales(a.scales);
    opts.noise_sigma = a.sigma;
    opts.noise_seed = a.noise_seed;
    opts.upscale.use_ensemble = !a.no_ensemble;
    const std::vector<std::pair<std::string, const Model*>> methods{{a.method, model ? &*model : nullptr}};

    BenchmarkTable table;
    if (!a.manifest.empty()) {
        const DatasetSplit split = load_manifest(a.manifest);
        const LoadedImages imgs = load_images(split.test_paths, channels);
        if (imgs.images.empty()) throw EmptyDataset("manifest has no readable test images");
        table.rows = eval_scale_sweep(imgs.images, a.method, methods[0].second, opts);
        table.metadata["dataset"] = a.manifest;
        table.metadata["split_seed"] = split.seed;
        table.metadata["skipped_images"] = imgs.skipped;
        table.metadata["sigma"] = a.sigma;
        finalize_table(table);
    } else {
        const std::string dir = data_dir_or_env(a.data_dir);
        if (dir.empty()) throw InvalidArgument("need --manifest or --data-dir (or RDSTN_DATA_ROOT)");
        table = generalization_eval(methods, dir, channels, opts);
    }
    for (const auto& [k, v] : meta.items()) table.metadata[k] = v;
    table.metadata["noise_seed"] = a.noise_seed;
    table.metadata["ensemble"] = !a.no_ensemble;
    fs::create_directories(a.out_dir);
    emit_report(table, a.out_dir);
    std::cout << table_to_csv(table);
    return 0;
}

int run_upscale(const std::string& checkpoint, const std::string& input, const std::string& scale,
                const std::string& output, bool no_ensemble, int bit_depth) {
    const Model model = restore_model(load_checkpoint(checkpoint));
    const Image img = load_png(input, model.config.encoder.channels);
    const auto [th, tw] = target_size(scale, img.height, img.width);
    UpscaleOptions opts;
    opts.use_ensemble = !no_ensemble;
    save_png(upscale(img, model, th, tw, opts), output, bit_depth);
    std::cout << img.height << "x" << img.width << " -> " << th << "x" << tw << " " << output << '\n';
    return 0;
}

int run_ablate(RunConfig base, const DatasetSplit& split, const std::string& out_dir) {
    const int channels = base.model.encoder.channels;
    LoadedImages train = load_images(split.train_paths, channels);
    LoadedImages test = load_images(split.test_paths, channels);
    if (train.images.empty()) throw EmptyDataset("no readable training images");
    const std::vector<Image>& eval_images = test.images.empty() ? train.images : test.images;

    BenchmarkTable table;
    table.metadata["split_seed"] = split.seed;
    table.metadata["eval_on"] = test.images.empty() ? "train" : "test";
    nlohmann::json settings = nlohmann::json::object();
    int failures = 0;
    for (auto s : {AblationSetting::S1, AblationSetting::S2, AblationSetting::S3, AblationSetting::S4}) {
        const std::string name = to_string(s);
        RunConfig cfg = base;
        cfg.train.ablation = s;
        cfg.model.encoder = apply_ablation_setting(s, cfg.model.encoder);
        const fs::path dir = fs::path(out_dir) / name;
        nlohmann::json info{{"lff", cfg.model.encoder.use_lff}, {"gff", cfg.model.encoder.use_gff}};
        try {
            FitOptions opts;
            opts.out_dir = dir;
            opts.on_step = [&](std::int64_t step, double loss) {
                if (step == cfg.train.steps) std::cout << name << " final loss " << loss << '\n';
            };
            const FitResult res = fit(cfg, train.images, test.images, opts);
            write_json(to_json(cfg), dir / "config.json");
            const Model model = restore_model(res.best);
            SweepOptions sweep;
            sweep.scales = cfg.train.eval_scales;
            auto rows = eval_scale_sweep(eval_images, name, &model, sweep);
            table.rows.insert(table.rows.end(), rows.begin(), rows.end());
            info["parameters"] = count_parameters(model);
            info["final_loss"] = res.loss_history.empty() ? nlohmann::json(nullptr) : nlohmann::json(res.loss_history.back());
        } catch (const std::exception& ex) {
            ++failures;
            info["error"] = ex.what();
            std::cout << "warning: " << name << " failed: " << ex.what() << '\n';
        }
        settings[name] = info;
    }
    table.metadata["settings"] = settings;
    finalize_table(table);
    fs::create_directories(out_dir);
    emit_report(table, out_dir);
    std::cout << table_to_csv(table);
    if (failures > 0) {
        std::cerr << "error: internal: " << failures << " of 4 ablation settings failed\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Arbitrary-scale super-resolution: residual dense swin encoder + implicit decoder"};
    app.require_subcommand(1);

    // split
    auto* split_cmd = app.add_subcommand("split", "Write a seeded train/test manifest for a directory of PNGs");
    std::string split_dir, split_out = "split.json";
    double split_ratio = 0.8;
    std::uint64_t split_seed = 0;
    split_cmd->add_option("--data-dir", split_dir, "image directory (default: $RDSTN_DATA_ROOT)");
    split_cmd->add_option("--ratio", split_ratio, "training fraction")->capture_default_str();
    split_cmd->add_option("--seed", split_seed, "shuffle seed")->capture_default_str();
    split_cmd->add_option("--out", split_out, "manifest path")->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    ConfigFlags train_flags;
    train_flags.attach(train_cmd);
    std::string train_manifest, train_dir, train_out = "run", train_resume;
    double train_ratio = 0.8;
    std::uint64_t train_split_seed = 0;
    train_cmd->add_option("--manifest", train_manifest, "split manifest");
    train_cmd->add_option("--data-dir", train_dir, "image directory, split on the fly");
    train_cmd->add_option("--ratio", train_ratio, "training fraction with --data-dir")->capture_default_str();
    train_cmd->add_option("--split-seed", train_split_seed, "split seed with --data-dir")->capture_default_str();
    train_cmd->add_option("--out-dir", train_out, "output directory")->capture_default_str();
    train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "PSNR sweep over scales (test split or a foreign directory)");
    EvalArgs eval_args;
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint");
    eval_cmd->add_option("--method", eval_args.method, "rdstn or bicubic")->capture_default_str();
    eval_cmd->add_option("--manifest", eval_args.manifest, "evaluate the manifest's test split");
    eval_cmd->add_option("--data-dir", eval_args.data_dir, "evaluate every PNG in a directory");
    eval_cmd->add_option("--scales", eval_args.scales, "comma-separated scales")->capture_default_str();
    eval_cmd->add_option("--sigma", eval_args.sigma, "Gaussian noise std added to LR inputs")->capture_default_str();
    eval_cmd->add_option("--noise-seed", eval_args.noise_seed, "noise seed")->capture_default_str();
    eval_cmd->add_option("--out-dir", eval_args.out_dir, "report directory")->capture_default_str();
    eval_cmd->add_flag("--no-ensemble", eval_args.no_ensemble, "decode with the nearest latent code only");

    // upscale
    auto* up_cmd = app.add_subcommand("upscale", "Upscale one PNG to an arbitrary scale or size");
    std::string up_ckpt, up_in, up_scale, up_out;
    bool up_no_ensemble = false;
    int up_depth = 8;
    up_cmd->add_option("--checkpoint", up_ckpt, "model checkpoint")->required();
    up_cmd->add_option("--input", up_in, "input PNG")->required();
    up_cmd->add_option("--scale", up_scale, "factor (e.g. 2.5) or HxW")->required();
    up_cmd->add_option("--output", up_out, "output PNG")->required();
    up_cmd->add_flag("--no-ensemble", up_no_ensemble, "nearest-code decoding (shows cell boundaries)");
    up_cmd->add_option("--bit-depth", up_depth, "8 or 16")->check(CLI::IsMember({8, 16}))->capture_default_str();

    // ablate
    auto* ab_cmd = app.add_subcommand("ablate", "Train S1-S4 (fusion on/off) and write one combined report");
    ConfigFlags ab_flags;
    ab_flags.attach(ab_cmd);
    std::string ab_manifest, ab_dir, ab_out = "ablation";
    double ab_ratio = 0.8;
    std::uint64_t ab_split_seed = 0;
    ab_cmd->add_option("--manifest", ab_manifest, "split manifest");
    ab_cmd->add_option("--data-dir", ab_dir, "image directory, split on the fly");
    ab_cmd->add_option("--ratio", ab_ratio, "training fraction with --data-dir")->capture_default_str();
    ab_cmd->add_option("--split-seed", ab_split_seed, "split seed with --data-dir")->capture_default_str();
    ab_cmd->add_option("--out-dir", ab_out, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 1;
    }

    try {
        if (*split_cmd) return run_split(split_dir, split_ratio, split_seed, split_out);
        if (*train_cmd) {
            const RunConfig cfg = train_flags.resolve(train_cmd);
            return run_train(cfg, resolve_split(train_manifest, train_dir, train_ratio, train_split_seed), train_out,
                             train_resume);
        }
        if (*eval_cmd) return run_eval(eval_args);
        if (*up_cmd) return run_upscale(up_ckpt, up_in, up_scale, up_out, up_no_ensemble, up_depth);
        if (*ab_cmd) {
            const RunConfig cfg = ab_flags.resolve(ab_cmd);
            return run_ablate(cfg, resolve_split(ab_manifest, ab_dir, ab_ratio, ab_split_seed), ab_out);
        }
    } catch (const Divergence& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
