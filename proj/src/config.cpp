#include "rdstn/config.hpp"

#include <algorithm>
#include <cmath>

#include "rdstn/errors.hpp"

namespace rdstn {

std::string to_string(AblationSetting s) {
    switch (s) {
        case AblationSetting::S1: return "S1";
        case AblationSetting::S2: return "S2";
        case AblationSetting::S3: return "S3";
        case AblationSetting::S4: return "S4";
    }
    return "?";
}

AblationSetting parse_ablation(const std::string& text) {
    if (text == "S1" || text == "s1") return AblationSetting::S1;
    if (text == "S2" || text == "s2") return AblationSetting::S2;
    if (text == "S3" || text == "s3") return AblationSetting::S3;
    if (text == "S4" || text == "s4") return AblationSetting::S4;
    throw InvalidArgument("unknown ablation setting '" + text + "' (expected S1..S4)");
}

EncoderConfig apply_ablation_setting(AblationSetting setting, EncoderConfig cfg) {
    cfg.use_lff = setting == AblationSetting::S3 || setting == AblationSetting::S4;
    cfg.use_gff = setting == AblationSetting::S2 || setting == AblationSetting::S4;
    return cfg;
}

void TrainConfig::validate() const {
    if (!(scale_min >= 1.0 && scale_min < scale_max)) throw InvalidArgument("need 1 <= scale_min < scale_max");
    if (patch < 1 || k_samples < 1 || batch < 1 || steps < 1) {
        throw InvalidArgument("patch, k_samples, batch and steps must be positive");
    }
    if (!(lr >= 0.0) || !(lr_gamma > 0.0)) throw InvalidArgument("lr must be >= 0 and lr_gamma > 0");
    if (eval_every < 0) throw InvalidArgument("eval_every must be >= 0");
    for (double s : eval_scales) {
        if (!(s >= 1.0)) throw InvalidArgument("eval scales must be >= 1");
    }
}

double TrainConfig::learning_rate(int step) const {
    double rate = lr;
    for (double m : lr_milestones) {
        if (step >= static_cast<int>(std::floor(m * steps))) rate *= lr_gamma;
    }
    return rate;
}

RunConfig default_run_config() { return RunConfig{}; }

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "channels", "dim",       "stages",     "blocks",        "window",   "heads",     "mlp_ratio",
        "use_lff",  "use_gff",   "hidden",     "cell_decode",   "feature_unfold",        "scale_min",
        "scale_max", "patch",    "k_samples",  "batch",         "steps",    "lr",        "lr_milestones",
        "lr_gamma", "beta1",     "beta2",      "adam_eps",      "seed",     "eval_every", "eval_scales",
        "augment",  "ablation"};
    return keys;
}

nlohmann::json to_json(const RunConfig& cfg) {
    const auto& e = cfg.model.encoder;
    const auto& d = cfg.model.decoder;
    const auto& t = cfg.train;
    nlohmann::json j;
    j["channels"] = e.channels;
    j["dim"] = e.dim;
    j["stages"] = e.stages;
    j["blocks"] = e.blocks;
    j["window"] = e.window;
    j["heads"] = e.heads;
    j["mlp_ratio"] = e.mlp_ratio;
    j["use_lff"] = e.use_lff;
    j["use_gff"] = e.use_gff;
    j["hidden"] = d.hidden;
    j["cell_decode"] = d.cell_decode;
    j["feature_unfold"] = d.feature_unfold;
    j["scale_min"] = t.scale_min;
    j["scale_max"] = t.scale_max;
    j["patch"] = t.patch;
    j["k_samples"] = t.k_samples;
    j["batch"] = t.batch;
    j["steps"] = t.steps;
    j["lr"] = t.lr;
    j["lr_milestones"] = t.lr_milestones;
    j["lr_gamma"] = t.lr_gamma;
    j["beta1"] = t.beta1;
    j["beta2"] = t.beta2;
    j["adam_eps"] = t.adam_eps;
    j["seed"] = t.seed;
    j["eval_every"] = t.eval_every;
    j["eval_scales"] = t.eval_scales;
    j["augment"] = t.augment;
    j["ablation"] = t.ablation ? nlohmann::json(to_string(*t.ablation)) : nlohmann::json(nullptr);
    return j;
}

void apply_json(const nlohmann::json& j, RunConfig& cfg) {
    if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
    const auto& keys = config_keys();
    for (const auto& [key, _] : j.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw InvalidArgument("unknown config key '" + key + "'");
        }
    }
    auto& e = cfg.model.encoder;
    auto& d = cfg.model.decoder;
    auto& t = cfg.train;
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("channels", e.channels);
        get("dim", e.dim);
        get("stages", e.stages);
        get("blocks", e.blocks);
        get("window", e.window);
        get("heads", e.heads);
        get("mlp_ratio", e.mlp_ratio);
        get("use_lff", e.use_lff);
        get("use_gff", e.use_gff);
        get("hidden", d.hidden);
        get("cell_decode", d.cell_decode);
        get("feature_unfold", d.feature_unfold);
        get("scale_min", t.scale_min);
        get("scale_max", t.scale_max);
        get("patch", t.patch);
        get("k_samples", t.k_samples);
        get("batch", t.batch);
        get("steps", t.steps);
        get("lr", t.lr);
        get("lr_milestones", t.lr_milestones);
        get("lr_gamma", t.lr_gamma);
        get("beta1", t.beta1);
        get("beta2", t.beta2);
        get("adam_eps", t.adam_eps);
        get("seed", t.seed);
        get("eval_every", t.eval_every);
        get("eval_scales", t.eval_scales);
        get("augment", t.augment);
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            t.ablation = a.is_null() ? std::nullopt : std::optional(parse_ablation(a.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw InvalidArgument(std::string("bad config value: ") + ex.what());
    }
    d.out_channels = e.channels;
    if (t.ablation) e = apply_ablation_setting(*t.ablation, e);
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg = default_run_config();
    apply_json(j, cfg);
    return cfg;
}

}  // namespace rdstn
