#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdstn/model.hpp"

namespace rdstn {

// Fusion ablations: S1 (no LFF, no GFF), S2 (GFF only), S3 (LFF only),
// S4 (both).
enum class AblationSetting { S1, S2, S3, S4 };

std::string to_string(AblationSetting s);
AblationSetting parse_ablation(const std::string& text);

EncoderConfig apply_ablation_setting(AblationSetting setting, EncoderConfig cfg);

struct TrainConfig {
    double scale_min = 1.0;
    double scale_max = 4.0;
    int patch = 48;
    int k_samples = 2304;
    int batch = 16;
    int steps = 1000;
    double lr = 1e-4;
    std::vector<double> lr_milestones{0.5, 0.75, 0.9};  // fractions of `steps`
    double lr_gamma = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int eval_every = 0;  // 0: evaluate only after the last step
    std::vector<double> eval_scales{2.0, 3.0, 4.0};
    bool augment = false;
    std::optional<AblationSetting> ablation;

    void validate() const;
    double learning_rate(int step) const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Everything a run needs, read from one flat key/value object.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

// Default full-size architecture.
RunConfig default_run_config();

// Flat JSON: every key of the config file and every CLI flag share one name.
nlohmann::json to_json(const RunConfig& cfg);
// Overlays the keys present in `j`; unknown keys are an error. The ablation
// setting, when given, is applied to the encoder flags last.
void apply_json(const nlohmann::json& j, RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// Names of all flat keys, in serialisation order.
const std::vector<std::string>& config_keys();

}  // namespace rdstn
