#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rdstn/checkpoint.hpp"
#include "rdstn/config.hpp"
#include "rdstn/data_pipeline.hpp"
#include "rdstn/model.hpp"

namespace rdstn {

// Uniform draw in [smin, smax).
double sample_scale(Rng& rng, double smin, double smax);

// Scalar loss of one batch: each pair's LR patch is encoded and its query
// coordinates decoded with the local ensemble; L1 against the targets,
// averaged over pairs. Records a graph when gradients are enabled.
ag::Var batch_loss(const Model& model, std::span<const TrainingPair> batch);

// Adam with bias correction.
void adam_update(const Model& model, AdamState& state, double lr, const TrainConfig& cfg);

// One optimisation step; throws Divergence on a non-finite loss before any
// parameter is touched. Returns the pre-update loss.
double train_step(Model& model, std::span<const TrainingPair> batch, AdamState& state, double lr,
                  const TrainConfig& cfg);

// Batch for `step`, drawn from its own (seed, worker 0, step) stream.
std::vector<TrainingPair> sample_batch(const std::vector<Image>& images, const TrainConfig& cfg, std::int64_t step);

struct FitOptions {
    std::optional<std::filesystem::path> out_dir;        // writes last.ckpt, best.ckpt, metrics.jsonl
    std::optional<std::filesystem::path> resume_from;
    std::optional<std::int64_t> stop_after;              // stop early, e.g. to emulate an interruption
    std::function<void(std::int64_t step, double loss)> on_step;
};

struct FitResult {
    Checkpoint last;
    Checkpoint best;
    std::vector<double> loss_history;
};

FitResult fit(const RunConfig& cfg, const std::vector<Image>& train_images, const std::vector<Image>& held_out,
              const FitOptions& opts = {});
FitResult fit(const RunConfig& cfg, const DatasetSplit& split, const FitOptions& opts = {});

}  // namespace rdstn
