#include "rdstn/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rdstn/errors.hpp"
#include "rdstn/evaluation.hpp"

namespace rdstn {

double sample_scale(Rng& rng, double smin, double smax) {
    if (!(smin < smax)) throw InvalidArgument("scale range must satisfy smin < smax");
    std::uniform_real_distribution<double> dist(smin, smax);
    double s = dist(rng);
    // libstdc++ may return the upper bound through rounding.
    return s < smax ? s : std::nextafter(smax, smin);
}

ag::Var batch_loss(const Model& model, std::span<const TrainingPair> batch) {
    if (batch.empty()) throw InvalidArgument("empty training batch");
    const auto channels = static_cast<std::size_t>(model.config.decoder.out_channels);
    ag::Var total;
    for (const auto& pair : batch) {
        const FeatureMap latent = encode(pair.lr_patch, model.encoder, model.config.encoder);
        const QueryCell cell{2.0 / pair.hr_size, 2.0 / pair.hr_size};
        ag::Var pred = decode_queries(latent, pair.query_coords, model.decoder, model.config.decoder, true, cell);
        Matrix target(pair.targets.size(), channels);
        for (std::size_t i = 0; i < pair.targets.size(); ++i)
            for (std::size_t c = 0; c < channels; ++c) target(i, c) = pair.targets[i][c];
        ag::Var loss = ag::l1_loss(pred, target);
        total = total.defined() ? ag::add(total, loss) : loss;
    }
    return ag::scale(total, 1.0 / static_cast<double>(batch.size()));
}

void adam_update(const Model& model, AdamState& state, double lr, const TrainConfig& cfg) {
    const auto params = model.parameters();
    if (state.m.size() != params.size()) throw InvalidArgument("optimizer state does not match the model");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        ag::Var p = params[k].var;
        if (!p.has_grad()) continue;
        auto& w = p.mutable_value().values();
        const auto& g = p.grad().values();
        auto& m = state.m[k].values();
        auto& v = state.v[k].values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

double train_step(Model& model, std::span<const TrainingPair> batch, AdamState& state, double lr,
                  const TrainConfig& cfg) {
    const auto params = model.parameters();
    for (auto p : params) p.var.zero_grad();
    ag::Var loss = batch_loss(model, batch);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite training loss (" << value << ") at optimizer step " << state.step + 1 << ", lr " << lr;
        throw Divergence(msg.str());
    }
    ag::backward(loss);
    adam_update(model, state, lr, cfg);
    for (auto p : params) p.var.zero_grad();
    return value;
}

std::vector<TrainingPair> sample_batch(const std::vector<Image>& images, const TrainConfig& cfg, std::int64_t step) {
    if (images.empty()) throw EmptyDataset("no training images");
    Rng rng = derive_rng(cfg.seed, 0, static_cast<std::uint64_t>(step));
    const PairOptions opts{cfg.patch, cfg.k_samples, cfg.augment};
    std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
    std::vector<TrainingPair> batch;
    int misses = 0;
    while (batch.size() < static_cast<std::size_t>(cfg.batch)) {
        const double scale = sample_scale(rng, cfg.scale_min, cfg.scale_max);
        auto pair = synthesize_training_pair(images[pick(rng)], opts, scale, rng);
        if (pair) {
            batch.push_back(std::move(*pair));
        } else if (++misses > 1000) {
            throw InvalidArgument("training images are too small for patch " + std::to_string(cfg.patch) +
                                  " at scale " + std::to_string(cfg.scale_max));
        }
    }
    return batch;
}

namespace {

struct EvalResult {
    nlohmann::json psnr = nlohmann::json::object();
    double mean = 0.0;
};

EvalResult evaluate(const Model& model, const std::vector<Image>& images, const TrainConfig& cfg) {
    EvalResult r;
    SweepOptions opts;
    opts.scales = cfg.eval_scales;
    const auto rows = eval_scale_sweep(images, "rdstn", &model, opts);
    for (const auto& row : rows) {
        std::ostringstream key;
        key << row.scale;
        r.psnr[key.str()] = std::isinf(row.psnr_db) ? nlohmann::json(nullptr) : nlohmann::json(row.psnr_db);
        r.mean += row.psnr_db;
    }
    if (!rows.empty()) r.mean /= static_cast<double>(rows.size());
    return r;
}

}  // namespace

FitResult fit(const RunConfig& cfg, const std::vector<Image>& train_images, const std::vector<Image>& held_out,
              const FitOptions& opts) {
    cfg.model.validate();
    cfg.train.validate();
    if (train_images.empty()) throw EmptyDataset("training split is empty");
    const TrainConfig& tc = cfg.train;

    Model model = Model::create(cfg.model, tc.seed);
    AdamState optim = AdamState::zeros_like(model);
    std::int64_t step = 0;
    std::vector<double> losses;
    nlohmann::json history = nlohmann::json::array();
    std::optional<Checkpoint> best;
    double best_psnr = -std::numeric_limits<double>::infinity();

    if (opts.resume_from) {
        const Checkpoint ckpt = load_checkpoint(*opts.resume_from);
        if (!(ckpt.config.model == cfg.model)) throw ConfigMismatch("resume checkpoint has a different architecture");
        load_parameters(model, ckpt);
        optim = restore_optimizer(ckpt, model);
        step = ckpt.step;
        losses = ckpt.loss_history;
        history = ckpt.metric_history;
        for (const auto& entry : history) {
            if (entry.contains("mean_psnr") && entry["mean_psnr"].is_number() && entry["mean_psnr"].get<double>() > best_psnr) {
                best_psnr = entry["mean_psnr"].get<double>();
            }
        }
        if (opts.out_dir && std::filesystem::exists(*opts.out_dir / "best.ckpt")) {
            best = load_checkpoint(*opts.out_dir / "best.ckpt");
        }
    }

    if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);
    auto snapshot = [&]() { return make_checkpoint(model, &optim, cfg, step, history, losses); };
    auto log_line = [&](const nlohmann::json& entry) {
        if (!opts.out_dir) return;
        std::ofstream log(*opts.out_dir / "metrics.jsonl", std::ios::app);
        log << entry.dump() << '\n';
    };

    const std::int64_t end = opts.stop_after ? std::min<std::int64_t>(*opts.stop_after, tc.steps) : tc.steps;
    while (step < end) {
        const auto batch = sample_batch(train_images, tc, step);
        const double loss = train_step(model, batch, optim, tc.learning_rate(static_cast<int>(step)), tc);
        losses.push_back(loss);
        ++step;
        if (opts.on_step) opts.on_step(step, loss);

        const bool eval_now = (tc.eval_every > 0 && step % tc.eval_every == 0) || step == tc.steps;
        if (eval_now) {
            nlohmann::json entry{{"step", step}, {"loss", loss}};
            if (!held_out.empty()) {
                const EvalResult r = evaluate(model, held_out, tc);
                entry["psnr"] = r.psnr;
                entry["mean_psnr"] = r.mean;
                history.push_back(entry);
                if (r.mean > best_psnr) {
                    best_psnr = r.mean;
                    best = snapshot();
                    if (opts.out_dir) save_checkpoint(*best, *opts.out_dir / "best.ckpt");
                }
            } else {
                history.push_back(entry);
            }
            log_line(entry);
        }
    }

    FitResult result;
    result.last = snapshot();
    result.best = best ? *best : result.last;
    result.loss_history = losses;
    if (opts.out_dir) {
        save_checkpoint(result.last, *opts.out_dir / "last.ckpt");
        if (!best) save_checkpoint(result.best, *opts.out_dir / "best.ckpt");
    }
    return result;
}

FitResult fit(const RunConfig& cfg, const DatasetSplit& split, const FitOptions& opts) {
    if (split.train_paths.empty()) throw EmptyDataset("training split is empty");
    const int channels = cfg.model.encoder.channels;
    LoadedImages train = load_images(split.train_paths, channels);
    if (train.images.empty()) throw EmptyDataset("no readable training images");
    LoadedImages test = load_images(split.test_paths, channels);
    return fit(cfg, train.images, test.images, opts);
}

}  // namespace rdstn
