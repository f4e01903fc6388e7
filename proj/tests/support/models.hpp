#pragma once

#include <random>

#include "rdstn/model.hpp"

namespace rdstn::testing {

inline EncoderConfig tiny_encoder(int dim = 8, int stages = 1, int blocks = 2, int window = 4, int heads = 2) {
    EncoderConfig cfg;
    cfg.dim = dim;
    cfg.stages = stages;
    cfg.blocks = blocks;
    cfg.window = window;
    cfg.heads = heads;
    return cfg;
}

inline ModelConfig tiny_model(int dim = 8, std::vector<int> hidden = {32, 32}) {
    ModelConfig cfg;
    cfg.encoder = tiny_encoder(dim);
    cfg.decoder.hidden = std::move(hidden);
    return cfg;
}

// Adds N(0, sigma) to every entry so no parameter sits at a special value
// (zero biases, unit LayerNorm gains).
inline void perturb(EncoderParams& params, unsigned seed, double sigma = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    visit_parameters(params, "", [&](const std::string&, ag::Var& p) {
        for (double& v : p.mutable_value().values()) v += n(rng);
    });
}

inline void perturb(Model& model, unsigned seed, double sigma = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& p : model.parameters())
        for (double& v : p.var.mutable_value().values()) v += n(rng);
}

inline void zero_all(EncoderParams& params) {
    visit_parameters(params, "", [](const std::string&, ag::Var& p) { p.mutable_value().fill(0.0); });
}

}  // namespace rdstn::testing
