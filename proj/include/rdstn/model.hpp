#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rdstn/decoder.hpp"
#include "rdstn/encoder.hpp"

namespace rdstn {

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedParameter {
    std::string name;
    ag::Var var;
};

// Encoder + implicit decoder. Copies share parameter storage; use clone()
// for an independent set.
struct Model {
    ModelConfig config;
    EncoderParams encoder;
    DecoderParams decoder;

    static Model create(const ModelConfig& cfg, std::uint64_t seed);

    // Stable order: encoder parameters, then decoder parameters.
    std::vector<NamedParameter> parameters() const;
    Model clone() const;
};

std::size_t count_parameters(std::span<const NamedParameter> params);
std::size_t count_parameters(const Model& model);
std::size_t count_parameters(const LinearLayer& layer);

struct UpscaleOptions {
    bool use_ensemble = true;
    std::size_t batch_queries = 16384;
};

// Encodes once, decodes every pixel centre of the target grid in bounded
// batches and clamps to [0, 1].
Image upscale(const Image& img, const Model& model, int target_h, int target_w, const UpscaleOptions& opts = {});

// Decodes arbitrary query points with the same batching; returns one
// intensity vector per query, unclamped.
Matrix query_model(const Image& img, const Model& model, std::span<const QueryPoint> queries,
                   const UpscaleOptions& opts = {}, QueryCell cell = {});

}  // namespace rdstn
