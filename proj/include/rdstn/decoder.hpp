#pragma once

#include <array>
#include <span>
#include <vector>

#include "rdstn/encoder.hpp"

namespace rdstn {

struct DecoderConfig {
    std::vector<int> hidden{256, 256, 256, 256};  // ReLU layers
    bool cell_decode = false;     // append the query pixel size to the MLP input
    bool feature_unfold = false;  // use the 3x3 neighbourhood of latent codes
    int out_channels = 1;

    void validate() const;
    int input_dim(int latent_dim) const;
    friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

struct DecoderParams {
    std::vector<LinearLayer> layers;
};

DecoderParams init_decoder(const DecoderConfig& cfg, int latent_dim, Rng& rng);
void visit_parameters(DecoderParams& params, const std::string& prefix, const ParameterVisitor& visit);

ag::Var run_mlp(const DecoderParams& params, const ag::Var& input);

// Latent code (row, col) and its centre x*.
struct LatentCell {
    int row = 0;
    int col = 0;
    QueryPoint center;
};

// Cell containing q; points on a cell border go to the lower index.
LatentCell nearest_latent(int grid_h, int grid_w, QueryPoint q);

// The four latent centres bracketing q, corners ordered
// (r0,c0), (r0,c1), (r1,c0), (r1,c1). Indices clamp at the grid edge, so
// r0 == r1 (or c0 == c1) in the outer half-cell margin.
struct Neighborhood {
    std::array<int, 2> rows{};
    std::array<int, 2> cols{};
    std::array<double, 2> center_y{};
    std::array<double, 2> center_x{};
};

Neighborhood surrounding_latents(int grid_h, int grid_w, QueryPoint q);

struct EnsembleWeights {
    std::array<double, 4> w{};
};

// Each corner is weighted by the area of the rectangle spanned by q and the
// diagonally opposite corner, normalised to sum to 1. A collapsed axis puts
// all of its weight on the duplicated corner.
EnsembleWeights ensemble_weights(QueryPoint q, const Neighborhood& corners);

// Query pixel size in normalised units, (2 / target_h, 2 / target_w).
struct QueryCell {
    double h = 0.0;
    double w = 0.0;
};

// Batched, differentiable decoding of `queries` against `latent`.
// Returns (queries.size(), out_channels).
ag::Var decode_queries(const FeatureMap& latent, std::span<const QueryPoint> queries, const DecoderParams& params,
                       const DecoderConfig& cfg, bool use_ensemble, QueryCell cell = {});

// Single-query forms. decode_point uses the nearest code only.
std::vector<double> decode_point(const FeatureMap& latent, QueryPoint q, const DecoderParams& params,
                                 const DecoderConfig& cfg, QueryCell cell = {});
std::vector<double> local_ensemble_decode(const FeatureMap& latent, QueryPoint q, const DecoderParams& params,
                                          const DecoderConfig& cfg, QueryCell cell = {});

// 3x3 neighbourhood concatenation (edge replicated); d -> 9d channels.
FeatureMap unfold_features(const FeatureMap& latent);

}  // namespace rdstn
