#include "rdstn/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "rdstn/errors.hpp"

namespace rdstn {

void DecoderConfig::validate() const {
    if (out_channels < 1) throw InvalidArgument("decoder: out_channels must be positive");
    for (int h : hidden) {
        if (h < 1) throw InvalidArgument("decoder: hidden widths must be positive");
    }
}

int DecoderConfig::input_dim(int latent_dim) const {
    return latent_dim * (feature_unfold ? 9 : 1) + 2 + (cell_decode ? 2 : 0);
}

DecoderParams init_decoder(const DecoderConfig& cfg, int latent_dim, Rng& rng) {
    cfg.validate();
    DecoderParams p;
    auto in = static_cast<std::size_t>(cfg.input_dim(latent_dim));
    for (int h : cfg.hidden) {
        p.layers.push_back(init_linear_uniform(in, static_cast<std::size_t>(h), rng));
        in = static_cast<std::size_t>(h);
    }
    p.layers.push_back(init_linear_uniform(in, static_cast<std::size_t>(cfg.out_channels), rng));
    return p;
}

void visit_parameters(DecoderParams& params, const std::string& prefix, const ParameterVisitor& visit) {
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const std::string name = prefix + "layers." + std::to_string(i);
        visit(name + ".weight", params.layers[i].weight);
        visit(name + ".bias", params.layers[i].bias);
    }
}

ag::Var run_mlp(const DecoderParams& params, const ag::Var& input) {
    if (params.layers.empty()) throw InvalidArgument("decoder has no layers");
    ag::Var x = input;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        x = params.layers[i](x);
        if (i + 1 < params.layers.size()) x = ag::relu(x);
    }
    return x;
}

LatentCell nearest_latent(int grid_h, int grid_w, QueryPoint q) {
    auto index = [](double coord, int n) {
        const int i = static_cast<int>(std::ceil((coord + 1.0) / 2.0 * n)) - 1;
        return std::clamp(i, 0, n - 1);
    };
    LatentCell cell;
    cell.row = index(q.y, grid_h);
    cell.col = index(q.x, grid_w);
    cell.center = {cell_center(cell.row, grid_h), cell_center(cell.col, grid_w)};
    return cell;
}

Neighborhood surrounding_latents(int grid_h, int grid_w, QueryPoint q) {
    auto axis = [](double coord, int n, std::array<int, 2>& idx, std::array<double, 2>& centers) {
        const double t = (coord + 1.0) / 2.0 * n - 0.5;
        int lo = static_cast<int>(std::floor(t));
        int hi = lo + 1;
        if (lo < 0) lo = hi = 0;
        if (hi > n - 1) lo = hi = n - 1;
        idx = {lo, hi};
        centers = {cell_center(lo, n), cell_center(hi, n)};
    };
    Neighborhood nb;
    axis(q.y, grid_h, nb.rows, nb.center_y);
    axis(q.x, grid_w, nb.cols, nb.center_x);
    return nb;
}

EnsembleWeights ensemble_weights(QueryPoint q, const Neighborhood& corners) {
    // Side lengths of the sub-rectangle opposite each corner along one axis.
    auto lengths = [](double coord, const std::array<double, 2>& c, bool collapsed) -> std::array<double, 2> {
        if (collapsed) return {1.0, 0.0};
        return {std::max(c[1] - coord, 0.0), std::max(coord - c[0], 0.0)};
    };
    const auto ly = lengths(q.y, corners.center_y, corners.rows[0] == corners.rows[1]);
    const auto lx = lengths(q.x, corners.center_x, corners.cols[0] == corners.cols[1]);
    EnsembleWeights out;
    double total = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            out.w[a * 2 + b] = ly[a] * lx[b];
            total += out.w[a * 2 + b];
        }
    for (double& w : out.w) w /= total;
    return out;
}

FeatureMap unfold_features(const FeatureMap& latent) {
    const int h = latent.height, w = latent.width;
    std::vector<ag::Var> parts;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            spatial::Index idx;
            idx.reserve(static_cast<std::size_t>(h) * w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    idx.push_back(static_cast<std::size_t>(std::clamp(y + dy, 0, h - 1)) * w +
                                  std::clamp(x + dx, 0, w - 1));
            parts.push_back(ag::gather_rows(latent.tokens, std::move(idx)));
        }
    }
    return {ag::concat_cols(parts), h, w};
}

ag::Var decode_queries(const FeatureMap& latent, std::span<const QueryPoint> queries, const DecoderParams& params,
                       const DecoderConfig& cfg, bool use_ensemble, QueryCell cell) {
    if (queries.empty()) throw InvalidArgument("decode_queries: no queries");
    const FeatureMap codes = cfg.feature_unfold ? unfold_features(latent) : latent;
    const int gh = codes.height, gw = codes.width;
    const std::size_t q = queries.size();
    const std::size_t terms = use_ensemble ? 4 : 1;
    const std::size_t extra = cfg.cell_decode ? 4 : 2;

    spatial::Index rows(terms * q);
    Matrix offsets(terms * q, extra);
    std::vector<double> weights(terms * q);
    for (std::size_t i = 0; i < q; ++i) {
        const QueryPoint p = queries[i];
        if (use_ensemble) {
            const Neighborhood nb = surrounding_latents(gh, gw, p);
            const EnsembleWeights ew = ensemble_weights(p, nb);
            for (std::size_t t = 0; t < 4; ++t) {
                const int a = static_cast<int>(t / 2), b = static_cast<int>(t % 2);
                const std::size_t r = t * q + i;
                rows[r] = static_cast<std::size_t>(nb.rows[a]) * gw + nb.cols[b];
                offsets(r, 0) = (p.y - nb.center_y[a]) * gh;
                offsets(r, 1) = (p.x - nb.center_x[b]) * gw;
                weights[r] = ew.w[t];
            }
        } else {
            const LatentCell lc = nearest_latent(gh, gw, p);
            rows[i] = static_cast<std::size_t>(lc.row) * gw + lc.col;
            offsets(i, 0) = (p.y - lc.center.y) * gh;
            offsets(i, 1) = (p.x - lc.center.x) * gw;
            weights[i] = 1.0;
        }
    }
    if (cfg.cell_decode) {
        for (std::size_t r = 0; r < terms * q; ++r) {
            offsets(r, 2) = cell.h * gh;
            offsets(r, 3) = cell.w * gw;
        }
    }
    ag::Var input = ag::concat_cols({ag::gather_rows(codes.tokens, std::move(rows)), ag::constant(std::move(offsets))});
    ag::Var decoded = run_mlp(params, input);
    return ag::blend_rows(decoded, std::move(weights), terms);
}

namespace {

std::vector<double> single(const ag::Var& v) {
    const auto row = v.value().row(0);
    return {row.begin(), row.end()};
}

}  // namespace

std::vector<double> decode_point(const FeatureMap& latent, QueryPoint q, const DecoderParams& params,
                                 const DecoderConfig& cfg, QueryCell cell) {
    return single(decode_queries(latent, std::span(&q, 1), params, cfg, false, cell));
}

std::vector<double> local_ensemble_decode(const FeatureMap& latent, QueryPoint q, const DecoderParams& params,
                                          const DecoderConfig& cfg, QueryCell cell) {
    return single(decode_queries(latent, std::span(&q, 1), params, cfg, true, cell));
}

}  // namespace rdstn
