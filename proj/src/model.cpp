#include "rdstn/model.hpp"

#include <algorithm>

#include "rdstn/errors.hpp"

namespace rdstn {

void ModelConfig::validate() const {
    encoder.validate();
    decoder.validate();
    if (decoder.out_channels != encoder.channels) {
        throw InvalidArgument("decoder output channels must match the image channels");
    }
}

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Model m;
    m.config = cfg;
    m.encoder = init_encoder(cfg.encoder, rng);
    m.decoder = init_decoder(cfg.decoder, cfg.encoder.dim, rng);
    return m;
}

std::vector<NamedParameter> Model::parameters() const {
    std::vector<NamedParameter> out;
    // Visiting needs mutable access to the handles; the Vars themselves are
    // shared, so copies observe the same storage.
    auto enc = encoder;
    auto dec = decoder;
    visit_parameters(enc, "encoder.", [&](const std::string& name, ag::Var& v) { out.push_back({name, v}); });
    visit_parameters(dec, "decoder.", [&](const std::string& name, ag::Var& v) { out.push_back({name, v}); });
    return out;
}

Model Model::clone() const {
    Model copy = *this;
    auto rebind = [](const std::string&, ag::Var& v) { v = ag::Var(v.value(), true); };
    visit_parameters(copy.encoder, "", rebind);
    visit_parameters(copy.decoder, "", rebind);
    return copy;
}

std::size_t count_parameters(std::span<const NamedParameter> params) {
    std::size_t total = 0;
    for (const auto& p : params) total += p.var.value().size();
    return total;
}

std::size_t count_parameters(const Model& model) {
    const auto params = model.parameters();
    return count_parameters(params);
}

std::size_t count_parameters(const LinearLayer& layer) { return layer.weight.value().size() + layer.bias.value().size(); }

Matrix query_model(const Image& img, const Model& model, std::span<const QueryPoint> queries,
                   const UpscaleOptions& opts, QueryCell cell) {
    if (opts.batch_queries == 0) throw InvalidArgument("query batch size must be positive");
    ag::NoGradGuard no_grad;
    const FeatureMap latent = encode(img, model.encoder, model.config.encoder);
    const auto channels = static_cast<std::size_t>(model.config.decoder.out_channels);
    Matrix out(queries.size(), channels);
    for (std::size_t start = 0; start < queries.size(); start += opts.batch_queries) {
        const std::size_t n = std::min(opts.batch_queries, queries.size() - start);
        const ag::Var part = decode_queries(latent, queries.subspan(start, n), model.decoder, model.config.decoder,
                                            opts.use_ensemble, cell);
        std::copy(part.value().values().begin(), part.value().values().end(),
                  out.values().begin() + static_cast<std::ptrdiff_t>(start * channels));
    }
    return out;
}

Image upscale(const Image& img, const Model& model, int target_h, int target_w, const UpscaleOptions& opts) {
    if (target_h < 1 || target_w < 1) throw InvalidArgument("upscale target size must be positive");
    const CoordinateGrid grid = make_coord_grid(target_h, target_w);
    const QueryCell cell{2.0 / target_h, 2.0 / target_w};
    const Matrix values = query_model(img, model, grid.points, opts, cell);
    Image out = tokens_to_image(values, target_h, target_w);
    out.clamp_unit();
    return out;
}

}  // namespace rdstn
