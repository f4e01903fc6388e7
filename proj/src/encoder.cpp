#include "rdstn/encoder.hpp"

#include <cmath>

#include "rdstn/errors.hpp"

namespace rdstn {

void EncoderConfig::validate() const {
    if (channels < 1) throw InvalidArgument("encoder: channels must be positive");
    if (dim < 1 || heads < 1 || dim % heads != 0) throw InvalidArgument("encoder: dim must be divisible by heads");
    if (window < 2) throw InvalidArgument("encoder: window must be at least 2");
    if (stages < 1 || blocks < 1) throw InvalidArgument("encoder: stages and blocks must be at least 1");
    if (!(mlp_ratio > 0.0)) throw InvalidArgument("encoder: mlp_ratio must be positive");
}

int EncoderConfig::mlp_hidden() const { return std::max(1, static_cast<int>(std::lround(dim * mlp_ratio))); }

LinearLayer make_linear(std::size_t in, std::size_t out) {
    return {ag::Var(Matrix(in, out), true), ag::Var(Matrix(1, out), true)};
}

LinearLayer init_linear_trunc(std::size_t in, std::size_t out, Rng& rng) {
    LinearLayer layer = make_linear(in, out);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : layer.weight.mutable_value().values()) {
        double z;
        do {
            z = normal(rng);
        } while (std::abs(z) > 2.0);
        v = 0.02 * z;
    }
    return layer;
}

LinearLayer init_linear_uniform(std::size_t in, std::size_t out, Rng& rng) {
    LinearLayer layer = make_linear(in, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (double& v : layer.weight.mutable_value().values()) v = uniform(rng);
    for (double& v : layer.bias.mutable_value().values()) v = uniform(rng);
    return layer;
}

namespace {

LayerNormParams make_norm(std::size_t d) {
    return {ag::Var(Matrix(1, d, 1.0), true), ag::Var(Matrix(1, d, 0.0), true)};
}

void visit_linear(LinearLayer& layer, const std::string& name, const ParameterVisitor& visit) {
    visit(name + ".weight", layer.weight);
    visit(name + ".bias", layer.bias);
}

void visit_norm(LayerNormParams& norm, const std::string& name, const ParameterVisitor& visit) {
    visit(name + ".gamma", norm.gamma);
    visit(name + ".beta", norm.beta);
}

}  // namespace

void visit_parameters(EncoderParams& params, const std::string& prefix, const ParameterVisitor& visit) {
    visit_linear(params.embed, prefix + "embed", visit);
    for (std::size_t s = 0; s < params.stages.size(); ++s) {
        auto& stage = params.stages[s];
        const std::string sp = prefix + "stages." + std::to_string(s) + ".";
        for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
            auto& blk = stage.blocks[b];
            const std::string bp = sp + "blocks." + std::to_string(b) + ".";
            visit_norm(blk.norm1, bp + "norm1", visit);
            visit_linear(blk.attn.qkv, bp + "attn.qkv", visit);
            visit_linear(blk.attn.proj, bp + "attn.proj", visit);
            visit(bp + "attn.bias_table", blk.attn.bias_table);
            visit_norm(blk.norm2, bp + "norm2", visit);
            visit_linear(blk.fc1, bp + "fc1", visit);
            visit_linear(blk.fc2, bp + "fc2", visit);
        }
        if (stage.fusion) visit_linear(*stage.fusion, sp + "fusion", visit);
    }
    if (params.global_fusion) visit_linear(*params.global_fusion, prefix + "global_fusion", visit);
}

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto hidden = static_cast<std::size_t>(cfg.mlp_hidden());
    const auto table_rows = static_cast<std::size_t>((2 * cfg.window - 1) * (2 * cfg.window - 1));

    EncoderParams p;
    p.embed = init_linear_uniform(static_cast<std::size_t>(cfg.channels), d, rng);
    for (int s = 0; s < cfg.stages; ++s) {
        StageParams stage;
        for (int b = 0; b < cfg.blocks; ++b) {
            SwinBlockParams blk;
            blk.norm1 = make_norm(d);
            blk.attn.qkv = init_linear_trunc(d, 3 * d, rng);
            blk.attn.proj = init_linear_trunc(d, d, rng);
            LinearLayer table = init_linear_trunc(table_rows, static_cast<std::size_t>(cfg.heads), rng);
            blk.attn.bias_table = table.weight;
            blk.norm2 = make_norm(d);
            blk.fc1 = init_linear_trunc(d, hidden, rng);
            blk.fc2 = init_linear_trunc(hidden, d, rng);
            stage.blocks.push_back(std::move(blk));
        }
        if (cfg.use_lff) stage.fusion = init_linear_uniform(2 * d, d, rng);
        p.stages.push_back(std::move(stage));
    }
    if (cfg.use_gff) {
        p.global_fusion = init_linear_uniform(static_cast<std::size_t>(cfg.stages + 1) * d, d, rng);
    }
    return p;
}

namespace spatial {

Index reflect_pad(int h, int w, int padded_h, int padded_w) {
    Index idx;
    idx.reserve(static_cast<std::size_t>(padded_h) * padded_w);
    for (int y = 0; y < padded_h; ++y)
        for (int x = 0; x < padded_w; ++x)
            idx.push_back(static_cast<std::size_t>(reflect_index(y, h)) * w + reflect_index(x, w));
    return idx;
}

Index crop(int padded_h, int padded_w, int h, int w) {
    if (h > padded_h || w > padded_w) throw InvalidArgument("crop larger than source");
    Index idx;
    idx.reserve(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) idx.push_back(static_cast<std::size_t>(y) * padded_w + x);
    return idx;
}

Index roll(int h, int w, int dy, int dx) {
    Index idx;
    idx.reserve(static_cast<std::size_t>(h) * w);
    auto wrap = [](int v, int n) { return ((v % n) + n) % n; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            idx.push_back(static_cast<std::size_t>(wrap(y - dy, h)) * w + wrap(x - dx, w));
    return idx;
}

Index partition(int h, int w, int window) {
    if (window < 1 || h % window != 0 || w % window != 0) {
        throw InvalidArgument("window partition needs dimensions divisible by the window size");
    }
    Index idx;
    idx.reserve(static_cast<std::size_t>(h) * w);
    for (int wy = 0; wy < h / window; ++wy)
        for (int wx = 0; wx < w / window; ++wx)
            for (int ty = 0; ty < window; ++ty)
                for (int tx = 0; tx < window; ++tx)
                    idx.push_back(static_cast<std::size_t>(wy * window + ty) * w + wx * window + tx);
    return idx;
}

Index inverse(const Index& perm) {
    Index inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

Index compose(const Index& first, const Index& second) {
    Index out(second.size());
    for (std::size_t i = 0; i < second.size(); ++i) out[i] = first[second[i]];
    return out;
}

int round_up(int n, int multiple) { return (n + multiple - 1) / multiple * multiple; }

}  // namespace spatial

Matrix image_to_tokens(const Image& img) {
    Matrix m(img.pixel_count(), static_cast<std::size_t>(img.channels));
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                m(static_cast<std::size_t>(y) * img.width + x, static_cast<std::size_t>(c)) = img.at(c, y, x);
    return m;
}

Image tokens_to_image(const Matrix& tokens, int height, int width) {
    if (tokens.rows() != static_cast<std::size_t>(height) * width) {
        throw InvalidArgument("token count does not match image size");
    }
    Image img(static_cast<int>(tokens.cols()), height, width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                img.at(c, y, x) = tokens(static_cast<std::size_t>(y) * width + x, static_cast<std::size_t>(c));
    return img;
}

FeatureMap linear_embed(const Image& img, const LinearLayer& embed) {
    if (static_cast<std::size_t>(img.channels) != embed.in_features()) {
        throw InvalidArgument("linear_embed: image has " + std::to_string(img.channels) +
                              " channels, embedding expects " + std::to_string(embed.in_features()));
    }
    return {embed(ag::constant(image_to_tokens(img))), img.height, img.width};
}

WindowStack window_partition(const FeatureMap& fm, int window) {
    auto idx = spatial::partition(fm.height, fm.width, window);
    const int count = (fm.height / window) * (fm.width / window);
    return {ag::gather_rows(fm.tokens, std::move(idx)), window, count};
}

FeatureMap window_reverse(const WindowStack& windows, int window, int height, int width) {
    if (window != windows.window || height % window != 0 || width % window != 0 ||
        windows.tokens.rows() != static_cast<std::size_t>(height) * width) {
        throw InvalidArgument("window_reverse: window stack does not match the requested size");
    }
    auto idx = spatial::inverse(spatial::partition(height, width, window));
    return {ag::gather_rows(windows.tokens, std::move(idx)), height, width};
}

FeatureMap cyclic_shift(const FeatureMap& fm, int dy, int dx) {
    return {ag::gather_rows(fm.tokens, spatial::roll(fm.height, fm.width, dy, dx)), fm.height, fm.width};
}

Matrix build_attention_mask(int height, int width, int window, int shift) {
    if (window < 1 || height % window != 0 || width % window != 0) {
        throw InvalidArgument("attention mask needs dimensions divisible by the window size");
    }
    if (shift != 0 && shift != window / 2) throw InvalidArgument("attention mask shift must be 0 or window/2");
    const std::size_t tokens = static_cast<std::size_t>(window) * window;
    const std::size_t count = static_cast<std::size_t>(height / window) * (width / window);
    Matrix mask(count * tokens, tokens);
    if (shift == 0) return mask;

    auto band = [&](int v, int n) { return v < n - window ? 0 : (v < n - shift ? 1 : 2); };
    const auto order = spatial::partition(height, width, window);
    std::vector<int> region(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const int y = static_cast<int>(order[i] / static_cast<std::size_t>(width));
        const int x = static_cast<int>(order[i] % static_cast<std::size_t>(width));
        region[i] = band(y, height) * 3 + band(x, width);
    }
    for (std::size_t g = 0; g < count; ++g)
        for (std::size_t i = 0; i < tokens; ++i)
            for (std::size_t j = 0; j < tokens; ++j)
                if (region[g * tokens + i] != region[g * tokens + j]) mask(g * tokens + i, j) = kMaskedLogit;
    return mask;
}

std::vector<std::size_t> relative_position_index(int window) {
    const int m = window;
    const std::size_t tokens = static_cast<std::size_t>(m) * m;
    std::vector<std::size_t> idx(tokens * tokens);
    for (std::size_t i = 0; i < tokens; ++i) {
        const int yi = static_cast<int>(i) / m, xi = static_cast<int>(i) % m;
        for (std::size_t j = 0; j < tokens; ++j) {
            const int yj = static_cast<int>(j) / m, xj = static_cast<int>(j) % m;
            idx[i * tokens + j] = static_cast<std::size_t>((yi - yj + m - 1) * (2 * m - 1) + (xi - xj + m - 1));
        }
    }
    return idx;
}

WindowStack window_attention(const WindowStack& windows, const WindowAttentionParams& params, const Matrix& mask,
                             int heads) {
    const int m = windows.window;
    const auto group = static_cast<std::size_t>(m) * m;
    const std::size_t d = windows.tokens.cols();
    if (params.qkv.in_features() != d || params.qkv.out_features() != 3 * d || params.proj.in_features() != d) {
        throw InvalidArgument("window_attention: projection shapes do not match token width");
    }
    if (params.bias_table.rows() != static_cast<std::size_t>((2 * m - 1) * (2 * m - 1))) {
        throw InvalidArgument("window_attention: bias table size does not match the window");
    }
    ag::Var qkv = params.qkv(windows.tokens);
    ag::Var attended = ag::grouped_attention(qkv, static_cast<std::size_t>(heads), group, params.bias_table,
                                             relative_position_index(m), mask);
    return {params.proj(attended), m, windows.count};
}

FeatureMap swin_block(const FeatureMap& fm, const SwinBlockParams& params, const EncoderConfig& cfg, bool shifted) {
    const int m = cfg.window;
    const int h = fm.height, w = fm.width;
    const int ph = spatial::round_up(h, m), pw = spatial::round_up(w, m);
    const int shift = shifted ? m / 2 : 0;

    // pad -> roll(-shift) -> partition, and the inverse chain on the way out.
    const auto partition = spatial::partition(ph, pw, m);
    const auto into_windows =
        spatial::compose(spatial::compose(spatial::reflect_pad(h, w, ph, pw), spatial::roll(ph, pw, -shift, -shift)),
                         partition);
    const auto out_of_windows = spatial::compose(
        spatial::compose(spatial::inverse(partition), spatial::roll(ph, pw, shift, shift)), spatial::crop(ph, pw, h, w));

    ag::Var normed = ag::layer_norm(fm.tokens, params.norm1.gamma, params.norm1.beta);
    WindowStack windows{ag::gather_rows(normed, into_windows), m, (ph / m) * (pw / m)};
    const Matrix mask = shift ? build_attention_mask(ph, pw, m, shift) : Matrix();
    WindowStack attended = window_attention(windows, params.attn, mask, cfg.heads);
    ag::Var x = ag::add(fm.tokens, ag::gather_rows(attended.tokens, out_of_windows));

    ag::Var hidden = ag::gelu(params.fc1(ag::layer_norm(x, params.norm2.gamma, params.norm2.beta)));
    x = ag::add(x, params.fc2(hidden));
    return {x, h, w};
}

FeatureMap rst_block(const FeatureMap& fm, const StageParams& params, const EncoderConfig& cfg) {
    FeatureMap cur = fm;
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        cur = swin_block(cur, params.blocks[b], cfg, b % 2 == 1);
    }
    if (!params.fusion) return cur;
    ag::Var fused = (*params.fusion)(ag::concat_cols({fm.tokens, cur.tokens}));
    return {fused, fm.height, fm.width};
}

FeatureMap encode(const Image& img, const EncoderParams& params, const EncoderConfig& cfg) {
    cfg.validate();
    if (params.stages.size() != static_cast<std::size_t>(cfg.stages)) {
        throw InvalidArgument("encode: parameter stage count differs from the config");
    }
    if (cfg.use_gff != params.global_fusion.has_value()) {
        throw InvalidArgument("encode: global fusion parameters do not match use_gff");
    }
    for (const auto& stage : params.stages) {
        if (cfg.use_lff != stage.fusion.has_value() || stage.blocks.size() != static_cast<std::size_t>(cfg.blocks)) {
            throw InvalidArgument("encode: stage parameters do not match the config");
        }
    }
    const FeatureMap f_in = linear_embed(img, params.embed);
    std::vector<ag::Var> features{f_in.tokens};
    FeatureMap cur = f_in;
    for (const auto& stage : params.stages) {
        cur = rst_block(cur, stage, cfg);
        features.push_back(cur.tokens);
    }
    ag::Var out = params.global_fusion ? ag::add(f_in.tokens, (*params.global_fusion)(ag::concat_cols(features)))
                                       : ag::add(f_in.tokens, cur.tokens);
    return {out, img.height, img.width};
}

}  // namespace rdstn
