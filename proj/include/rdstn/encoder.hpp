#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rdstn/autograd.hpp"
#include "rdstn/data_pipeline.hpp"
#include "rdstn/image.hpp"

namespace rdstn {

struct EncoderConfig {
    int channels = 1;     // image channels fed to the embedding
    int dim = 120;        // embedding width d
    int stages = 4;       // N residual stages
    int blocks = 6;       // D swin blocks per stage
    int window = 8;       // M
    int heads = 6;
    double mlp_ratio = 2.0;
    bool use_lff = true;  // 1x1 fusion of [F_{n-1}, STB^D(F_{n-1})] inside each stage
    bool use_gff = true;  // 1x1 fusion of [F_in, F_1, ..., F_N] before the F_in residual

    void validate() const;
    int mlp_hidden() const;
    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// weight is (in, out) so that y = x * weight + bias on token rows. Used for
// both dense layers and 1x1 convolutions.
struct LinearLayer {
    ag::Var weight;
    ag::Var bias;

    std::size_t in_features() const { return weight.rows(); }
    std::size_t out_features() const { return weight.cols(); }
    ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }
};

struct LayerNormParams {
    ag::Var gamma;
    ag::Var beta;
};

struct WindowAttentionParams {
    LinearLayer qkv;
    LinearLayer proj;
    ag::Var bias_table;  // ((2M-1)^2, heads)
};

struct SwinBlockParams {
    LayerNormParams norm1;
    WindowAttentionParams attn;
    LayerNormParams norm2;
    LinearLayer fc1;
    LinearLayer fc2;
};

struct StageParams {
    std::vector<SwinBlockParams> blocks;
    std::optional<LinearLayer> fusion;  // present iff use_lff
};

struct EncoderParams {
    LinearLayer embed;
    std::vector<StageParams> stages;
    std::optional<LinearLayer> global_fusion;  // present iff use_gff
};

using ParameterVisitor = std::function<void(const std::string& name, ag::Var& param)>;

void visit_parameters(EncoderParams& params, const std::string& prefix, const ParameterVisitor& visit);

LinearLayer make_linear(std::size_t in, std::size_t out);
// Truncated normal (std 0.02) weights, zero bias.
LinearLayer init_linear_trunc(std::size_t in, std::size_t out, Rng& rng);
// U(-1/sqrt(in), 1/sqrt(in)) weights and bias.
LinearLayer init_linear_uniform(std::size_t in, std::size_t out, Rng& rng);

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng);

// (d, H, W) features stored token-major: row y*W + x.
struct FeatureMap {
    ag::Var tokens;
    int height = 0;
    int width = 0;

    int dim() const { return static_cast<int>(tokens.cols()); }
};

// Windows laid out back to back, row-major across and within windows.
struct WindowStack {
    ag::Var tokens;  // (count * M * M, d)
    int window = 0;
    int count = 0;
};

inline constexpr double kMaskedLogit = -1e4;

// Row-gather index maps on token-major grids. A map `m` produces
// out.row(i) = in.row(m[i]).
namespace spatial {
using Index = std::vector<std::size_t>;
Index reflect_pad(int h, int w, int padded_h, int padded_w);
Index crop(int padded_h, int padded_w, int h, int w);
Index roll(int h, int w, int dy, int dx);
Index partition(int h, int w, int window);
Index inverse(const Index& perm);
// Map equivalent to gathering with `first`, then with `second`.
Index compose(const Index& first, const Index& second);
int round_up(int n, int multiple);
}  // namespace spatial

Matrix image_to_tokens(const Image& img);
Image tokens_to_image(const Matrix& tokens, int height, int width);

FeatureMap linear_embed(const Image& img, const LinearLayer& embed);

// Needs H and W to be multiples of `window`.
WindowStack window_partition(const FeatureMap& fm, int window);
FeatureMap window_reverse(const WindowStack& windows, int window, int height, int width);

// Toroidal roll: out(y + dy, x + dx) = in(y, x).
FeatureMap cyclic_shift(const FeatureMap& fm, int dy, int dx);

// (count * M * M, M * M) additive mask, 0 within a region and kMaskedLogit
// across regions. All zero for shift == 0. H and W must be multiples of M.
Matrix build_attention_mask(int height, int width, int window, int shift);

// Table row for token pair (i, j) of an M x M window.
std::vector<std::size_t> relative_position_index(int window);

WindowStack window_attention(const WindowStack& windows, const WindowAttentionParams& params, const Matrix& mask,
                             int heads);

// Pre-norm block: x + W-MSA(LN(x)), then x + MLP(LN(x)). Pads by reflection
// to a multiple of the window and crops afterwards.
FeatureMap swin_block(const FeatureMap& fm, const SwinBlockParams& params, const EncoderConfig& cfg, bool shifted);

// One residual stage: D blocks with alternating shift, then the optional
// local fusion conv over [input, blocks(input)].
FeatureMap rst_block(const FeatureMap& fm, const StageParams& params, const EncoderConfig& cfg);

// Latent grid with the input's spatial size.
FeatureMap encode(const Image& img, const EncoderParams& params, const EncoderConfig& cfg);

}  // namespace rdstn
