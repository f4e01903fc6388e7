#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rdstn/encoder.hpp"

namespace rdstn::testing {

// Plain multi-head self-attention over all tokens of an M x M map, with the
// relative position bias looked up from token coordinates directly.
inline Matrix dense_mhsa(const Matrix& x, const WindowAttentionParams& p, int heads, int window) {
    const std::size_t n = x.rows(), d = x.cols(), hd = d / heads;
    const Matrix& wqkv = p.qkv.weight.value();
    const Matrix& bqkv = p.qkv.bias.value();
    Matrix q(n, d), k(n, d), v(n, d);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t o = 0; o < d; ++o) {
            double sq = bqkv(0, o), sk = bqkv(0, d + o), sv = bqkv(0, 2 * d + o);
            for (std::size_t i = 0; i < d; ++i) {
                sq += x(t, i) * wqkv(i, o);
                sk += x(t, i) * wqkv(i, d + o);
                sv += x(t, i) * wqkv(i, 2 * d + o);
            }
            q(t, o) = sq;
            k(t, o) = sk;
            v(t, o) = sv;
        }
    Matrix heads_out(n, d);
    const int span = 2 * window - 1;
    for (int h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> logits(n);
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) s += q(i, h * hd + c) * k(j, h * hd + c);
                const int dy = static_cast<int>(i) / window - static_cast<int>(j) / window;
                const int dx = static_cast<int>(i) % window - static_cast<int>(j) % window;
                const auto row = static_cast<std::size_t>((dy + window - 1) * span + dx + window - 1);
                logits[j] = s / std::sqrt(static_cast<double>(hd)) + p.bias_table.value()(row, h);
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& l : logits) z += (l = std::exp(l - mx));
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < hd; ++c) heads_out(i, h * hd + c) += logits[j] / z * v(j, h * hd + c);
        }
    const Matrix& wp = p.proj.weight.value();
    Matrix out(n, d);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t o = 0; o < d; ++o) {
            double s = p.proj.bias.value()(0, o);
            for (std::size_t i = 0; i < d; ++i) s += heads_out(t, i) * wp(i, o);
            out(t, o) = s;
        }
    return out;
}

}  // namespace rdstn::testing
