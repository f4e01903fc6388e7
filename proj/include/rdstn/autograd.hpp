#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "rdstn/tensor.hpp"

// Minimal reverse-mode automatic differentiation over 2-D double matrices.
//
// Every op records its inputs and a backward closure only while gradient
// recording is enabled for the calling thread and at least one input needs a
// gradient. Inference under `NoGradGuard` therefore builds no graph and is
// safe to run concurrently over shared, frozen parameters.
namespace rdstn::ag {

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    Matrix& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    bool defined() const noexcept { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad() { node_->grad = Matrix(); }

    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every leaf.
void backward(const Var& root);

Var constant(Matrix value);

Var matmul(const Var& a, const Var& b);
// x (n, in) * weight (in, out) + bias (1, out)
Var linear(const Var& x, const Var& weight, const Var& bias);
Var add(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var gelu(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// out.row(i) = x.row(index[i]); gradients scatter-add back.
Var gather_rows(const Var& x, std::vector<std::size_t> index);
Var concat_cols(const std::vector<Var>& parts);

// y holds `terms` stacked blocks of Q rows; out.row(q) = sum_t w[t*Q+q] * y.row(t*Q+q).
Var blend_rows(const Var& y, std::vector<double> weights, std::size_t terms);

// Scaled dot-product attention inside independent groups of `group` tokens.
//   qkv:        (groups*group, 3*dim), column blocks [Q | K | V]
//   bias_table: (table_rows, heads) learned additive bias
//   bias_index: group*group entries mapping token pair (i, j) to a table row
//   mask:       empty, or (groups*group, group) additive mask per group
// Returns (groups*group, dim) with heads concatenated along columns.
Var grouped_attention(const Var& qkv, std::size_t heads, std::size_t group, const Var& bias_table,
                      const std::vector<std::size_t>& bias_index, const Matrix& mask);

// Mean absolute error against a constant target; returns 1x1.
Var l1_loss(const Var& pred, const Matrix& target);
// Mean squared error against a constant target; returns 1x1.
Var mse_loss(const Var& pred, const Matrix& target);

}  // namespace rdstn::ag
