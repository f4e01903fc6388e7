#include "rdstn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "rdstn/errors.hpp"

namespace rdstn::ag {

namespace {

thread_local bool t_grad_enabled = true;

Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (t_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Var& v) { return v.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (auto& v : inputs) node->inputs.push_back(v.node());
            node->backward = std::move(bw);
        }
    }
    return Var(std::move(node));
}

// Gradient buffer of input `i`, or nullptr when that input needs none.
Matrix* input_grad(Node& self, std::size_t i) {
    Node& in = *self.inputs[i];
    return in.requires_grad ? &in.grad_buffer() : nullptr;
}

void require(bool cond, const char* what) {
    if (!cond) throw InvalidArgument(what);
}

}  // namespace

Matrix& Node::grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
    return grad;
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Var& root) {
    require(root.defined() && root.rows() == 1 && root.cols() == 1,
            "backward() needs a scalar (1x1) root");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

Var constant(Matrix value) { return Var(std::move(value), false); }

Var matmul(const Var& a, const Var& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    gemm_acc(a.value(), b.value(), out);
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Matrix& A = self.inputs[0]->value;
        const Matrix& B = self.inputs[1]->value;
        if (Matrix* ga = input_grad(self, 0)) gemm_nt_acc(self.grad, B, *ga);
        if (Matrix* gb = input_grad(self, 1)) gemm_tn_acc(A, self.grad, *gb);
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    require(x.cols() == weight.rows(), "linear: input width does not match weight rows");
    require(bias.rows() == 1 && bias.cols() == weight.cols(), "linear: bias shape mismatch");
    const std::size_t n = x.rows(), m = weight.cols();
    Matrix out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(bias.value().data(), m, out.data() + i * m);
    }
    gemm_acc(x.value(), weight.value(), out);
    return make_op(std::move(out), {x, weight, bias}, [](Node& self) {
        const Matrix& X = self.inputs[0]->value;
        const Matrix& W = self.inputs[1]->value;
        const Matrix& g = self.grad;
        if (Matrix* gx = input_grad(self, 0)) gemm_nt_acc(g, W, *gx);
        if (Matrix* gw = input_grad(self, 1)) gemm_tn_acc(X, g, *gw);
        if (Matrix* gb = input_grad(self, 2)) {
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) (*gb)(0, j) += g(i, j);
            }
        }
    });
}

Var add(const Var& a, const Var& b) {
    require(a.value().same_shape(b.value()), "add: shape mismatch");
    Matrix out = a.value();
    const auto& bv = b.value().values();
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += bv[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (Matrix* g = input_grad(self, k)) {
                for (std::size_t i = 0; i < g->size(); ++i) g->values()[i] += self.grad.values()[i];
            }
        }
    });
}

Var scale(const Var& a, double s) {
    Matrix out = a.value();
    for (double& v : out.values()) v *= s;
    return make_op(std::move(out), {a}, [s](Node& self) {
        if (Matrix* g = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) g->values()[i] += s * self.grad.values()[i];
        }
    });
}

Var relu(const Var& a) {
    Matrix out = a.value();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return make_op(std::move(out), {a}, [](Node& self) {
        if (Matrix* g = input_grad(self, 0)) {
            const auto& x = self.inputs[0]->value.values();
            for (std::size_t i = 0; i < g->size(); ++i) {
                if (x[i] > 0.0) g->values()[i] += self.grad.values()[i];
            }
        }
    });
}

Var gelu(const Var& a) {
    Matrix out = a.value();
    for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    return make_op(std::move(out), {a}, [](Node& self) {
        if (Matrix* g = input_grad(self, 0)) {
            const auto& x = self.inputs[0]->value.values();
            const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
            for (std::size_t i = 0; i < g->size(); ++i) {
                const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
                const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
                g->values()[i] += self.grad.values()[i] * (cdf + x[i] * pdf);
            }
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const std::size_t n = x.rows(), d = x.cols();
    require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d,
            "layer_norm: affine parameter shape mismatch");
    Matrix normalized(n, d);
    std::vector<double> inv_std(n);
    Matrix out(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = x.value().row(i);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            normalized(i, j) = (row[j] - mean) * inv_std[i];
            out(i, j) = normalized(i, j) * gamma.value()(0, j) + beta.value()(0, j);
        }
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        const Matrix& g = self.grad;
        const Matrix& gam = self.inputs[1]->value;
        const std::size_t rows = g.rows(), dim = g.cols();
        if (Matrix* gg = input_grad(self, 1)) {
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < dim; ++j) (*gg)(0, j) += g(i, j) * normalized(i, j);
        }
        if (Matrix* gb = input_grad(self, 2)) {
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < dim; ++j) (*gb)(0, j) += g(i, j);
        }
        if (Matrix* gx = input_grad(self, 0)) {
            std::vector<double> dxhat(dim);
            for (std::size_t i = 0; i < rows; ++i) {
                double mean_d = 0.0, mean_dx = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    dxhat[j] = g(i, j) * gam(0, j);
                    mean_d += dxhat[j];
                    mean_dx += dxhat[j] * normalized(i, j);
                }
                mean_d /= static_cast<double>(dim);
                mean_dx /= static_cast<double>(dim);
                for (std::size_t j = 0; j < dim; ++j) {
                    (*gx)(i, j) += inv_std[i] * (dxhat[j] - mean_d - normalized(i, j) * mean_dx);
                }
            }
        }
    });
}

Var gather_rows(const Var& x, std::vector<std::size_t> index) {
    const std::size_t d = x.cols();
    Matrix out(index.size(), d);
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] < x.rows(), "gather_rows: index out of range");
        std::copy_n(x.value().data() + index[i] * d, d, out.data() + i * d);
    }
    return make_op(std::move(out), {x}, [index = std::move(index)](Node& self) {
        if (Matrix* g = input_grad(self, 0)) {
            const std::size_t dim = g->cols();
            for (std::size_t i = 0; i < index.size(); ++i) {
                double* dst = g->data() + index[i] * dim;
                const double* src = self.grad.data() + i * dim;
                for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
            }
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t n = parts.front().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        require(p.rows() == n, "concat_cols: row counts differ");
        total += p.cols();
    }
    Matrix out(n, total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.cols();
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(p.value().data() + i * c, c, out.data() + i * total + offset);
        }
        offset += c;
    }
    return make_op(std::move(out), parts, [](Node& self) {
        const std::size_t width = self.grad.cols();
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            const std::size_t c = self.inputs[k]->value.cols();
            if (Matrix* g = input_grad(self, k)) {
                for (std::size_t i = 0; i < g->rows(); ++i) {
                    const double* src = self.grad.data() + i * width + off;
                    double* dst = g->data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                }
            }
            off += c;
        }
    });
}

Var blend_rows(const Var& y, std::vector<double> weights, std::size_t terms) {
    require(terms > 0 && y.rows() % terms == 0, "blend_rows: rows not divisible by term count");
    require(weights.size() == y.rows(), "blend_rows: one weight per row required");
    const std::size_t q = y.rows() / terms, c = y.cols();
    Matrix out(q, c);
    for (std::size_t t = 0; t < terms; ++t) {
        for (std::size_t i = 0; i < q; ++i) {
            const double w = weights[t * q + i];
            const double* src = y.value().data() + (t * q + i) * c;
            double* dst = out.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += w * src[j];
        }
    }
    return make_op(std::move(out), {y}, [weights = std::move(weights), terms](Node& self) {
        if (Matrix* g = input_grad(self, 0)) {
            const std::size_t rows = self.grad.rows(), cols = self.grad.cols();
            for (std::size_t t = 0; t < terms; ++t) {
                for (std::size_t i = 0; i < rows; ++i) {
                    const double w = weights[t * rows + i];
                    const double* src = self.grad.data() + i * cols;
                    double* dst = g->data() + (t * rows + i) * cols;
                    for (std::size_t j = 0; j < cols; ++j) dst[j] += w * src[j];
                }
            }
        }
    });
}

Var grouped_attention(const Var& qkv, std::size_t heads, std::size_t group, const Var& bias_table,
                      const std::vector<std::size_t>& bias_index, const Matrix& mask) {
    require(heads > 0 && group > 0, "attention: heads and group size must be positive");
    require(qkv.cols() % 3 == 0, "attention: qkv width must be 3*dim");
    const std::size_t dim = qkv.cols() / 3;
    require(dim % heads == 0, "attention: dim must be divisible by head count");
    require(qkv.rows() % group == 0, "attention: token count must be a multiple of the group size");
    require(bias_index.size() == group * group, "attention: bias index must cover every token pair");
    require(bias_table.cols() == heads, "attention: bias table needs one column per head");
    for (std::size_t idx : bias_index) require(idx < bias_table.rows(), "attention: bias index out of range");
    require(mask.empty() || (mask.rows() == qkv.rows() && mask.cols() == group),
            "attention: mask shape mismatch");

    const std::size_t hd = dim / heads;
    const std::size_t groups = qkv.rows() / group;
    const std::size_t stride = 3 * dim;
    const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
    const Matrix& x = qkv.value();
    const Matrix& table = bias_table.value();

    // probs[(g * heads + h) * group * group + i * group + j]
    std::vector<double> probs(groups * heads * group * group);
    Matrix out(qkv.rows(), dim);
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t h = 0; h < heads; ++h) {
            double* p = probs.data() + (g * heads + h) * group * group;
            for (std::size_t i = 0; i < group; ++i) {
                const double* qi = x.data() + (g * group + i) * stride + h * hd;
                double row_max = -INFINITY;
                for (std::size_t j = 0; j < group; ++j) {
                    const double* kj = x.data() + (g * group + j) * stride + dim + h * hd;
                    double s = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
                    s = s * sc + table(bias_index[i * group + j], h);
                    if (!mask.empty()) s += mask(g * group + i, j);
                    p[i * group + j] = s;
                    row_max = std::max(row_max, s);
                }
                double denom = 0.0;
                for (std::size_t j = 0; j < group; ++j) {
                    p[i * group + j] = std::exp(p[i * group + j] - row_max);
                    denom += p[i * group + j];
                }
                double* o = out.data() + (g * group + i) * dim + h * hd;
                for (std::size_t j = 0; j < group; ++j) {
                    p[i * group + j] /= denom;
                    const double* vj = x.data() + (g * group + j) * stride + 2 * dim + h * hd;
                    for (std::size_t c = 0; c < hd; ++c) o[c] += p[i * group + j] * vj[c];
                }
            }
        }
    }

    return make_op(std::move(out), {qkv, bias_table},
                   [probs = std::move(probs), bias_index, heads, group, dim, hd, sc](Node& self) {
        Matrix* gqkv = input_grad(self, 0);
        Matrix* gtable = input_grad(self, 1);
        const Matrix& xv = self.inputs[0]->value;
        const Matrix& go = self.grad;
        const std::size_t stride3 = 3 * dim;
        const std::size_t ngroups = xv.rows() / group;
        std::vector<double> ds(group * group);
        for (std::size_t g = 0; g < ngroups; ++g) {
            for (std::size_t h = 0; h < heads; ++h) {
                const double* p = probs.data() + (g * heads + h) * group * group;
                // dP = dO V^T, then dS = P * (dP - rowsum(P * dP)).
                for (std::size_t i = 0; i < group; ++i) {
                    const double* goi = go.data() + (g * group + i) * dim + h * hd;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < group; ++j) {
                        const double* vj = xv.data() + (g * group + j) * stride3 + 2 * dim + h * hd;
                        double dp = 0.0;
                        for (std::size_t c = 0; c < hd; ++c) dp += goi[c] * vj[c];
                        ds[i * group + j] = dp;
                        dot += dp * p[i * group + j];
                    }
                    for (std::size_t j = 0; j < group; ++j) {
                        ds[i * group + j] = p[i * group + j] * (ds[i * group + j] - dot);
                    }
                }
                if (gtable) {
                    for (std::size_t ij = 0; ij < group * group; ++ij) (*gtable)(bias_index[ij], h) += ds[ij];
                }
                if (!gqkv) continue;
                for (std::size_t i = 0; i < group; ++i) {
                    const double* qi = xv.data() + (g * group + i) * stride3 + h * hd;
                    double* gqi = gqkv->data() + (g * group + i) * stride3 + h * hd;
                    const double* goi = go.data() + (g * group + i) * dim + h * hd;
                    for (std::size_t j = 0; j < group; ++j) {
                        const double* kj = xv.data() + (g * group + j) * stride3 + dim + h * hd;
                        double* gkj = gqkv->data() + (g * group + j) * stride3 + dim + h * hd;
                        double* gvj = gqkv->data() + (g * group + j) * stride3 + 2 * dim + h * hd;
                        const double s = ds[i * group + j] * sc;
                        const double pij = p[i * group + j];
                        for (std::size_t c = 0; c < hd; ++c) {
                            gqi[c] += s * kj[c];
                            gkj[c] += s * qi[c];
                            gvj[c] += pij * goi[c];
                        }
                    }
                }
            }
        }
    });
}

Var l1_loss(const Var& pred, const Matrix& target) {
    require(pred.value().same_shape(target), "l1_loss: shape mismatch");
    require(target.size() > 0, "l1_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) sum += std::abs(pred.value().values()[i] - target.values()[i]);
    const double n = static_cast<double>(target.size());
    Matrix out(1, 1, sum / n);
    return make_op(std::move(out), {pred}, [target, n](Node& self) {
        if (Matrix* g = input_grad(self, 0)) {
            const double up = self.grad(0, 0) / n;
            const auto& p = self.inputs[0]->value.values();
            for (std::size_t i = 0; i < g->size(); ++i) {
                const double diff = p[i] - target.values()[i];
                const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                g->values()[i] += sign * up;
            }
        }
    });
}

Var mse_loss(const Var& pred, const Matrix& target) {
    require(pred.value().same_shape(target), "mse_loss: shape mismatch");
    require(target.size() > 0, "mse_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double diff = pred.value().values()[i] - target.values()[i];
        sum += diff * diff;
    }
    const double n = static_cast<double>(target.size());
    Matrix out(1, 1, sum / n);
    return make_op(std::move(out), {pred}, [target, n](Node& self) {
        if (Matrix* g = input_grad(self, 0)) {
            const double up = 2.0 * self.grad(0, 0) / n;
            const auto& p = self.inputs[0]->value.values();
            for (std::size_t i = 0; i < g->size(); ++i) g->values()[i] += up * (p[i] - target.values()[i]);
        }
    });
}

}  // namespace rdstn::ag
