#include "atss/nd/ops.hpp"

#include "atss/error.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

namespace atss::nd {

namespace {

using NodePtr = std::shared_ptr<Node>;

bool tracks(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape.recording()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void require_matrix(const Tensor& t, const char* op) {
    if (!t.defined() || t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got " + (t.defined() ? to_string(t.shape()) : "null"));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
}

Tensor checked(Tensor out, const char* op) {
    require_finite(out.value(), op);
    return out;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    auto out = Tensor::zeros({m, n});
    {
        const double* pa = a.value().data();
        const double* pb = b.value().data();
        double* po = out.mutable_value().data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double av = pa[i * k + p];
                const double* brow = pb + p * n;
                double* orow = po + i * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    }
    checked(out, "matmul");
    if (tracks(tape, {&a, &b})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), nb = b.node(), no = out.node();
        tape.record(out, {na, nb}, [na, nb, no, m, k, n] {
            const double* go = no->grad.data();
            if (na->requires_grad) {
                auto& ga = na->grad_buffer();
                const double* pb = nb->value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * pb[p * n + j];
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (nb->requires_grad) {
                auto& gb = nb->grad_buffer();
                const double* pa = na->value.data();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = pa[i * k + p];
                        double* grow = gb.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) grow[j] += av * go[i * n + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    auto out = Tensor::zeros({n, m});
    auto src = a.value();
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    if (tracks(tape, {&a})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), no = out.node();
        tape.record(out, {na}, [na, no, m, n] {
            auto& ga = na->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += no->grad[j * m + i];
        });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto out = Tensor::zeros(a.shape());
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a.value()[i] + b.value()[i];
    checked(out, "add");
    if (tracks(tape, {&a, &b})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), nb = b.node(), no = out.node();
        tape.record(out, {na, nb}, [na, nb, no] {
            for (const auto& in : {na, nb}) {
                if (!in->requires_grad) continue;
                auto& g = in->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += no->grad[i];
            }
        });
    }
    return out;
}

Tensor add_row(Tape& tape, const Tensor& x, const Tensor& bias) {
    require_matrix(x, "add_row");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (bias.rank() != 1 || bias.dim(0) != n) {
        throw ShapeError("add_row: bias " + to_string(bias.shape()) + " does not match " + to_string(x.shape()));
    }
    auto out = Tensor::zeros({m, n});
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[i * n + j] = x.value()[i * n + j] + bias.value()[j];
    checked(out, "add_row");
    if (tracks(tape, {&x, &bias})) {
        out.set_requires_grad(true);
        NodePtr nx = x.node(), nbias = bias.node(), no = out.node();
        tape.record(out, {nx, nbias}, [nx, nbias, no, m, n] {
            if (nx->requires_grad) {
                auto& g = nx->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += no->grad[i];
            }
            if (nbias->requires_grad) {
                auto& g = nbias->grad_buffer();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += no->grad[i * n + j];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto out = Tensor::zeros(a.shape());
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a.value()[i] * b.value()[i];
    checked(out, "mul");
    if (tracks(tape, {&a, &b})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), nb = b.node(), no = out.node();
        tape.record(out, {na, nb}, [na, nb, no] {
            // Read both operands before writing, since a and b may alias.
            const std::size_t n = no->grad.size();
            if (na->requires_grad) {
                auto& g = na->grad_buffer();
                for (std::size_t i = 0; i < n; ++i) g[i] += no->grad[i] * nb->value[i];
            }
            if (nb->requires_grad) {
                auto& g = nb->grad_buffer();
                for (std::size_t i = 0; i < n; ++i) g[i] += no->grad[i] * na->value[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
    auto out = Tensor::zeros(a.shape());
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a.value()[i] * factor;
    checked(out, "scale");
    if (tracks(tape, {&a})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), no = out.node();
        tape.record(out, {na}, [na, no, factor] {
            auto& g = na->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += no->grad[i] * factor;
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
    auto out = Tensor::zeros(a.shape());
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(a.value()[i], 0.0);
    checked(out, "relu");
    if (tracks(tape, {&a})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), no = out.node();
        tape.record(out, {na}, [na, no] {
            auto& g = na->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (na->value[i] > 0.0) g[i] += no->grad[i];
            }
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
    double s = 0.0;
    for (double v : a.value()) s += v;
    auto out = checked(Tensor::scalar(s), "sum");
    if (tracks(tape, {&a})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), no = out.node();
        tape.record(out, {na}, [na, no] {
            auto& g = na->grad_buffer();
            for (auto& x : g) x += no->grad[0];
        });
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape) + " changes element count");
    }
    auto out = Tensor::from(std::move(shape), std::vector<double>(a.value().begin(), a.value().end()));
    if (tracks(tape, {&a})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), no = out.node();
        tape.record(out, {na}, [na, no] {
            auto& g = na->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += no->grad[i];
        });
    }
    return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
    require_matrix(x, "softmax_rows");
    require_finite(x.value(), "softmax_rows input");
    const std::size_t m = x.dim(0), n = x.dim(1);
    auto out = Tensor::zeros({m, n});
    auto src = x.value();
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = src.data() + i * n;
        double* y = dst.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp(row[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= z;
    }
    checked(out, "softmax_rows");
    if (tracks(tape, {&x})) {
        out.set_requires_grad(true);
        NodePtr nx = x.node(), no = out.node();
        tape.record(out, {nx}, [nx, no, m, n] {
            auto& g = nx->grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = no->value.data() + i * n;
                const double* gy = no->grad.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (gamma.rank() != 1 || gamma.dim(0) != n || beta.shape() != gamma.shape()) {
        throw ShapeError("layer_norm: affine parameters must be [" + std::to_string(n) + "]");
    }
    auto out = Tensor::zeros({m, n});
    std::vector<double> xhat(m * n), inv_std(m);
    auto src = x.value();
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = src.data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (row[j] - mean) * inv_std[i];
            dst[i * n + j] = gamma.value()[j] * xhat[i * n + j] + beta.value()[j];
        }
    }
    checked(out, "layer_norm");
    if (tracks(tape, {&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        NodePtr nx = x.node(), ng = gamma.node(), nbeta = beta.node(), no = out.node();
        tape.record(out, {nx, ng, nbeta},
                    [nx, ng, nbeta, no, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                        const double* gy = no->grad.data();
                        if (ng->requires_grad) {
                            auto& g = ng->grad_buffer();
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) g[j] += gy[i * n + j] * xhat[i * n + j];
                        }
                        if (nbeta->requires_grad) {
                            auto& g = nbeta->grad_buffer();
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) g[j] += gy[i * n + j];
                        }
                        if (nx->requires_grad) {
                            auto& g = nx->grad_buffer();
                            const double inv_n = 1.0 / static_cast<double>(n);
                            for (std::size_t i = 0; i < m; ++i) {
                                double mean_d = 0.0, mean_dx = 0.0;
                                for (std::size_t j = 0; j < n; ++j) {
                                    const double d = gy[i * n + j] * ng->value[j];
                                    mean_d += d;
                                    mean_dx += d * xhat[i * n + j];
                                }
                                mean_d *= inv_n;
                                mean_dx *= inv_n;
                                for (std::size_t j = 0; j < n; ++j) {
                                    const double d = gy[i * n + j] * ng->value[j];
                                    g[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                                }
                            }
                        }
                    });
    }
    return out;
}

Tensor mean_pool_rows(Tape& tape, const Tensor& x) {
    require_matrix(x, "mean_pool_rows");
    const std::size_t t = x.dim(0), d = x.dim(1);
    auto out = Tensor::zeros({d});
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) dst[j] += x.value()[i * d + j];
    for (auto& v : dst) v /= static_cast<double>(t);
    checked(out, "mean_pool_rows");
    if (tracks(tape, {&x})) {
        out.set_requires_grad(true);
        NodePtr nx = x.node(), no = out.node();
        tape.record(out, {nx}, [nx, no, t, d] {
            auto& g = nx->grad_buffer();
            const double w = 1.0 / static_cast<double>(t);
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < d; ++j) g[i * d + j] += no->grad[j] * w;
        });
    }
    return out;
}

Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b) {
    require_matrix(a, "concat_rows");
    require_matrix(b, "concat_rows");
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("concat_rows: column mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    std::vector<double> data(a.value().begin(), a.value().end());
    data.insert(data.end(), b.value().begin(), b.value().end());
    auto out = Tensor::from({a.dim(0) + b.dim(0), a.dim(1)}, std::move(data));
    if (tracks(tape, {&a, &b})) {
        out.set_requires_grad(true);
        NodePtr na = a.node(), nb = b.node(), no = out.node();
        tape.record(out, {na, nb}, [na, nb, no] {
            const std::size_t split = na->value.size();
            if (na->requires_grad) {
                auto& g = na->grad_buffer();
                for (std::size_t i = 0; i < split; ++i) g[i] += no->grad[i];
            }
            if (nb->requires_grad) {
                auto& g = nb->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += no->grad[split + i];
            }
        });
    }
    return out;
}

Tensor concat_channels(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const std::size_t rank = parts.front().rank();
    if (rank != 1 && rank != 2) throw ShapeError("concat_channels: inputs must be rank 1 or 2");
    const std::size_t rows = rank == 2 ? parts.front().dim(0) : 1;
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank || (rank == 2 && p.dim(0) != rows)) {
            throw ShapeError("concat_channels: incompatible part " + to_string(p.shape()));
        }
        widths.push_back(p.shape().back());
        total += widths.back();
    }
    auto out = Tensor::zeros(rank == 2 ? Shape{rows, total} : Shape{total});
    auto dst = out.mutable_value();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j) dst[i * total + offset + j] = parts[k].value()[i * widths[k] + j];
        offset += widths[k];
    }
    bool any = false;
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        any = any || p.requires_grad();
    }
    if (tape.recording() && any) {
        out.set_requires_grad(true);
        NodePtr no = out.node();
        tape.record(out, nodes, [nodes, widths, no, rows, total] {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                if (nodes[k]->requires_grad) {
                    auto& g = nodes[k]->grad_buffer();
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += no->grad[i * total + offset + j];
                }
                offset += widths[k];
            }
        });
    }
    return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t start, std::size_t len) {
    require_matrix(x, "slice_cols");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (len == 0 || start + len > n) throw ShapeError("slice_cols: range out of bounds for " + to_string(x.shape()));
    auto out = Tensor::zeros({m, len});
    auto dst = out.mutable_value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < len; ++j) dst[i * len + j] = x.value()[i * n + start + j];
    if (tracks(tape, {&x})) {
        out.set_requires_grad(true);
        NodePtr nx = x.node(), no = out.node();
        tape.record(out, {nx}, [nx, no, m, n, start, len] {
            auto& g = nx->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < len; ++j) g[i * n + start + j] += no->grad[i * len + j];
        });
    }
    return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& probs, int label) {
    if (probs.size() != 2) throw ShapeError("cross_entropy: expected 2 probabilities, got " + to_string(probs.shape()));
    if (label != 0 && label != 1) throw NumericError("cross_entropy: label must be 0 or 1");
    const double p0 = probs.value()[0], p1 = probs.value()[1];
    if (!(p0 >= 0.0 && p0 <= 1.0 && p1 >= 0.0 && p1 <= 1.0) || std::abs(p0 + p1 - 1.0) > 1e-6) {
        throw NumericError("cross_entropy: input is not a probability distribution");
    }
    const double p = probs.value()[static_cast<std::size_t>(label)];
    const double clamped = std::max(p, kLogClamp);
    auto out = checked(Tensor::scalar(-std::log(clamped)), "cross_entropy");
    if (tracks(tape, {&probs})) {
        out.set_requires_grad(true);
        NodePtr np = probs.node(), no = out.node();
        const auto idx = static_cast<std::size_t>(label);
        tape.record(out, {np}, [np, no, idx, p] {
            // The clamp is flat below kLogClamp.
            if (p > kLogClamp) np->grad_buffer()[idx] += -no->grad[0] / p;
        });
    }
    return out;
}

}  // namespace atss::nd
