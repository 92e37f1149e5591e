#pragma once

#include "atss/matrix.hpp"
#include "atss/nd/ops.hpp"
#include "atss/random.hpp"

#include <vector>

namespace atss::nd {

/// y = x W + b with W stored [in, out].
struct Linear {
    Tensor weight;
    Tensor bias;

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }
};

struct LayerNormParams {
    Tensor gamma;
    Tensor beta;
};

/// Query/key/value/output projections, each [d_model, d_model].
struct AttentionParams {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    std::size_t heads = 1;

    std::size_t model_dim() const { return query.in_features(); }
};

/// Xavier-uniform weight in +-sqrt(6 / (in + out)), zero bias.
Linear xavier_linear(std::size_t in, std::size_t out, Rng& rng);
LayerNormParams unit_layer_norm(std::size_t width);
AttentionParams xavier_attention(std::size_t model_dim, std::size_t heads, Rng& rng);

Tensor linear(Tape& tape, const Tensor& x, const Linear& layer);
Tensor layer_norm(Tape& tape, const Tensor& x, const LayerNormParams& ln, double eps = 1e-5);

/// Scaled dot-product attention with `heads` heads of width d_model/heads:
/// per head softmax(Qh Kh^T / sqrt(dk)) Vh, heads concatenated, then the
/// output projection. q is [Tq, d_model]; k and v are [Tk, d_model].
/// When `head_weights` is non-null it receives each head's [Tq, Tk]
/// attention matrix.
Tensor multi_head_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionParams& params, std::vector<Matrix>* head_weights = nullptr);

}  // namespace atss::nd
