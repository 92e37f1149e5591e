#include "atss/nd/layers.hpp"

#include "atss/error.hpp"

#include <algorithm>
#include <cmath>

namespace atss::nd {

Linear xavier_linear(std::size_t in, std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (auto& x : w) x = rng.uniform(-limit, limit);
    return {Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

LayerNormParams unit_layer_norm(std::size_t width) {
    return {Tensor::from({width}, std::vector<double>(width, 1.0), true), Tensor::zeros({width}, true)};
}

AttentionParams xavier_attention(std::size_t model_dim, std::size_t heads, Rng& rng) {
    if (heads == 0 || model_dim % heads != 0) {
        throw ShapeError("attention: d_model " + std::to_string(model_dim) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    AttentionParams p;
    p.query = xavier_linear(model_dim, model_dim, rng);
    p.key = xavier_linear(model_dim, model_dim, rng);
    p.value = xavier_linear(model_dim, model_dim, rng);
    p.output = xavier_linear(model_dim, model_dim, rng);
    p.heads = heads;
    return p;
}

Tensor linear(Tape& tape, const Tensor& x, const Linear& layer) {
    return add_row(tape, matmul(tape, x, layer.weight), layer.bias);
}

Tensor layer_norm(Tape& tape, const Tensor& x, const LayerNormParams& ln, double eps) {
    return layer_norm(tape, x, ln.gamma, ln.beta, eps);
}

Tensor multi_head_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionParams& params, std::vector<Matrix>* head_weights) {
    const std::size_t dm = params.model_dim();
    const std::size_t h = params.heads;
    if (h == 0 || dm % h != 0) throw ShapeError("attention: d_model not divisible by head count");
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != dm || k.dim(1) != dm || v.dim(1) != dm) {
        throw ShapeError("attention: q/k/v must be [*, " + std::to_string(dm) + "]");
    }
    if (k.dim(0) != v.dim(0)) throw ShapeError("attention: key and value lengths differ");

    const std::size_t dk = dm / h;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    auto qp = linear(tape, q, params.query);
    auto kp = linear(tape, k, params.key);
    auto vp = linear(tape, v, params.value);

    if (head_weights) head_weights->clear();
    std::vector<Tensor> heads;
    heads.reserve(h);
    for (std::size_t i = 0; i < h; ++i) {
        auto qh = slice_cols(tape, qp, i * dk, dk);
        auto kh = slice_cols(tape, kp, i * dk, dk);
        auto vh = slice_cols(tape, vp, i * dk, dk);
        auto scores = scale(tape, matmul(tape, qh, transpose(tape, kh)), inv_sqrt);
        auto weights = softmax_rows(tape, scores);
        if (head_weights) {
            Matrix m(weights.dim(0), weights.dim(1));
            std::copy(weights.value().begin(), weights.value().end(), m.data.begin());
            head_weights->push_back(std::move(m));
        }
        heads.push_back(matmul(tape, weights, vh));
    }
    return linear(tape, concat_channels(tape, heads), params.output);
}

}  // namespace atss::nd
