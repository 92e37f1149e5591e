#pragma once

#include "atss/nd/tensor.hpp"

#include <span>
#include <vector>

/// Differentiable primitives. Every op validates shapes, computes its output
/// eagerly, rejects non-finite results, and records a backward rule on
/// `tape` when the tape is recording and some input requires a gradient.
namespace atss::nd {

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// [m,n] -> [n,m]
Tensor transpose(Tape& tape, const Tensor& a);
/// Elementwise a + b, identical shapes.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
/// x[m,n] + bias[n] broadcast over rows.
Tensor add_row(Tape& tape, const Tensor& x, const Tensor& bias);
/// Elementwise a * b, identical shapes.
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor relu(Tape& tape, const Tensor& a);
/// Sum of all elements, as a scalar.
Tensor sum(Tape& tape, const Tensor& a);
/// Same data, new shape with equal element count.
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);

/// Row-wise softmax on [m,n], stabilised by subtracting each row's max.
Tensor softmax_rows(Tape& tape, const Tensor& x);

/// Per-row normalisation with population variance, then gamma * xhat + beta.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Column means of [T,d] -> [d].
Tensor mean_pool_rows(Tape& tape, const Tensor& x);

/// Stacks [m1,n] on top of [m2,n] -> [m1+m2,n].
Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b);
/// Concatenates along the last axis. All parts rank 1, or all rank 2 with
/// equal row counts.
Tensor concat_channels(Tape& tape, std::span<const Tensor> parts);
/// Columns [start, start+len) of [m,n].
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t start, std::size_t len);

/// Lower clamp applied to probabilities before taking logs.
inline constexpr double kLogClamp = 1e-12;

/// -y log p[1] - (1-y) log p[0] for a 2-class distribution `probs`. Throws
/// NumericError unless entries lie in [0,1] and sum to 1 within 1e-6.
Tensor cross_entropy(Tape& tape, const Tensor& probs, int label);

}  // namespace atss::nd
