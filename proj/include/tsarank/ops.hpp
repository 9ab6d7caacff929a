#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tsarank/tensor.hpp"

// Differentiable operations. Each op computes its value eagerly and, when the
// graph is recording and some input requires grad, registers a backward rule.
// Every op throws Error(NonFinite) rather than return NaN or Inf.
namespace tsarank::ops {

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor transpose(Graph& g, const Tensor& a);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, double factor);
Tensor add_scalar(Graph& g, const Tensor& a, double value);
/// a[m x n] + bias[n] broadcast over rows.
Tensor add_row_bias(Graph& g, const Tensor& a, const Tensor& bias);

Tensor exp(Graph& g, const Tensor& a);
Tensor log(Graph& g, const Tensor& a);
/// tanh approximation of GELU.
Tensor gelu(Graph& g, const Tensor& a);

/// Normalizes each row of x[m x n], then applies gain[n] and bias[n].
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Log-probabilities along `axis`, computed with max subtraction.
Tensor log_softmax(Graph& g, const Tensor& logits, std::size_t axis);

/// Row-wise softmax of a square score matrix where row i only sees columns
/// 0..i. Masked entries are exactly zero.
Tensor causal_softmax(Graph& g, const Tensor& scores);

Tensor slice_rows(Graph& g, const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(Graph& g, const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(Graph& g, std::span<const Tensor> parts);
/// Rows of `table` at `ids`, as an ids.size() x table.cols() matrix.
Tensor gather_rows(Graph& g, const Tensor& table, std::span<const std::size_t> ids);
/// Picks a[rows[i], cols[i]] into a vector.
Tensor select(Graph& g, const Tensor& a, std::span<const std::size_t> rows, std::span<const std::size_t> cols);
/// Stacks scalars into a vector.
Tensor stack(Graph& g, std::span<const Tensor> scalars);
/// Element i of a vector as a scalar.
Tensor element(Graph& g, const Tensor& a, std::size_t index);

Tensor sum(Graph& g, const Tensor& a);
Tensor mean(Graph& g, const Tensor& a);

}  // namespace tsarank::ops
