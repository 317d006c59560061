#pragma once

// Naive long-double reference implementations. They share no code path with
// vnsa_core kernels and exist only to check them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vnsa/tensor.hpp"

namespace vnsa::ref {

using Real = long double;

std::vector<Real> softmax(std::span<const Real> logits);

/// Row-major [m x n] product of float inputs, long-double accumulation.
std::vector<Real> matmul(const Tensor& a, const Tensor& b);

/// Group of 0-based head `head0` computed as head0 / (h / g).
std::size_t group_of(std::size_t head0, std::size_t heads, std::size_t groups);

/// Attention of `q_head` at 0-based position `pos` over the keys for which
/// `keep(key)` holds. Empty support returns zeros.
std::vector<Real> masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   std::size_t head, std::size_t pos, std::size_t groups,
                                   const std::function<bool(std::size_t)>& keep);

/// Plain causal GQA over every head and position, [h][L][d] flattened.
std::vector<Real> dense_causal(const Tensor& q, const Tensor& k, const Tensor& v,
                               std::size_t groups);

/// Attention of one query vector over explicit key/value rows.
std::vector<Real> attend_rows(std::span<const float> query,
                              const std::vector<std::vector<Real>>& keys,
                              const std::vector<std::vector<Real>>& values);

/// Mean of rows [first, first + count) of one group of a [g x L x d] tensor.
std::vector<Real> block_mean(const Tensor& t, std::size_t group, std::size_t first,
                             std::size_t count);

/// relu / sigmoid two-layer MLP in long double, output [head][branch].
std::vector<Real> gate_forward(std::span<const Real> x, const Tensor& w1, const Tensor& b1,
                               const Tensor& w2, const Tensor& b2);
std::vector<Real> gate_forward(std::span<const Real> x, std::span<const Real> w1,
                               std::span<const Real> b1, std::span<const Real> w2,
                               std::span<const Real> b2, std::size_t din, std::size_t dh,
                               std::size_t dout);

/// Quantile by explicit order statistics (rank counting, O(N^2)), linear
/// interpolation at q * (N - 1).
Real order_statistic_quantile(std::span<const double> values, Real q);

Real mean(std::span<const double> values);
/// Pearson correlation, 0 when either series is constant.
Real pearson(std::span<const double> a, std::span<const double> b);

Real max_abs_diff(std::span<const float> a, std::span<const Real> b);

}  // namespace vnsa::ref
