#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vnsa/parallel.hpp"
#include "vnsa/tensor.hpp"

namespace vnsa {

/// Query-head / KV-group layout for grouped-query attention.
struct HeadLayout {
  std::size_t heads = 1;      // h
  std::size_t kv_groups = 1;  // g
  std::size_t head_dim = 1;   // d_k

  void validate() const;
  std::size_t heads_per_group() const { return heads / kv_groups; }
};

/// Post-projection Q [h x L x d_k], K and V [g x L x d_k].
struct QkvBatch {
  Tensor q;
  Tensor k;
  Tensor v;

  std::size_t seq_len() const { return q.rank() == 3 ? q.dims()[1] : 0; }
  void validate(const HeadLayout& layout) const;
};

/// Group of 1-based query head `head`: ceil(head * g / h), also 1-based.
std::size_t gqa_group_of_head(std::size_t head, const HeadLayout& layout);

/// 0-based convenience wrapper used by the kernels.
inline std::size_t group_index(std::size_t head0, const HeadLayout& layout) {
  return gqa_group_of_head(head0 + 1, layout) - 1;
}

/// One attention row: probabilities over the key positions listed in `keys`.
struct AttentionRow {
  std::vector<float> output;
  std::vector<std::size_t> keys;
  std::vector<double> probs;
};

/// softmax(q . K[keys]^T / sqrt(d)) . V[keys] for an explicit ascending key
/// list over rows of `k`/`v` (each [N x d]). Empty `keys` gives a zero output.
AttentionRow attend_keys(std::span<const float> query, const Tensor& k, const Tensor& v,
                         std::size_t group, std::span<const std::size_t> keys);

/// Causal row for 0-based position `pos` of one query head.
AttentionRow dense_attention_row(const QkvBatch& batch, const HeadLayout& layout,
                                 std::size_t head, std::size_t pos);

/// Prefill causal GQA over the whole sequence, output [h x L x d_k].
Tensor dense_causal_attention(const QkvBatch& batch, const HeadLayout& layout,
                              const ExecOptions& opts = {});

/// [h x L x d_k] -> [L x h*d_k], row t = [o_t^(1); ...; o_t^(h)].
Tensor concat_heads(const Tensor& per_head);
Tensor concat_heads(std::span<const Tensor> heads);

/// Inverse of concat_heads.
Tensor split_heads(const Tensor& concatenated, std::size_t heads);

}  // namespace vnsa
