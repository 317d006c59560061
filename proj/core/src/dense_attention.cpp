#include "vnsa/dense_attention.hpp"

#include <cmath>
#include <numeric>

#include "vnsa/error.hpp"

namespace vnsa {

void HeadLayout::validate() const {
  if (head_dim == 0) fail(ErrorKind::kValidation, "head_dim must be >= 1");
  if (kv_groups == 0 || kv_groups > heads) {
    fail(ErrorKind::kValidation, "kv_groups must satisfy 1 <= g <= h (g=" +
                                     std::to_string(kv_groups) + ", h=" + std::to_string(heads) + ")");
  }
  if (heads % kv_groups != 0) {
    fail(ErrorKind::kValidation, "heads (" + std::to_string(heads) +
                                     ") must be divisible by kv_groups (" +
                                     std::to_string(kv_groups) + ")");
  }
}

void QkvBatch::validate(const HeadLayout& layout) const {
  layout.validate();
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    fail(ErrorKind::kShape, "Q/K/V must be rank 3, got " + shape_to_string(q.dims()) + ", " +
                                shape_to_string(k.dims()) + ", " + shape_to_string(v.dims()));
  }
  const Shape want_q{layout.heads, q.dims()[1], layout.head_dim};
  const Shape want_kv{layout.kv_groups, q.dims()[1], layout.head_dim};
  if (q.dims() != want_q || k.dims() != want_kv || v.dims() != want_kv) {
    fail(ErrorKind::kShape, "batch shapes Q" + shape_to_string(q.dims()) + " K" +
                                shape_to_string(k.dims()) + " V" + shape_to_string(v.dims()) +
                                " inconsistent with layout h=" + std::to_string(layout.heads) +
                                " g=" + std::to_string(layout.kv_groups) +
                                " d_k=" + std::to_string(layout.head_dim));
  }
}

std::size_t gqa_group_of_head(std::size_t head, const HeadLayout& layout) {
  if (head < 1 || head > layout.heads) {
    fail(ErrorKind::kIndex, "query head " + std::to_string(head) + " outside [1, " +
                                std::to_string(layout.heads) + "]");
  }
  return (head * layout.kv_groups + layout.heads - 1) / layout.heads;
}

AttentionRow attend_keys(std::span<const float> query, const Tensor& k, const Tensor& v,
                         std::size_t group, std::span<const std::size_t> keys) {
  const std::size_t d = query.size();
  AttentionRow row;
  row.output.assign(d, 0.0f);
  if (keys.empty()) return row;

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> logits(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto key = k.row(group, keys[i]);
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(query[c]) * key[c];
    logits[i] = dot * scale;
  }
  row.probs = stable_softmax(logits);

  std::vector<double> acc(d, 0.0);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto value = v.row(group, keys[i]);
    const double p = row.probs[i];
    for (std::size_t c = 0; c < d; ++c) acc[c] += p * value[c];
  }
  for (std::size_t c = 0; c < d; ++c) row.output[c] = static_cast<float>(acc[c]);
  row.keys.assign(keys.begin(), keys.end());
  return row;
}

AttentionRow dense_attention_row(const QkvBatch& batch, const HeadLayout& layout,
                                 std::size_t head, std::size_t pos) {
  std::vector<std::size_t> keys(pos + 1);
  std::iota(keys.begin(), keys.end(), std::size_t{0});
  return attend_keys(batch.q.row(head, pos), batch.k, batch.v, group_index(head, layout), keys);
}

Tensor dense_causal_attention(const QkvBatch& batch, const HeadLayout& layout,
                              const ExecOptions& opts) {
  if (batch.seq_len() == 0) fail(ErrorKind::kEmptySequence, "empty sequence (L = 0)");
  batch.validate(layout);
  const std::size_t seq = batch.seq_len();
  Tensor out({layout.heads, seq, layout.head_dim});
  parallel_for(layout.heads * seq, opts, [&](std::size_t idx) {
    const std::size_t head = idx / seq;
    const std::size_t pos = idx % seq;
    const AttentionRow row = dense_attention_row(batch, layout, head, pos);
    std::copy(row.output.begin(), row.output.end(), out.row(head, pos).begin());
  });
  return out;
}

Tensor concat_heads(const Tensor& per_head) {
  if (per_head.rank() != 3) {
    fail(ErrorKind::kShape, "concat_heads expects [h x L x d], got " + shape_to_string(per_head.dims()));
  }
  const std::size_t h = per_head.dims()[0];
  const std::size_t seq = per_head.dims()[1];
  const std::size_t d = per_head.dims()[2];
  Tensor out({seq, h * d});
  for (std::size_t t = 0; t < seq; ++t) {
    for (std::size_t s = 0; s < h; ++s) {
      const auto src = per_head.row(s, t);
      std::copy(src.begin(), src.end(), out.row(t).begin() + static_cast<std::ptrdiff_t>(s * d));
    }
  }
  return out;
}

Tensor concat_heads(std::span<const Tensor> heads) {
  if (heads.empty()) fail(ErrorKind::kShape, "concat_heads needs at least one head");
  const Shape& first = heads.front().dims();
  if (first.size() != 2) {
    fail(ErrorKind::kShape, "per-head outputs must be [L x d], got " + shape_to_string(first));
  }
  std::vector<float> stacked;
  stacked.reserve(heads.size() * heads.front().size());
  for (const Tensor& h : heads) {
    if (h.dims() != first) {
      fail(ErrorKind::kShape, "head shape " + shape_to_string(h.dims()) + " differs from " +
                                  shape_to_string(first));
    }
    stacked.insert(stacked.end(), h.data().begin(), h.data().end());
  }
  return concat_heads(Tensor({heads.size(), first[0], first[1]}, std::move(stacked)));
}

Tensor split_heads(const Tensor& concatenated, std::size_t heads) {
  if (concatenated.rank() != 2 || heads == 0 || concatenated.dims()[1] % heads != 0) {
    fail(ErrorKind::kShape, "cannot split " + shape_to_string(concatenated.dims()) + " into " +
                                std::to_string(heads) + " heads");
  }
  const std::size_t seq = concatenated.dims()[0];
  const std::size_t d = concatenated.dims()[1] / heads;
  Tensor out({heads, seq, d});
  for (std::size_t t = 0; t < seq; ++t) {
    const auto src = concatenated.row(t);
    for (std::size_t s = 0; s < heads; ++s) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(s * d), d, out.row(s, t).begin());
    }
  }
  return out;
}

}  // namespace vnsa
