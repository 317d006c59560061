#include "vnsa/nsa_branches.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vnsa/error.hpp"

namespace vnsa {

void SparseConfig::validate() const {
  if (block_size == 0) fail(ErrorKind::kValidation, "block_size must be >= 1");
}

std::size_t CompressedKv::visible_blocks(std::size_t pos) const {
  if (block_size == 0) return 0;
  return std::min(num_blocks, (pos + 1) / block_size);
}

CompressedKv compress_blocks(const Tensor& k, const Tensor& v, std::size_t block_size) {
  if (block_size == 0) fail(ErrorKind::kValidation, "block_size must be >= 1");
  if (k.rank() != 3 || k.dims() != v.dims()) {
    fail(ErrorKind::kShape, "compress_blocks expects matching [g x L x d] K/V, got " +
                                shape_to_string(k.dims()) + " and " + shape_to_string(v.dims()));
  }
  const std::size_t groups = k.dims()[0];
  const std::size_t seq = k.dims()[1];
  const std::size_t d = k.dims()[2];

  CompressedKv out;
  out.block_size = block_size;
  out.num_blocks = seq / block_size;
  for (std::size_t i = 0; i < out.num_blocks; ++i) out.block_end.push_back((i + 1) * block_size);
  if (out.num_blocks == 0) return out;

  out.keys = Tensor({groups, out.num_blocks, d});
  out.values = Tensor({groups, out.num_blocks, d});
  std::vector<double> acc_k(d), acc_v(d);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t b = 0; b < out.num_blocks; ++b) {
      std::fill(acc_k.begin(), acc_k.end(), 0.0);
      std::fill(acc_v.begin(), acc_v.end(), 0.0);
      for (std::size_t p = b * block_size; p < (b + 1) * block_size; ++p) {
        const auto kr = k.row(g, p);
        const auto vr = v.row(g, p);
        for (std::size_t c = 0; c < d; ++c) {
          acc_k[c] += kr[c];
          acc_v[c] += vr[c];
        }
      }
      auto ko = out.keys.row(g, b);
      auto vo = out.values.row(g, b);
      for (std::size_t c = 0; c < d; ++c) {
        ko[c] = static_cast<float>(acc_k[c] / static_cast<double>(block_size));
        vo[c] = static_cast<float>(acc_v[c] / static_cast<double>(block_size));
      }
    }
  }
  return out;
}

AttentionRow compression_attention(std::span<const float> query, const CompressedKv& compressed,
                                   std::size_t group, std::size_t pos) {
  std::vector<std::size_t> blocks(compressed.visible_blocks(pos));
  std::iota(blocks.begin(), blocks.end(), std::size_t{0});
  if (blocks.empty()) {
    AttentionRow row;
    row.output.assign(query.size(), 0.0f);
    return row;
  }
  return attend_keys(query, compressed.keys, compressed.values, group, blocks);
}

std::vector<std::vector<double>> importance_scores(
    std::span<const std::vector<double>> probs_per_head, const HeadLayout& layout) {
  if (probs_per_head.size() != layout.heads) {
    fail(ErrorKind::kShape, "importance_scores expects " + std::to_string(layout.heads) +
                                " heads, got " + std::to_string(probs_per_head.size()));
  }
  std::vector<std::vector<double>> scores(layout.kv_groups);
  std::vector<bool> seen(layout.kv_groups, false);
  for (std::size_t s = 0; s < layout.heads; ++s) {
    const std::size_t g = group_index(s, layout);
    const auto& probs = probs_per_head[s];
    if (!seen[g]) {
      scores[g].assign(probs.size(), 0.0);
      seen[g] = true;
    } else if (scores[g].size() != probs.size()) {
      fail(ErrorKind::kInternal, "heads of group " + std::to_string(g + 1) +
                                     " disagree on visible blocks");
    }
    for (std::size_t i = 0; i < probs.size(); ++i) scores[g][i] += probs[i];
  }
  return scores;
}

std::vector<std::size_t> select_top_blocks(std::span<const double> scores, std::size_t n) {
  for (double x : scores) {
    if (!std::isfinite(x) || x < 0.0) {
      fail(ErrorKind::kDomain, "importance scores must be finite and nonnegative");
    }
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t keep = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

AttentionRow selection_attention(std::span<const float> query, const Tensor& k, const Tensor& v,
                                 std::size_t group, std::span<const std::size_t> selected,
                                 std::size_t block_size, std::size_t pos) {
  std::vector<std::size_t> keys;
  keys.reserve(selected.size() * block_size);
  std::size_t prev_end = 0;
  for (std::size_t b : selected) {
    const std::size_t end = (b + 1) * block_size;
    if (end > pos + 1) {
      fail(ErrorKind::kValidation, "selected block " + std::to_string(b) +
                                       " is not causally visible at position " +
                                       std::to_string(pos));
    }
    if (end <= prev_end) fail(ErrorKind::kValidation, "selected blocks must be ascending and unique");
    prev_end = end;
    for (std::size_t p = b * block_size; p < end; ++p) keys.push_back(p);
  }
  return attend_keys(query, k, v, group, keys);
}

AttentionRow sliding_window_attention(std::span<const float> query, const Tensor& k,
                                      const Tensor& v, std::size_t group, std::size_t window,
                                      std::size_t pos) {
  const std::size_t width = std::min(window, pos + 1);
  std::vector<std::size_t> keys(width);
  std::iota(keys.begin(), keys.end(), pos + 1 - width);
  return attend_keys(query, k, v, group, keys);
}

BranchCounts branch_op_counts(std::size_t seq_len, const SparseConfig& config) {
  config.validate();
  BranchCounts c;
  const std::uint64_t s = config.block_size;
  const std::uint64_t n = config.select_blocks;
  const std::uint64_t w = config.window;
  for (std::uint64_t t = 1; t <= seq_len; ++t) {
    const std::uint64_t blocks = t / s;
    c.cmp_scores += blocks;
    c.slc_attended += s * std::min(n, blocks);
    c.win_attended += std::min(w, t);
  }
  c.slc_scores = c.cmp_scores;
  return c;
}

namespace {

void check_inputs(const QkvBatch& batch, const HeadLayout& layout, const SparseConfig& config) {
  if (batch.seq_len() == 0) fail(ErrorKind::kEmptySequence, "empty sequence (L = 0)");
  batch.validate(layout);
  config.validate();
}

std::uint64_t per_stream(std::uint64_t total, std::size_t streams) {
  if (total % streams != 0) {
    fail(ErrorKind::kInternal, "branch counters differ across streams");
  }
  return total / streams;
}

void store(Tensor& out, std::size_t head, std::size_t pos, const AttentionRow& row) {
  std::copy(row.output.begin(), row.output.end(), out.row(head, pos).begin());
}

}  // namespace

PassResult compression_pass(const QkvBatch& batch, const HeadLayout& layout,
                            const CompressedKv& compressed, const ExecOptions& opts) {
  if (batch.seq_len() == 0) fail(ErrorKind::kEmptySequence, "empty sequence (L = 0)");
  batch.validate(layout);
  const std::size_t seq = batch.seq_len();
  PassResult res{Tensor({layout.heads, seq, layout.head_dim}), 0};
  std::vector<std::uint64_t> counts(layout.heads * seq, 0);
  parallel_for(layout.heads * seq, opts, [&](std::size_t idx) {
    const std::size_t head = idx / seq;
    const std::size_t pos = idx % seq;
    const AttentionRow row =
        compression_attention(batch.q.row(head, pos), compressed, group_index(head, layout), pos);
    counts[idx] = row.keys.size();
    store(res.output, head, pos, row);
  });
  res.count = per_stream(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}),
                         layout.heads);
  return res;
}

SelectionResult select_blocks(const QkvBatch& batch, const HeadLayout& layout,
                              const SparseConfig& config, const CompressedKv& compressed,
                              const ExecOptions& opts) {
  check_inputs(batch, layout, config);
  const std::size_t seq = batch.seq_len();
  const std::size_t per_group = layout.heads_per_group();
  SelectionResult sel;
  sel.groups = layout.kv_groups;
  sel.seq_len = seq;
  sel.indices.resize(layout.kv_groups * seq);
  sel.scores.resize(layout.kv_groups * seq);
  parallel_for(layout.kv_groups * seq, opts, [&](std::size_t idx) {
    const std::size_t g = idx / seq;
    const std::size_t pos = idx % seq;
    std::vector<double> score;
    for (std::size_t j = 0; j < per_group; ++j) {
      const std::size_t head = g * per_group + j;
      const AttentionRow row = compression_attention(batch.q.row(head, pos), compressed, g, pos);
      if (score.empty()) score.assign(row.probs.size(), 0.0);
      for (std::size_t i = 0; i < row.probs.size(); ++i) score[i] += row.probs[i];
    }
    sel.indices[idx] = select_top_blocks(score, config.select_blocks);
    sel.scores[idx] = std::move(score);
  });
  std::uint64_t total = 0;
  for (const auto& s : sel.scores) total += s.size();
  sel.scores_evaluated = per_stream(total, layout.kv_groups);
  return sel;
}

PassResult selection_pass(const QkvBatch& batch, const HeadLayout& layout,
                          const SparseConfig& config, const SelectionResult& selection,
                          const ExecOptions& opts) {
  check_inputs(batch, layout, config);
  const std::size_t seq = batch.seq_len();
  if (selection.seq_len != seq || selection.groups != layout.kv_groups) {
    fail(ErrorKind::kShape, "selection result does not match the batch");
  }
  PassResult res{Tensor({layout.heads, seq, layout.head_dim}), 0};
  std::vector<std::uint64_t> counts(layout.heads * seq, 0);
  parallel_for(layout.heads * seq, opts, [&](std::size_t idx) {
    const std::size_t head = idx / seq;
    const std::size_t pos = idx % seq;
    const std::size_t g = group_index(head, layout);
    const AttentionRow row = selection_attention(batch.q.row(head, pos), batch.k, batch.v, g,
                                                 selection.at(g, pos), config.block_size, pos);
    counts[idx] = row.keys.size();
    store(res.output, head, pos, row);
  });
  res.count = per_stream(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}),
                         layout.heads);
  return res;
}

PassResult window_pass(const QkvBatch& batch, const HeadLayout& layout,
                       const SparseConfig& config, const ExecOptions& opts) {
  check_inputs(batch, layout, config);
  const std::size_t seq = batch.seq_len();
  PassResult res{Tensor({layout.heads, seq, layout.head_dim}), 0};
  std::vector<std::uint64_t> counts(layout.heads * seq, 0);
  parallel_for(layout.heads * seq, opts, [&](std::size_t idx) {
    const std::size_t head = idx / seq;
    const std::size_t pos = idx % seq;
    const AttentionRow row = sliding_window_attention(
        batch.q.row(head, pos), batch.k, batch.v, group_index(head, layout), config.window, pos);
    counts[idx] = row.keys.size();
    store(res.output, head, pos, row);
  });
  res.count = per_stream(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}),
                         layout.heads);
  return res;
}

BranchOutputs run_branches(const QkvBatch& batch, const HeadLayout& layout,
                           const SparseConfig& config, const ExecOptions& opts) {
  check_inputs(batch, layout, config);
  const std::size_t seq = batch.seq_len();
  const std::size_t per_group = layout.heads_per_group();
  const CompressedKv compressed = compress_blocks(batch.k, batch.v, config.block_size);

  BranchOutputs out;
  const Shape shape{layout.heads, seq, layout.head_dim};
  out.compression = Tensor(shape);
  out.selection = Tensor(shape);
  out.window = Tensor(shape);
  out.selected.groups = layout.kv_groups;
  out.selected.seq_len = seq;
  out.selected.indices.resize(layout.kv_groups * seq);
  out.selected.scores.resize(layout.kv_groups * seq);

  // Per (group, position): [cmp, slc_scores, slc_attended, win] summed over the group's heads.
  std::vector<BranchCounts> counts(layout.kv_groups * seq);
  parallel_for(layout.kv_groups * seq, opts, [&](std::size_t idx) {
    const std::size_t g = idx / seq;
    const std::size_t pos = idx % seq;
    BranchCounts& c = counts[idx];
    std::vector<double> score;
    for (std::size_t j = 0; j < per_group; ++j) {
      const std::size_t head = g * per_group + j;
      const AttentionRow row = compression_attention(batch.q.row(head, pos), compressed, g, pos);
      c.cmp_scores += row.keys.size();
      if (score.empty()) score.assign(row.probs.size(), 0.0);
      for (std::size_t i = 0; i < row.probs.size(); ++i) score[i] += row.probs[i];
      store(out.compression, head, pos, row);
    }
    c.slc_scores = score.size();
    auto selected = select_top_blocks(score, config.select_blocks);
    for (std::size_t j = 0; j < per_group; ++j) {
      const std::size_t head = g * per_group + j;
      const auto q = batch.q.row(head, pos);
      const AttentionRow slc =
          selection_attention(q, batch.k, batch.v, g, selected, config.block_size, pos);
      c.slc_attended += slc.keys.size();
      store(out.selection, head, pos, slc);
      const AttentionRow win = sliding_window_attention(q, batch.k, batch.v, g, config.window, pos);
      c.win_attended += win.keys.size();
      store(out.window, head, pos, win);
    }
    out.selected.indices[idx] = std::move(selected);
    out.selected.scores[idx] = std::move(score);
  });

  BranchCounts total;
  for (const auto& c : counts) {
    total.cmp_scores += c.cmp_scores;
    total.slc_scores += c.slc_scores;
    total.slc_attended += c.slc_attended;
    total.win_attended += c.win_attended;
  }
  out.counts.cmp_scores = per_stream(total.cmp_scores, layout.heads);
  out.counts.slc_scores = per_stream(total.slc_scores, layout.kv_groups);
  out.counts.slc_attended = per_stream(total.slc_attended, layout.heads);
  out.counts.win_attended = per_stream(total.win_attended, layout.heads);
  out.selected.scores_evaluated = out.counts.slc_scores;
  return out;
}

}  // namespace vnsa
