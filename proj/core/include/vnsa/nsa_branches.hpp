#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vnsa/dense_attention.hpp"
#include "vnsa/parallel.hpp"
#include "vnsa/tensor.hpp"

namespace vnsa {

/// Block size s (compression block length = stride = selection block size),
/// number of selected blocks n, and sliding-window width w.
struct SparseConfig {
  std::size_t block_size = 64;
  std::size_t select_blocks = 32;
  std::size_t window = 256;

  void validate() const;
};

/// Non-overlapping block means of K and V. Block i (0-based) covers token
/// positions [i*s, (i+1)*s) and becomes visible to the query at 0-based
/// position pos once (i+1)*s <= pos+1. A trailing partial block is dropped.
struct CompressedKv {
  Tensor keys;    // [g x B x d_k], empty when B == 0
  Tensor values;  // [g x B x d_k]
  std::size_t num_blocks = 0;
  std::size_t block_size = 0;
  std::vector<std::size_t> block_end;  // 1-based last source position, (i+1)*s

  std::size_t visible_blocks(std::size_t pos) const;
};

CompressedKv compress_blocks(const Tensor& k, const Tensor& v, std::size_t block_size);

/// Attention of one query over the compressed blocks visible at `pos`.
/// Keys of the returned row are block indices; with no visible block the
/// output is zero and probs are empty.
AttentionRow compression_attention(std::span<const float> query, const CompressedKv& compressed,
                                   std::size_t group, std::size_t pos);

/// Per-group block scores: the sum, over the query heads of each group, of
/// their compression probabilities. `probs_per_head[s]` belongs to 0-based
/// head s. Heads of one group must see the same number of blocks.
std::vector<std::vector<double>> importance_scores(
    std::span<const std::vector<double>> probs_per_head, const HeadLayout& layout);

/// The n highest-scoring block indices (ties to the lower index), ascending.
std::vector<std::size_t> select_top_blocks(std::span<const double> scores, std::size_t n);

/// Token-granular attention restricted to the union of the selected blocks.
AttentionRow selection_attention(std::span<const float> query, const Tensor& k, const Tensor& v,
                                 std::size_t group, std::span<const std::size_t> selected,
                                 std::size_t block_size, std::size_t pos);

/// Attention over positions max(0, pos-w+1) .. pos. w == 0 yields zero.
AttentionRow sliding_window_attention(std::span<const float> query, const Tensor& k,
                                      const Tensor& v, std::size_t group, std::size_t window,
                                      std::size_t pos);

/// Per-query-stream operation counts. A stream is one query head for the
/// attention counters and one KV group for selection scoring; every stream
/// of a batch does identical work, so batch counters are normalized to one.
struct BranchCounts {
  std::uint64_t cmp_scores = 0;    // compressed keys scored
  std::uint64_t slc_scores = 0;    // block importance scores evaluated
  std::uint64_t slc_attended = 0;  // token keys attended by selection
  std::uint64_t win_attended = 0;  // token keys attended by the window

  friend bool operator==(const BranchCounts&, const BranchCounts&) = default;
};

/// Closed-form counts for a sequence of length L.
BranchCounts branch_op_counts(std::size_t seq_len, const SparseConfig& config);

/// Selected blocks and their scores for every (group, position).
struct SelectionResult {
  std::size_t groups = 0;
  std::size_t seq_len = 0;
  std::vector<std::vector<std::size_t>> indices;  // [group * L + pos]
  std::vector<std::vector<double>> scores;        // [group * L + pos]
  std::uint64_t scores_evaluated = 0;             // per group stream

  const std::vector<std::size_t>& at(std::size_t group, std::size_t pos) const {
    return indices[group * seq_len + pos];
  }
};

struct PassResult {
  Tensor output;              // [h x L x d_k]
  std::uint64_t count = 0;    // per head stream
};

PassResult compression_pass(const QkvBatch& batch, const HeadLayout& layout,
                            const CompressedKv& compressed, const ExecOptions& opts = {});
SelectionResult select_blocks(const QkvBatch& batch, const HeadLayout& layout,
                              const SparseConfig& config, const CompressedKv& compressed,
                              const ExecOptions& opts = {});
PassResult selection_pass(const QkvBatch& batch, const HeadLayout& layout,
                          const SparseConfig& config, const SelectionResult& selection,
                          const ExecOptions& opts = {});
PassResult window_pass(const QkvBatch& batch, const HeadLayout& layout,
                       const SparseConfig& config, const ExecOptions& opts = {});

struct BranchOutputs {
  Tensor compression;  // [h x L x d_k]
  Tensor selection;
  Tensor window;
  SelectionResult selected;
  BranchCounts counts;
};

/// All three branches in one sweep over (group, position); compression
/// probabilities are reused as the selection scores.
BranchOutputs run_branches(const QkvBatch& batch, const HeadLayout& layout,
                           const SparseConfig& config, const ExecOptions& opts = {});

}  // namespace vnsa
