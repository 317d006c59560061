#include <algorithm>
#include <chrono>

#include "vnsa/analysis.hpp"
#include "vnsa/error.hpp"

namespace vnsa {
namespace {

using Clock = std::chrono::steady_clock;

template <typename Fn>
std::uint64_t time_ns(Fn&& fn) {
  const auto start = Clock::now();
  fn();
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count());
}

std::uint64_t median(std::vector<std::uint64_t> xs) {
  std::sort(xs.begin(), xs.end());
  return xs[xs.size() / 2];
}

}  // namespace

bool CostReport::counts_match() const {
  return std::all_of(rows.begin(), rows.end(),
                     [](const CostRow& r) { return r.analytic == r.measured; });
}

const CostRow& CostReport::row(std::size_t seq_len, const std::string& branch) const {
  for (const CostRow& r : rows) {
    if (r.seq_len == seq_len && r.branch == branch) return r;
  }
  fail(ErrorKind::kIndex, "no cost row for L=" + std::to_string(seq_len) + " branch " + branch);
}

CostReport profile_branches(std::span<const std::size_t> seq_lens, const SparseConfig& sparse,
                            const HeadLayout& layout, const ProfileOptions& opts) {
  sparse.validate();
  layout.validate();
  if (seq_lens.empty()) fail(ErrorKind::kValidation, "profile needs at least one context length");
  const std::size_t runs = std::max<std::size_t>(opts.runs, 1);

  CostReport report;
  report.config = sparse;
  report.selected_tokens = sparse.select_blocks * sparse.block_size;

  for (std::size_t seq : seq_lens) {
    if (seq < sparse.block_size) {
      fail(ErrorKind::kValidation, "context length " + std::to_string(seq) +
                                       " is shorter than block size " +
                                       std::to_string(sparse.block_size));
    }
    Rng64 rng(opts.seed);
    const QkvBatch batch{seeded_uniform(rng, {layout.heads, seq, layout.head_dim}),
                         seeded_uniform(rng, {layout.kv_groups, seq, layout.head_dim}),
                         seeded_uniform(rng, {layout.kv_groups, seq, layout.head_dim})};
    const BranchCounts analytic = branch_op_counts(seq, sparse);

    std::array<std::vector<std::uint64_t>, 4> wall;
    std::array<std::uint64_t, 4> measured{};
    for (std::size_t r = 0; r < runs; ++r) {
      CompressedKv compressed;
      PassResult cmp;
      SelectionResult sel;
      PassResult slc;
      PassResult win;
      wall[0].push_back(time_ns([&] {
        compressed = compress_blocks(batch.k, batch.v, sparse.block_size);
        cmp = compression_pass(batch, layout, compressed, opts.exec);
      }));
      wall[1].push_back(
          time_ns([&] { sel = select_blocks(batch, layout, sparse, compressed, opts.exec); }));
      wall[2].push_back(time_ns([&] { slc = selection_pass(batch, layout, sparse, sel, opts.exec); }));
      wall[3].push_back(time_ns([&] { win = window_pass(batch, layout, sparse, opts.exec); }));
      const std::array<std::uint64_t, 4> now{cmp.count, sel.scores_evaluated, slc.count, win.count};
      if (r == 0) {
        measured = now;
      } else if (now != measured) {
        fail(ErrorKind::kInternal, "branch counters changed between runs");
      }
    }
    const std::array<std::uint64_t, 4> expected{analytic.cmp_scores, analytic.slc_scores,
                                                analytic.slc_attended, analytic.win_attended};
    for (std::size_t b = 0; b < kCostBranches.size(); ++b) {
      report.rows.push_back(
          CostRow{seq, kCostBranches[b], expected[b], measured[b], median(wall[b])});
    }
  }

  const std::size_t largest = *std::max_element(seq_lens.begin(), seq_lens.end());
  std::uint64_t best = 0;
  for (const CostRow& r : report.rows) {
    if (r.seq_len == largest && (report.dominant_branch.empty() || r.analytic > best)) {
      best = r.analytic;
      report.dominant_branch = r.branch;
    }
  }
  return report;
}

}  // namespace vnsa
