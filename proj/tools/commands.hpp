#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "run_config.hpp"
#include "vnsa/analysis.hpp"
#include "vnsa/parallel.hpp"

namespace vnsa::cli {

/// Thread cap from VNSA_THREADS (default 1). Output never depends on it.
unsigned threads_from_env();

/// Writes q/k/v, W1/b1/W2/b2 and spans fixtures into config.fixture_dir.
void cmd_gen(const RunConfig& config, const ExecOptions& exec);

QkvBatch load_batch(const RunConfig& config);
ModalitySpans load_spans(const std::filesystem::path& dir, std::size_t seq_len);

struct AttendSummary {
  std::array<double, kNumBranches> gate_means{};
  BranchCounts counts;
  std::size_t vision_tokens = 0;
  std::size_t text_tokens = 0;
  double max_abs_dev_vs_dense = 0.0;
};

/// Hybrid layer over the fixtures; writes output.vnsa, dense.vnsa and
/// attend_summary.csv into config.output_dir.
AttendSummary cmd_attend(const RunConfig& config, const ExecOptions& exec);

/// Cost profile CSV (cost.csv). Returns nonzero when any measured count
/// differs from the closed form.
int cmd_bench(const RunConfig& config, std::span<const std::size_t> seq_lens,
              const ExecOptions& exec, std::ostream& out);

struct SinkSource {
  std::string name;
  SinkReport report;
};

/// One sink report per attention source (dense, cmp, slc, win), written as
/// sinks_<source>.csv plus sinks_summary.csv.
std::vector<SinkSource> cmd_sinks(const RunConfig& config, const ExecOptions& exec);

/// Gate statistics over the fixture queries, written as gate_stats.csv.
GateStats cmd_gates(const RunConfig& config, const ExecOptions& exec);

struct BudgetArgs {
  std::optional<std::uint64_t> blocks;
  std::optional<std::uint64_t> block_size;
  std::optional<std::uint64_t> window;
  std::optional<std::uint64_t> seq_len;
  std::optional<std::uint64_t> frames;
  std::optional<std::uint64_t> tokens_per_frame;
};

inline constexpr std::uint64_t kDefaultBudgetLength = 128000;

int cmd_budget(const RunConfig& config, const BudgetArgs& args, std::ostream& out);

/// Percent with four significant digits, e.g. 3.600.
std::string format_percent(double fraction);

}  // namespace vnsa::cli
