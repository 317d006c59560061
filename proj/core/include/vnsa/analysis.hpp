#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vnsa/dense_attention.hpp"
#include "vnsa/gating.hpp"
#include "vnsa/nsa_branches.hpp"

namespace vnsa {

// ---------------------------------------------------------------------------
// Budget arithmetic

/// Key-value pairs visible to one query: blocks * block_size + window.
std::uint64_t attention_budget(std::uint64_t blocks, std::uint64_t block_size, std::uint64_t window);

/// Fraction of the L(L-1)/2 causal edges that the budget touches:
/// 2 * K_attn / (L - 1). Requires L >= 2.
double attention_fraction(std::uint64_t blocks, std::uint64_t block_size, std::uint64_t window,
                          std::uint64_t seq_len);

/// Share of the budget spent on the local window, w / K_attn.
double local_ratio(std::uint64_t blocks, std::uint64_t block_size, std::uint64_t window);

/// Vision context length from tokens per frame and frame count.
std::uint64_t info_context_length(std::uint64_t tokens_per_frame, std::uint64_t frames);

// ---------------------------------------------------------------------------
// Order statistics

/// Linear interpolation between order statistics at position q * (N - 1),
/// zero-indexed over the sorted sample.
double quantile(std::span<const double> values, double q);

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
};
Quartiles quartiles(std::span<const double> values);

// ---------------------------------------------------------------------------
// Attention sinks

inline constexpr double kSinkAlphaThreshold = 0.1;
inline constexpr double kSinkIqrFactor = 2.0;

/// Per-token sink flags: alpha > 0.1 and ||v|| < median(||v||) - 2 IQR(||v||),
/// both strict, with the quartiles taken over the whole input population.
struct SinkReport {
  std::vector<double> alpha;
  std::vector<double> vnorm;
  std::vector<bool> is_sink;
  Quartiles vnorm_quartiles;
  double norm_threshold = 0.0;
  std::size_t sink_count = 0;

  std::size_t tokens() const { return alpha.size(); }
  double sink_ratio() const;
  std::vector<std::size_t> flagged() const;
  /// Sink counts over `bins` equal-width bins of relative position in [0, 1).
  std::vector<std::size_t> positional_histogram(std::size_t bins) const;
};

SinkReport detect_sinks(std::span<const double> alphas, std::span<const double> vnorms);

/// Mean attention received by each key. Row t lists the probabilities query t
/// assigns to keys 0 .. rows[t].size()-1, i.e. its visible prefix. Queries
/// that cannot see key k do not enter k's mean; an empty row is a query with
/// nothing visible.
std::vector<double> compute_alphas(const std::vector<std::vector<double>>& rows,
                                   std::size_t num_keys);

/// Sink ratio of several layers, one entry per report.
std::vector<double> per_layer_sink_ratios(std::span<const SinkReport> layers);

// ---------------------------------------------------------------------------
// Gate statistics

struct BranchGateStats {
  double mean = 0.0;
  double iqr = 0.0;
  std::optional<double> inter_head_corr;  // absent with fewer than 2 heads or tokens
};

struct GateStats {
  std::vector<std::array<BranchGateStats, kNumBranches>> layers;
};

GateStats gate_statistics(std::span<const GateValues> layers);

/// Mean Pearson correlation over tokens across all unordered head pairs for
/// one branch. A zero-variance head correlates 0 with every partner.
double inter_head_similarity(const GateValues& gates, Branch branch);

// ---------------------------------------------------------------------------
// Branch cost profile

struct CostRow {
  std::size_t seq_len = 0;
  std::string branch;
  std::uint64_t analytic = 0;
  std::uint64_t measured = 0;
  std::uint64_t wall_ns = 0;  // median over runs
};

struct CostReport {
  SparseConfig config;
  std::uint64_t selected_tokens = 0;  // S = n * s
  std::vector<CostRow> rows;
  std::string dominant_branch;        // largest analytic count at the largest L

  bool counts_match() const;
  const CostRow& row(std::size_t seq_len, const std::string& branch) const;
};

struct ProfileOptions {
  std::size_t runs = 5;
  std::uint64_t seed = 0;
  ExecOptions exec;
};

inline constexpr std::array<const char*, 4> kCostBranches = {"cmp", "slc_score", "slc_attend",
                                                             "win"};

CostReport profile_branches(std::span<const std::size_t> seq_lens, const SparseConfig& sparse,
                            const HeadLayout& layout, const ProfileOptions& opts = {});

// ---------------------------------------------------------------------------
// CSV reports

std::string sink_report_csv(const SinkReport& report);
std::string cost_report_csv(const CostReport& report);
std::string gate_stats_csv(const GateStats& stats);

using CsvTable = std::vector<std::vector<std::string>>;
/// Minimal reader for the unquoted CSV emitted above.
CsvTable parse_csv(const std::string& text);

std::string format_double(double v);

}  // namespace vnsa
