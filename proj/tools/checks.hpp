#pragma once

// Invariant checks shared by `vnsa check` and the acceptance runner. Each
// check records pass/fail entries into a Report; none of them throws on a
// failed expectation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vnsa/analysis.hpp"
#include "vnsa/error.hpp"
#include "vnsa/parallel.hpp"

namespace vnsa::checks {

/// Added to every numeric tolerance. A negative offset makes every
/// tolerance-based comparison fail, which is how the self-check proves it
/// can go red.
struct Tolerance {
  double offset = 0.0;
};

class Report {
 public:
  explicit Report(Tolerance tol = {}) : tol_(tol) {}

  void expect(bool ok, const std::string& what);
  /// Passes when err <= tol (+ offset). NaN fails.
  void within(double err, double tol, const std::string& what);
  void throws(ErrorKind kind, const std::function<void()>& fn, const std::string& what);

  std::size_t checks() const { return checks_; }
  std::size_t failures() const { return failures_.size(); }
  const std::vector<std::string>& failure_messages() const { return failures_; }
  bool passed() const { return failures_.empty(); }
  /// Largest error passed to within() so far.
  double worst() const { return worst_; }

 private:
  Tolerance tol_;
  std::size_t checks_ = 0;
  double worst_ = 0.0;
  std::vector<std::string> failures_;
};

// Seeded Q/K/V with entries in [-1, 1).
QkvBatch random_batch(std::uint64_t seed, const HeadLayout& layout, std::size_t seq_len);

// tensor-core
void softmax_properties(Report& r, std::uint64_t seed);
void reproducibility(Report& r);
void fixture_roundtrip(Report& r, std::uint64_t seed);
void quantile_oracle(Report& r, std::uint64_t seed);

// attention-dense
void dense_oracle(Report& r, std::uint64_t seed);
void gqa_degeneracy(Report& r, std::uint64_t seed);

// nsa-branches
void full_budget_equivalence(Report& r, std::uint64_t seed);
void branch_counters(Report& r, std::uint64_t seed);
void selection_structure(Report& r, std::uint64_t seed);
void constant_block_compression(Report& r);

struct ScalingResult {
  CostReport report;
  std::vector<double> score_ratios;
  std::vector<double> window_ratios;
};
/// Counts at L = 1024..8192 with s=64, n=32, w=256. Scoring ratios are
/// checked against [3.5, 4.5]; window ratios against their closed form.
ScalingResult selection_scaling(Report& r, const ExecOptions& exec = {});

// Perturbation trials per kernel (dense, cmp, slc, win, hybrid).
void causality_trials(Report& r, std::size_t trials, std::uint64_t seed);

// gating
void gate_forward_oracle(Report& r, std::uint64_t seed);
struct GradientStats {
  std::size_t instances = 0;
  std::size_t entries = 0;
  std::size_t failures = 0;
  std::size_t resampled = 0;
};
GradientStats gate_gradients(Report& r, std::size_t instances, std::uint64_t seed);
void gate_linearity_and_range(Report& r, std::uint64_t seed);
void hybrid_composition(Report& r, std::uint64_t seed);
void thread_invariance(Report& r, std::uint64_t seed);

// analysis
void budget_identity(Report& r);
void sink_fixtures(Report& r, std::size_t shuffles, std::uint64_t seed);
void alpha_range(Report& r, std::uint64_t seed);
void gate_stat_oracles(Report& r, std::size_t instances, std::uint64_t seed);
void inter_head_properties(Report& r, std::uint64_t seed);

// cli plumbing
void config_and_csv(Report& r);

}  // namespace vnsa::checks
