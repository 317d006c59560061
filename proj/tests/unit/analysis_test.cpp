#include <gtest/gtest.h>

#include "checks.hpp"
#include "reference/reference.hpp"
#include "vnsa/analysis.hpp"
#include "vnsa/error.hpp"

namespace vnsa {
namespace {

TEST(Budget, Arithmetic) {
  EXPECT_EQ(attention_budget(32, 64, 256), 2304u);
  EXPECT_EQ(attention_budget(0, 64, 300), 300u);
  EXPECT_EQ(attention_budget(20, 64, 1024), 2304u);
  EXPECT_NEAR(attention_fraction(32, 64, 256, 128000), 0.0360, 0.0005);
  EXPECT_NEAR(attention_fraction(32, 64, 256, 36000), 2.0 * 2304 / 35999, 1e-12);
  EXPECT_NEAR(attention_fraction(32, 64, 256, 36000), 0.1280, 0.00005);
  EXPECT_DOUBLE_EQ(attention_fraction(0, 1, 50, 101), 1.0);
  EXPECT_DOUBLE_EQ(local_ratio(32, 64, 256), 256.0 / 2304.0);
  EXPECT_EQ(info_context_length(64, 512), 32768u);
  EXPECT_EQ(info_context_length(1, 77), 77u);
  EXPECT_EQ(info_context_length(128, 512), 65536u);
  EXPECT_THROW(attention_fraction(1, 1, 1, 1), Error);
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> xs{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  EXPECT_NEAR(quantile(xs, 0.25), 0.325, 1e-12);
  EXPECT_NEAR(quantile(xs, 0.75), 0.775, 1e-12);
  EXPECT_NEAR(quantile(xs, 0.5), 0.55, 1e-12);
  EXPECT_THROW(quantile(std::vector<double>{}, 0.5), Error);
}

TEST(Sinks, TenTokenFixture) {
  std::vector<double> norms(9, 10.0);
  norms.push_back(0.1);
  const std::vector<double> alphas(10, 0.2);
  EXPECT_DOUBLE_EQ(double(ref::order_statistic_quantile(norms, 0.25)), 10.0);
  EXPECT_DOUBLE_EQ(double(ref::order_statistic_quantile(norms, 0.75)), 10.0);
  const SinkReport rep = detect_sinks(alphas, norms);
  EXPECT_EQ(rep.sink_count, 1u);
  EXPECT_EQ(rep.flagged(), std::vector<std::size_t>{9});
  EXPECT_DOUBLE_EQ(rep.sink_ratio(), 0.1);
  EXPECT_DOUBLE_EQ(rep.norm_threshold, 10.0);
}

TEST(Sinks, DegenerateCases) {
  EXPECT_EQ(detect_sinks(std::vector<double>(5, 0.9), std::vector<double>(5, 2.0)).sink_count, 0u);
  EXPECT_EQ(detect_sinks(std::vector<double>{0.1, 0.05, 0.0}, std::vector<double>{0.0, 5.0, 9.0}).sink_count, 0u);
  EXPECT_THROW(detect_sinks(std::vector<double>{0.1}, std::vector<double>{1.0, 2.0}), Error);
}

TEST(Sinks, PositionalHistogram) {
  std::vector<double> norms(9, 10.0);
  norms.insert(norms.begin(), 0.1);
  const SinkReport rep = detect_sinks(std::vector<double>(10, 0.2), norms);
  const auto hist = rep.positional_histogram(5);
  EXPECT_EQ(hist, (std::vector<std::size_t>{1, 0, 0, 0, 0}));
}

TEST(Alphas, Examples) {
  EXPECT_EQ(compute_alphas({{1.0}}, 1), std::vector<double>{1.0});
  const auto a = compute_alphas({{1.0}, {0.5, 0.5}, {1.0 / 3, 1.0 / 3, 1.0 / 3}}, 3);
  EXPECT_NEAR(a[0], 0.6111, 1e-4);
  EXPECT_NEAR(a[1], 0.4167, 1e-4);
  EXPECT_NEAR(a[2], 0.3333, 1e-4);
  const auto recent = compute_alphas({{1.0}, {0.0, 1.0}, {0.0, 0.0, 1.0}}, 3);
  EXPECT_DOUBLE_EQ(recent[0], 1.0 / 3);
  EXPECT_DOUBLE_EQ(recent[1], 0.5);
  EXPECT_DOUBLE_EQ(recent[2], 1.0);
  EXPECT_THROW(compute_alphas({{0.5}}, 1), Error);
}

TEST(GateStats, Examples) {
  const GateValues half = GateValues::constant(6, 3, {0.5, 0.5, 0.5});
  const GateStats s = gate_statistics(std::span<const GateValues>(&half, 1));
  EXPECT_DOUBLE_EQ(s.layers[0][0].mean, 0.5);
  EXPECT_DOUBLE_EQ(s.layers[0][0].iqr, 0.0);
  EXPECT_EQ(s.layers[0][0].inter_head_corr.value(), 0.0);

  std::vector<double> ramp, shuffled;
  for (int i = 1; i <= 10; ++i) ramp.insert(ramp.end(), {0.1 * i, 0.1 * i, 0.1 * i});
  for (int i : {4, 9, 1, 7, 2, 10, 3, 6, 8, 5}) shuffled.insert(shuffled.end(), {0.1 * i, 0.1 * i, 0.1 * i});
  const GateValues a(10, 1, ramp), b(10, 1, shuffled);
  const GateStats sa = gate_statistics(std::span<const GateValues>(&a, 1));
  const GateStats sb = gate_statistics(std::span<const GateValues>(&b, 1));
  EXPECT_NEAR(sa.layers[0][1].mean, 0.55, 1e-12);
  EXPECT_NEAR(sa.layers[0][1].iqr, 0.45, 1e-12);
  EXPECT_FALSE(sa.layers[0][1].inter_head_corr.has_value());
  EXPECT_DOUBLE_EQ(sa.layers[0][1].mean, sb.layers[0][1].mean);
  EXPECT_DOUBLE_EQ(sa.layers[0][1].iqr, sb.layers[0][1].iqr);
}

TEST(InterHead, NegatedHeadsCorrelateMinusOne) {
  std::vector<double> data;
  for (int t = 0; t < 8; ++t) {
    const double v = 0.2 + 0.05 * t;
    data.insert(data.end(), {v, v, v, 1.0 - v, 1.0 - v, 1.0 - v});
  }
  EXPECT_NEAR(inter_head_similarity(GateValues(8, 2, data), Branch::kCompression), -1.0, 1e-12);
  EXPECT_THROW(inter_head_similarity(GateValues::constant(1, 2, {0.5, 0.5, 0.5}), Branch::kWindow), Error);
}

TEST(Profile, CountsAndDominance) {
  const CostReport rep = profile_branches(std::vector<std::size_t>{64, 128}, SparseConfig{16, 2, 32},
                                          HeadLayout{2, 1, 4}, ProfileOptions{2, 0, {}});
  EXPECT_TRUE(rep.counts_match());
  EXPECT_EQ(rep.rows.size(), 8u);
  EXPECT_EQ(rep.selected_tokens, 32u);
  EXPECT_EQ(rep.row(128, "slc_score").analytic, branch_op_counts(128, SparseConfig{16, 2, 32}).slc_scores);
  EXPECT_THROW(profile_branches(std::vector<std::size_t>{8}, SparseConfig{16, 2, 32}, HeadLayout{2, 1, 4}), Error);
}

TEST(Csv, RoundTrip) {
  const CostReport rep = profile_branches(std::vector<std::size_t>{32}, SparseConfig{16, 2, 32},
                                          HeadLayout{2, 1, 4}, ProfileOptions{1, 0, {}});
  const CsvTable t = parse_csv(cost_report_csv(rep));
  ASSERT_EQ(t.size(), 5u);
  EXPECT_EQ(t[0], (std::vector<std::string>{"L", "branch", "analytic_count", "measured_count", "wall_ns"}));
  EXPECT_EQ(t[1][0], "32");
  EXPECT_EQ(std::stoull(t[1][2]), rep.rows[0].analytic);
}

TEST(AnalysisChecks, PropertySuites) {
  checks::Report r;
  checks::budget_identity(r);
  checks::sink_fixtures(r, 20, 3);
  checks::alpha_range(r, 3);
  checks::gate_stat_oracles(r, 10, 3);
  checks::inter_head_properties(r, 3);
  checks::quantile_oracle(r, 3);
  EXPECT_TRUE(r.passed()) << (r.passed() ? "" : r.failure_messages().front());
}

}  // namespace
}  // namespace vnsa
