#include <gtest/gtest.h>

#include <cmath>

#include "checks.hpp"
#include "reference/reference.hpp"
#include "temp_dir.hpp"
#include "vnsa/error.hpp"
#include "vnsa/gating.hpp"

namespace vnsa {
namespace {

GateParams zero_params(std::size_t din, std::size_t dh, std::size_t heads) {
  return GateParams{Tensor({din, dh}), Tensor({dh}), Tensor({dh, 3 * heads}), Tensor({3 * heads})};
}

TEST(GateForward, ZeroWeightsGiveHalf) {
  const auto g = gate_forward(std::vector<float>{1, 2, 3}, zero_params(3, 4, 2));
  ASSERT_EQ(g.size(), 6u);
  for (double x : g) EXPECT_EQ(x, 0.5);
}

TEST(GateForward, SaturatedBias) {
  GateParams p = zero_params(3, 4, 1);
  p.b2[1] = 20.0f;
  const auto g = gate_forward(std::vector<float>{1, 2, 3}, p);
  EXPECT_NEAR(g[1], 1.0, 1e-6);
  EXPECT_LT(g[1], 1.0);
}

TEST(GateForward, MatchesOracle) {
  Rng64 rng(4);
  const GateParams p = GateParams::seeded(rng, 8, 8, 2);
  const Tensor x = seeded_uniform(rng, {8});
  const auto got = gate_forward(x.data(), p);
  std::vector<ref::Real> xr(x.data().begin(), x.data().end());
  const auto want = ref::gate_forward(xr, p.w1, p.b1, p.w2, p.b2);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], double(want[i]), 1e-6);
}

TEST(GateForward, DimensionMismatch) {
  EXPECT_THROW(gate_forward(std::vector<float>{1, 2}, zero_params(3, 4, 1)), Error);
}

TEST(GateBackward, ZeroUpstreamGivesZero) {
  Rng64 rng(6);
  const GateParams p = GateParams::seeded(rng, 5, 4, 2);
  const Tensor x = seeded_uniform(rng, {5});
  const GateGradients g = gate_backward(x.data(), p, std::vector<double>(6, 0.0));
  for (const auto* v : {&g.x, &g.w1, &g.b1, &g.w2, &g.b2})
    for (double e : *v) EXPECT_EQ(e, 0.0);
}

TEST(GateBackward, SaturatedGateHasTinyGradient) {
  GateParams p = zero_params(3, 2, 1);
  p.b2[0] = 25.0f;
  p.b1[0] = 1.0f;
  const GateGradients g = gate_backward(std::vector<float>{0.5f, -0.5f, 1.0f}, p, std::vector<double>{1, 0, 0});
  EXPECT_LT(std::abs(g.b2[0]), 1e-6);
  for (double e : g.w2) EXPECT_LT(std::abs(e), 1e-6);
}

TEST(GateBackward, FiniteDifferences) {
  checks::Report r;
  const auto stats = checks::gate_gradients(r, 20, 77);
  EXPECT_EQ(stats.instances, 20u);
  EXPECT_EQ(stats.failures, 0u);
  EXPECT_TRUE(r.passed());
}

TEST(GateValues, RangeChecks) {
  EXPECT_THROW(GateValues(1, 1, std::vector<double>{0.5, 1.5, 0.2}), Error);
  EXPECT_THROW(GateValues(1, 1, std::vector<double>{0.5, 0.2}), Error);
  EXPECT_FALSE(GateValues::constant(2, 2, {1.0, 0.0, 0.0}).strictly_open_unit());
  EXPECT_TRUE(GateValues::constant(2, 2, {0.2, 0.3, 0.4}).strictly_open_unit());
}

TEST(GateParams, SaveLoadRoundTrip) {
  testing::TempDir dir;
  Rng64 rng(1);
  const GateParams p = GateParams::seeded(rng, 4, 6, 2);
  p.save(dir.path());
  const GateParams q = GateParams::load(dir.path());
  EXPECT_EQ(p.w1, q.w1);
  EXPECT_EQ(p.b2, q.b2);
}

TEST(Fusion, SingleBranchGates) {
  const HeadLayout layout{2, 1, 4};
  const SparseConfig cfg{4, 2, 16};
  const QkvBatch b = checks::random_batch(12, layout, 16);
  const BranchOutputs br = run_branches(b, layout, cfg);
  EXPECT_EQ(nsa_attention(b, layout, cfg, GateValues::constant(16, 2, {1, 0, 0})), br.compression);
  EXPECT_EQ(nsa_attention(b, layout, cfg, GateValues::constant(16, 2, {0, 1, 0})), br.selection);
  const Tensor win = nsa_attention(b, layout, cfg, GateValues::constant(16, 2, {0, 0, 1}));
  const auto oracle = ref::dense_causal(b.q, b.k, b.v, 1);
  EXPECT_LE(double(ref::max_abs_diff(win.data(), oracle)), 1e-5);
}

TEST(Fusion, CompressionDiffersFromDenseAtFullBudget) {
  // Block means summarize keys, so equal thirds do not reproduce dense attention.
  const HeadLayout layout{2, 1, 4};
  const SparseConfig cfg{4, 4, 16};
  const QkvBatch b = checks::random_batch(12, layout, 16);
  const Tensor third = nsa_attention(b, layout, cfg, GateValues::constant(16, 2, {1.0 / 3, 1.0 / 3, 1.0 / 3}));
  const Tensor half = nsa_attention(b, layout, cfg, GateValues::constant(16, 2, {0.0, 0.5, 0.5}));
  const auto oracle = ref::dense_causal(b.q, b.k, b.v, 1);
  double third_err = 0.0, half_err = 0.0;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t pos = 3; pos < 16; pos += 4)
      for (std::size_t c = 0; c < 4; ++c) {
        const std::size_t i = (s * 16 + pos) * 4 + c;
        third_err = std::max(third_err, std::abs(double(third[i]) - double(oracle[i])));
        half_err = std::max(half_err, std::abs(double(half[i]) - double(oracle[i])));
      }
  EXPECT_LE(half_err, 1e-5);
  EXPECT_GT(third_err, 1e-5);
}

TEST(Spans, Validation) {
  EXPECT_NO_THROW(ModalitySpans::all(Modality::kVision, 5).validate(5));
  EXPECT_THROW((ModalitySpans{{{1, 3, Modality::kVision}}}.validate(5)), Error);
  EXPECT_THROW((ModalitySpans{{{1, 3, Modality::kVision}, {3, 5, Modality::kText}}}.validate(5)), Error);
  EXPECT_THROW((ModalitySpans{{{2, 5, Modality::kVision}}}.validate(5)), Error);
  const auto spans = ModalitySpans::from_vision(std::vector<std::pair<std::size_t, std::size_t>>{{3, 4}}, 6);
  EXPECT_EQ(spans.positions(Modality::kVision), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(spans.positions(Modality::kText), (std::vector<std::size_t>{0, 1, 4, 5}));
}

TEST(Hybrid, CountsTokensAndPropertySuites) {
  const HeadLayout layout{2, 1, 4};
  const QkvBatch b = checks::random_batch(3, layout, 12);
  const auto spans = ModalitySpans::from_vision(std::vector<std::pair<std::size_t, std::size_t>>{{1, 8}}, 12);
  const HybridResult res = run_hybrid_layer(b, layout, SparseConfig{4, 2, 4},
                                            GateValues::constant(12, 2, {0.2, 0.3, 0.5}), spans);
  EXPECT_EQ(res.vision_tokens, 8u);
  EXPECT_EQ(res.text_tokens, 4u);
  EXPECT_EQ(res.vision_counts, branch_op_counts(8, SparseConfig{4, 2, 4}));

  checks::Report r;
  checks::hybrid_composition(r, 5);
  checks::gate_linearity_and_range(r, 5);
  checks::gate_forward_oracle(r, 5);
  checks::thread_invariance(r, 5);
  EXPECT_TRUE(r.passed()) << (r.passed() ? "" : r.failure_messages().front());
}

}  // namespace
}  // namespace vnsa
