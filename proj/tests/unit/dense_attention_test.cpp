#include <gtest/gtest.h>

#include "checks.hpp"
#include "reference/reference.hpp"
#include "vnsa/dense_attention.hpp"
#include "vnsa/error.hpp"

namespace vnsa {
namespace {

TEST(GroupMap, TrainingLayout) {
  const HeadLayout layout{28, 4, 128};
  EXPECT_EQ(gqa_group_of_head(1, layout), 1u);
  EXPECT_EQ(gqa_group_of_head(7, layout), 1u);
  EXPECT_EQ(gqa_group_of_head(8, layout), 2u);
  EXPECT_EQ(gqa_group_of_head(28, layout), 4u);
}

TEST(GroupMap, IdentityWhenGroupsEqualHeads) {
  const HeadLayout layout{6, 6, 4};
  for (std::size_t s = 1; s <= 6; ++s) EXPECT_EQ(gqa_group_of_head(s, layout), s);
}

TEST(GroupMap, RejectsOutOfRangeHead) {
  const HeadLayout layout{4, 2, 4};
  EXPECT_THROW(gqa_group_of_head(0, layout), Error);
  EXPECT_THROW(gqa_group_of_head(5, layout), Error);
}

TEST(Layout, RejectsIndivisibleHeads) {
  EXPECT_THROW((HeadLayout{6, 4, 8}.validate()), Error);
  EXPECT_THROW((HeadLayout{4, 0, 8}.validate()), Error);
}

TEST(DenseAttention, SingleTokenReturnsValueRow) {
  const HeadLayout layout{2, 1, 3};
  const QkvBatch b = checks::random_batch(1, layout, 1);
  const Tensor out = dense_causal_attention(b, layout);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(s, 0, c), b.v.at(0, 0, c));
}

TEST(DenseAttention, EqualKeysAverageValues) {
  const HeadLayout layout{1, 1, 2};
  QkvBatch b{Tensor({1, 2, 2}, {0.3f, -0.7f, 1.0f, 2.0f}), Tensor({1, 2, 2}, {0.5f, 0.5f, 0.5f, 0.5f}),
             Tensor({1, 2, 2}, {1.0f, 3.0f, 2.0f, 5.0f})};
  const Tensor out = dense_causal_attention(b, layout);
  EXPECT_FLOAT_EQ(out.at(0, 1, 0), 1.5f);
  EXPECT_FLOAT_EQ(out.at(0, 1, 1), 4.0f);
}

TEST(DenseAttention, MatchesNaiveOracle) {
  const HeadLayout layout{2, 1, 3};
  const QkvBatch b = checks::random_batch(7, layout, 4);
  const Tensor out = dense_causal_attention(b, layout);
  const auto oracle = ref::dense_causal(b.q, b.k, b.v, 1);
  EXPECT_LE(double(ref::max_abs_diff(out.data(), oracle)), 1e-5);
}

TEST(DenseAttention, RowsSumToOne) {
  const HeadLayout layout{4, 2, 8};
  const QkvBatch b = checks::random_batch(9, layout, 20);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t pos = 0; pos < 20; ++pos) {
      const auto row = dense_attention_row(b, layout, s, pos);
      ASSERT_EQ(row.keys.size(), pos + 1);
      double sum = 0.0;
      for (double p : row.probs) sum += p;
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(DenseAttention, ThreadCountDoesNotChangeBits) {
  const HeadLayout layout{4, 2, 8};
  const QkvBatch b = checks::random_batch(2, layout, 33);
  EXPECT_EQ(dense_causal_attention(b, layout, ExecOptions{1}),
            dense_causal_attention(b, layout, ExecOptions{3}));
}

TEST(DenseAttention, ShapeErrors) {
  const HeadLayout layout{2, 1, 4};
  QkvBatch b = checks::random_batch(1, layout, 5);
  b.k = Tensor({1, 4, 4});
  EXPECT_THROW(dense_causal_attention(b, layout), Error);
  EXPECT_THROW(dense_causal_attention(checks::random_batch(1, layout, 5), HeadLayout{4, 2, 4}), Error);
}

TEST(ConcatHeads, LayoutAndRoundTrip) {
  const Tensor heads({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor cat = concat_heads(heads);
  EXPECT_EQ(cat, Tensor({2, 4}, {1, 2, 5, 6, 3, 4, 7, 8}));
  EXPECT_EQ(split_heads(cat, 2), heads);
  const Tensor one({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(concat_heads(one).values(), one.values());
}

TEST(GqaChecks, DegeneracyAndOracle) {
  checks::Report r;
  checks::gqa_degeneracy(r, 4);
  checks::dense_oracle(r, 4);
  EXPECT_TRUE(r.passed()) << (r.passed() ? "" : r.failure_messages().front());
}

}  // namespace
}  // namespace vnsa
