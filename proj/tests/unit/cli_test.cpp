#include <gtest/gtest.h>

#include <sstream>

#include "commands.hpp"
#include "run_config.hpp"
#include "self_check.hpp"
#include "temp_dir.hpp"
#include "vnsa/error.hpp"

namespace vnsa::cli {
namespace {

using vnsa::testing::TempDir;

constexpr const char* kSmall =
    "heads = 4\nkv_heads = 2\nhead_dim = 8\nblock_size = 4\nselect_blocks = 2\nwindow = 8\nseq_len = 32\n";

RunConfig small_config(const std::filesystem::path& dir, const std::string& extra = "") {
  RunConfig c = parse_config(std::string(kSmall) + extra);
  c.fixture_dir = dir;
  c.output_dir = dir;
  return c;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(Config, Defaults) {
  const RunConfig c = parse_config("# nothing here\n\n");
  EXPECT_EQ(c.sparse.block_size, 64u);
  EXPECT_EQ(c.sparse.select_blocks, 32u);
  EXPECT_EQ(c.sparse.window, 256u);
  EXPECT_EQ(c.layout.heads, 28u);
  EXPECT_EQ(c.layout.kv_groups, 4u);
  EXPECT_EQ(c.layout.head_dim, 128u);
}

TEST(Config, ErrorsNameLineAndKey) {
  EXPECT_NE(error_of("block_size = 0\n").find("key 'block_size'"), std::string::npos);
  EXPECT_NE(error_of("heads = 6\nkv_heads = 4\n").find("divisible"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nwindw = 3\n").find("config line 2, key 'windw'"), std::string::npos);
  EXPECT_NE(error_of("window = -3\n").find("window"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nseed = 2\n").find("duplicate"), std::string::npos);
  EXPECT_FALSE(error_of("tokens_per_frame = 4\nframes = 3\nseq_len = 11\n").empty());
}

TEST(Config, FramesSetLengthAndSpans) {
  const RunConfig c = parse_config("tokens_per_frame = 4\nframes = 3\nvision_spans = 1-4, 9-12\ngate_override = 0, 0.5, 0.5\n");
  EXPECT_EQ(c.seq_len, 12u);
  EXPECT_EQ(c.spans().positions(Modality::kText).size(), 4u);
  ASSERT_TRUE(c.gate_override.has_value());
  EXPECT_DOUBLE_EQ((*c.gate_override)[2], 0.5);
  EXPECT_FALSE(error_of("seq_len = 10\nvision_spans = 3-12\n").empty());
}

TEST(Gen, DeterministicAndSeedSensitive) {
  TempDir a, b, c;
  cmd_gen(small_config(a.path()), {});
  cmd_gen(small_config(b.path()), {});
  cmd_gen(small_config(c.path(), "seed = 9\n"), {});
  for (const char* name : {"q.vnsa", "k.vnsa", "v.vnsa", "W1.vnsa", "b1.vnsa", "W2.vnsa", "b2.vnsa", "spans.vnsa"}) {
    const auto x = read_file(a.path() / name);
    ASSERT_GE(x.size(), 5u);
    EXPECT_EQ(std::vector<std::uint8_t>(x.begin(), x.begin() + 5),
              (std::vector<std::uint8_t>{0x56, 0x4E, 0x53, 0x41, 0x01}))
        << name;
    EXPECT_EQ(x, read_file(b.path() / name)) << name;
    if (std::string(name) != "spans.vnsa") EXPECT_NE(x, read_file(c.path() / name)) << name;
  }
  const Tensor q = load_tensor(a.path() / "q.vnsa");
  EXPECT_EQ(q.dims(), (Shape{4, 32, 8}));
}

TEST(Attend, AllTextEqualsDense) {
  TempDir dir;
  const RunConfig c = small_config(dir.path(), "vision_spans = none\n");
  cmd_gen(c, {});
  const AttendSummary s = cmd_attend(c, {});
  EXPECT_EQ(s.text_tokens, 32u);
  EXPECT_EQ(s.max_abs_dev_vs_dense, 0.0);
  EXPECT_EQ(read_file(dir.path() / "output.vnsa"), read_file(dir.path() / "dense.vnsa"));
}

TEST(Attend, FullBudgetNearDense) {
  TempDir dir;
  const RunConfig c = small_config(dir.path(), "gate_override = 0, 0, 1\n");
  RunConfig full = c;
  full.sparse = SparseConfig{4, 8, 32};
  cmd_gen(full, {});
  const AttendSummary s = cmd_attend(full, {});
  EXPECT_LE(s.max_abs_dev_vs_dense, 1e-5);
  const auto bytes = read_file(dir.path() / "attend_summary.csv");
  const CsvTable t = parse_csv(std::string(bytes.begin(), bytes.end()));
  EXPECT_EQ(t[0], (std::vector<std::string>{"metric", "value"}));
  EXPECT_EQ(t.back()[0], "max_abs_dev_vs_dense");
  EXPECT_LE(std::stod(t.back()[1]), 1e-5);
}

TEST(Attend, DeterministicAndReportsCounts) {
  TempDir a, b;
  cmd_gen(small_config(a.path()), {});
  cmd_gen(small_config(b.path()), {});
  const AttendSummary s = cmd_attend(small_config(a.path()), {});
  cmd_attend(small_config(b.path()), ExecOptions{4});
  EXPECT_EQ(read_file(a.path() / "output.vnsa"), read_file(b.path() / "output.vnsa"));
  EXPECT_EQ(read_file(a.path() / "attend_summary.csv"), read_file(b.path() / "attend_summary.csv"));
  EXPECT_EQ(s.counts, branch_op_counts(32, SparseConfig{4, 2, 8}));
  for (double m : s.gate_means) {
    EXPECT_GT(m, 0.0);
    EXPECT_LT(m, 1.0);
  }
}

TEST(Attend, MissingFixtureNamesPath) {
  TempDir dir;
  try {
    cmd_attend(small_config(dir.path()), {});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
    EXPECT_NE(std::string(e.what()).find("q.vnsa"), std::string::npos);
  }
}

TEST(Attend, FixtureConfigMismatch) {
  TempDir dir;
  cmd_gen(small_config(dir.path()), {});
  RunConfig other = small_config(dir.path());
  other.layout.heads = 2;
  EXPECT_THROW(cmd_attend(other, {}), Error);
}

void write_sink_fixture(const std::filesystem::path& dir, int planted) {
  const std::size_t seq = 8, d = 4;
  Tensor v({1, seq, d});
  for (std::size_t t = 0; t < seq; ++t) v.at(0, t, 0) = int(t) == planted ? 0.01f : 1.0f;
  save_tensor(dir / "q.vnsa", Tensor({2, seq, d}));
  save_tensor(dir / "k.vnsa", Tensor({1, seq, d}));
  save_tensor(dir / "v.vnsa", v);
}

RunConfig sink_config(const std::filesystem::path& dir) {
  RunConfig c = parse_config("heads = 2\nkv_heads = 1\nhead_dim = 4\nblock_size = 2\nselect_blocks = 1\nwindow = 3\nseq_len = 8\n");
  c.fixture_dir = dir;
  c.output_dir = dir;
  return c;
}

TEST(Sinks, UniformAttentionEqualNormsHasNoSinks) {
  TempDir dir;
  write_sink_fixture(dir.path(), -1);
  const auto sources = cmd_sinks(sink_config(dir.path()), {});
  ASSERT_EQ(sources.size(), 4u);
  EXPECT_EQ(sources[0].name, "dense");
  EXPECT_EQ(sources[0].report.sink_count, 0u);
}

TEST(Sinks, PlantedTokenFlagged) {
  TempDir dir;
  write_sink_fixture(dir.path(), 3);
  const auto sources = cmd_sinks(sink_config(dir.path()), {});
  EXPECT_EQ(sources[0].report.flagged(), std::vector<std::size_t>{3});
  const auto bytes = read_file(dir.path() / "sinks_summary.csv");
  const CsvTable t = parse_csv(std::string(bytes.begin(), bytes.end()));
  ASSERT_EQ(t.size(), 5u);
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double ratio = std::stod(t[i][3]);
    EXPECT_GE(ratio, 0.0);
    EXPECT_LE(ratio, 1.0);
  }
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "sinks_dense.csv"));
}

TEST(Gates, ConstantOverrideStatistics) {
  TempDir dir;
  const RunConfig c = small_config(dir.path(), "gate_override = 0.5, 0.5, 0.5\n");
  cmd_gen(c, {});
  const GateStats s = cmd_gates(c, {});
  for (const auto& b : s.layers[0]) {
    EXPECT_DOUBLE_EQ(b.mean, 0.5);
    EXPECT_DOUBLE_EQ(b.iqr, 0.0);
    EXPECT_EQ(b.inter_head_corr.value(), 0.0);
  }
  const auto bytes = read_file(dir.path() / "gate_stats.csv");
  EXPECT_EQ(parse_csv(std::string(bytes.begin(), bytes.end()))[0],
            (std::vector<std::string>{"layer", "branch", "mean", "iqr", "inter_head_corr"}));
}

std::string budget(const BudgetArgs& args) {
  std::ostringstream os;
  cmd_budget(RunConfig{}, args, os);
  return os.str();
}

TEST(Budget, Headlines) {
  EXPECT_EQ(budget({32, 64, 256, 128000, {}, {}}), "K_attn=2304\nL=128000\ngamma=3.600%\nalpha_local=0.1111\n");
  EXPECT_EQ(budget({}), "K_attn=2304\nL=128000\ngamma=3.600%\nalpha_local=0.1111\n");
  EXPECT_NE(budget({0, 64, 256, 1000, {}, {}}).find("K_attn=256\nL=1000\ngamma=51.25%"), std::string::npos);
  EXPECT_NE(budget({32, 64, 256, {}, 512, 64}).find("L=32768\ngamma=14.06%"), std::string::npos);
  EXPECT_THROW(budget({32, 64, 256, 1, {}, {}}), Error);
  EXPECT_THROW(budget({32, 64, 256, {}, 512, {}}), Error);
}

TEST(Bench, CountsAndRatios) {
  TempDir dir;
  RunConfig c = small_config(dir.path());
  c.layout = HeadLayout{2, 1, 4};
  c.sparse = SparseConfig{64, 32, 256};
  std::ostringstream os;
  const std::vector<std::size_t> lens{1024, 2048, 4096};
  EXPECT_EQ(cmd_bench(c, lens, {}, os), 0);
  EXPECT_NE(os.str().find("counts_match=yes"), std::string::npos);
  const auto bytes = read_file(dir.path() / "cost.csv");
  const CsvTable t = parse_csv(std::string(bytes.begin(), bytes.end()));
  ASSERT_EQ(t.size(), 13u);
  std::vector<double> scores;
  for (std::size_t i = 1; i < t.size(); ++i) {
    EXPECT_EQ(t[i][2], t[i][3]);
    if (t[i][1] == "slc_score") scores.push_back(std::stod(t[i][3]));
    if (t[i][1] == "win") {
      const double seq = std::stod(t[i][0]);
      EXPECT_EQ(std::stod(t[i][3]), seq * 256 - 256.0 * 255 / 2);
    }
  }
  ASSERT_EQ(scores.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_NEAR(scores[i] / scores[i - 1], 4.0, 0.5);
  const std::vector<std::size_t> descending{2048, 1024};
  EXPECT_THROW(cmd_bench(c, descending, {}, os), Error);
  const std::vector<std::size_t> too_short{32};
  EXPECT_THROW(cmd_bench(c, too_short, {}, os), Error);
}

TEST(Check, CorruptedToleranceFails) {
  std::ostringstream os;
  CheckOptions opts;
  opts.corrupt_tolerance = true;
  EXPECT_NE(cmd_check(opts, os), 0);
  EXPECT_NE(os.str().find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace vnsa::cli
