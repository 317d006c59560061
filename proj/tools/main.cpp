#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "self_check.hpp"
#include "vnsa/error.hpp"

namespace {

using namespace vnsa;
using namespace vnsa::cli;

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig resolve_config(const GlobalFlags& flags) {
  RunConfig config = flags.config_path.empty() ? RunConfig{} : load_config(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  if (!flags.out_dir.empty()) {
    config.fixture_dir = flags.out_dir;
    config.output_dir = flags.out_dir;
  }
  config.validate();
  return config;
}

void print_counts(const BranchCounts& c) {
  std::cout << "cmp_scores=" << c.cmp_scores << '\n'
            << "slc_scores=" << c.slc_scores << '\n'
            << "slc_attended=" << c.slc_attended << '\n'
            << "win_attended=" << c.win_attended << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse attention engine: fixtures, kernels, reports and self-checks"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "Config file of key = value lines");
  app.add_option("--seed", flags.seed, "Seed overriding the config");
  app.add_option("--out", flags.out_dir, "Directory for fixtures and outputs");

  auto* gen = app.add_subcommand("gen", "Write seeded Q/K/V, gate parameters and spans");
  auto* attend = app.add_subcommand("attend", "Run the hybrid layer over the fixtures");
  auto* bench = app.add_subcommand("bench", "Profile branch costs into cost.csv");
  std::vector<std::size_t> lengths{1024, 2048, 4096};
  bench->add_option("--lengths", lengths, "Ascending context lengths")->delimiter(',');
  auto* sinks = app.add_subcommand("sinks", "Attention sink reports per attention source");
  auto* gates = app.add_subcommand("gates", "Gate statistics over the fixture queries");

  auto* budget = app.add_subcommand("budget", "Attention budget arithmetic");
  std::vector<std::uint64_t> budget_pos;
  BudgetArgs budget_args;
  budget->add_option("b_s_w_L", budget_pos, "Selected blocks, block size, window, length")
      ->expected(0, 4);
  budget->add_option("--frames", budget_args.frames, "Frame count");
  budget->add_option("--tpf", budget_args.tokens_per_frame, "Tokens per frame");

  auto* check = app.add_subcommand("check", "Run the invariant suite");
  bool corrupt = false;
  check->add_flag("--corrupt-tolerance", corrupt)->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExecOptions exec{threads_from_env()};
    if (*gen) {
      const RunConfig config = resolve_config(flags);
      cmd_gen(config, exec);
      std::cout << "wrote q k v W1 b1 W2 b2 spans (" << config.seq_len << " tokens, seed "
                << config.seed << ")\n";
      return 0;
    }
    if (*attend) {
      const AttendSummary s = cmd_attend(resolve_config(flags), exec);
      std::cout << "vision_tokens=" << s.vision_tokens << '\n'
                << "text_tokens=" << s.text_tokens << '\n';
      for (Branch b : kAllBranches) {
        std::cout << "gate_mean_" << branch_name(b) << '='
                  << format_double(s.gate_means[static_cast<std::size_t>(b)]) << '\n';
      }
      print_counts(s.counts);
      std::cout << "max_abs_dev_vs_dense=" << format_double(s.max_abs_dev_vs_dense) << '\n';
      return 0;
    }
    if (*bench) return cmd_bench(resolve_config(flags), lengths, exec, std::cout);
    if (*sinks) {
      for (const SinkSource& src : cmd_sinks(resolve_config(flags), exec)) {
        std::cout << src.name << ": " << src.report.sink_count << " sinks over "
                  << src.report.tokens() << " keys\n";
      }
      return 0;
    }
    if (*gates) {
      const GateStats stats = cmd_gates(resolve_config(flags), exec);
      std::cout << gate_stats_csv(stats);
      return 0;
    }
    if (*budget) {
      if (budget_pos.size() >= 1) budget_args.blocks = budget_pos[0];
      if (budget_pos.size() >= 2) budget_args.block_size = budget_pos[1];
      if (budget_pos.size() >= 3) budget_args.window = budget_pos[2];
      if (budget_pos.size() >= 4) budget_args.seq_len = budget_pos[3];
      return cmd_budget(resolve_config(flags), budget_args, std::cout);
    }
    if (*check) {
      CheckOptions opts;
      opts.seed = flags.seed.value_or(0);
      opts.corrupt_tolerance = corrupt;
      return cmd_check(opts, std::cout);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
