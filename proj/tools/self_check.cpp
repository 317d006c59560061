#include "self_check.hpp"

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace vnsa::cli {

int cmd_check(const CheckOptions& options, std::ostream& out) {
  using checks::Report;
  const std::uint64_t seed = options.seed;
  const checks::Tolerance tol{options.corrupt_tolerance ? -1.0 : 0.0};

  const std::vector<std::pair<std::string, std::function<void(Report&)>>> suites{
      {"tensor", [&](Report& r) {
         checks::softmax_properties(r, seed);
         checks::reproducibility(r);
         checks::fixture_roundtrip(r, seed);
         checks::quantile_oracle(r, seed);
       }},
      {"dense", [&](Report& r) {
         checks::dense_oracle(r, seed);
         checks::gqa_degeneracy(r, seed);
       }},
      {"branches", [&](Report& r) {
         checks::full_budget_equivalence(r, seed);
         checks::branch_counters(r, seed);
         checks::selection_structure(r, seed);
         checks::constant_block_compression(r);
       }},
      {"causality", [&](Report& r) { checks::causality_trials(r, 50, seed); }},
      {"gating", [&](Report& r) {
         checks::gate_forward_oracle(r, seed);
         checks::gate_linearity_and_range(r, seed);
         checks::hybrid_composition(r, seed);
       }},
      {"gradients", [&](Report& r) { checks::gate_gradients(r, 100, seed); }},
      {"threads", [&](Report& r) { checks::thread_invariance(r, seed); }},
      {"analysis", [&](Report& r) {
         checks::budget_identity(r);
         checks::sink_fixtures(r, 20, seed);
         checks::alpha_range(r, seed);
         checks::gate_stat_oracles(r, 10, seed);
         checks::inter_head_properties(r, seed);
       }},
      {"counts", [&](Report& r) { checks::selection_scaling(r); }},
      {"config", [&](Report& r) { checks::config_and_csv(r); }},
  };

  bool all = true;
  for (const auto& [name, run] : suites) {
    Report r(tol);
    try {
      run(r);
    } catch (const std::exception& e) {
      r.expect(false, std::string("unexpected error: ") + e.what());
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%s %-10s %5zu checks %4zu failed",
                  r.passed() ? "PASS" : "FAIL", name.c_str(), r.checks(), r.failures());
    out << line << '\n';
    for (std::size_t i = 0; i < r.failure_messages().size() && i < 5; ++i) {
      out << "    " << r.failure_messages()[i] << '\n';
    }
    all = all && r.passed();
  }
  out << (all ? "all suites passed" : "self-check failed") << '\n';
  return all ? 0 : 1;
}

}  // namespace vnsa::cli
