// Acceptance runner: one PASS/FAIL line per criterion. argv[1] is the vnsa
// executable used for the command-line criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "checks.hpp"
#include "temp_dir.hpp"

namespace {

namespace fs = std::filesystem;
using vnsa::checks::Report;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string first_failure(const Report& r) {
  return r.passed() ? std::string() : "; first failure: " + r.failure_messages().front();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct RunResult {
  int status = -1;
  std::string out;
};

RunResult run(const std::string& env, const std::string& exe, const std::string& args,
              const fs::path& capture) {
  const std::string cmd =
      env + " '" + exe + "' " + args + " > '" + capture.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(capture);
  return r;
}

Outcome budget_headline(const std::string& exe) {
  vnsa::testing::TempDir dir;
  const auto start = std::chrono::steady_clock::now();
  const RunResult r = run("", exe, "budget 32 64 256 128000", dir.path() / "stdout.txt");
  const double secs = seconds_since(start);
  const auto at = r.out.find("gamma=");
  if (r.status != 0 || at == std::string::npos) return {false, "budget failed: " + r.out};
  const double gamma = std::stod(r.out.substr(at + 6));
  const bool ok = std::abs(gamma - 3.6) <= 0.05 && r.out.find("K_attn=2304") != std::string::npos && secs < 1.0;
  return {ok, fmt("gamma=%.3f%%, K_attn=2304, %.3fs", gamma, secs)};
}

Outcome timed(double limit, const std::function<std::string(Report&)>& body) {
  Report r;
  const auto start = std::chrono::steady_clock::now();
  const std::string detail = body(r);
  const double secs = seconds_since(start);
  return {r.passed() && secs < limit,
          detail + fmt(", %.0f checks, worst error %.3g, %.2fs", double(r.checks()), r.worst(), secs) +
              first_failure(r)};
}

Outcome selection_complexity() {
  Report r;
  const auto res = vnsa::checks::selection_scaling(r);
  std::string detail = "scoring ratios";
  for (double x : res.score_ratios) detail += fmt(" %.4f", x);
  detail += "; window ratios";
  bool window_ok = true;
  for (double x : res.window_ratios) {
    detail += fmt(" %.4f", x);
    window_ok = window_ok && x >= 1.9 && x <= 2.1;
  }
  if (!window_ok) detail += " (band [1.9, 2.1] missed)";
  detail += "; wall-clock order at L=8192:";
  for (const char* b : vnsa::kCostBranches) {
    detail += std::string(" ") + b + fmt("=%.1fms", double(res.report.row(8192, b).wall_ns) / 1e6);
  }
  return {r.passed() && window_ok, detail + first_failure(r)};
}

// cost.csv without its wall_ns column; every other byte must match.
std::string strip_wall(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    files[name] = name == "cost.csv" ? strip_wall(slurp(e.path())) : slurp(e.path());
  }
  return files;
}

Outcome determinism(const std::string& exe) {
  vnsa::testing::TempDir root;
  const fs::path cfg = root.path() / "run.cfg";
  std::ofstream(cfg) << "heads = 8\nkv_heads = 2\nhead_dim = 16\nblock_size = 8\nselect_blocks = 4\n"
                        "window = 32\nseq_len = 128\nseed = 3\nvision_spans = 1-48, 65-128\n";
  const std::vector<std::string> commands{"gen", "attend", "sinks", "gates", "bench --lengths 64,128,256",
                                          "budget", "budget 16 8 32 --frames 16 --tpf 8", "check"};
  std::vector<std::map<std::string, std::string>> runs;
  const std::vector<std::string> threads{"1", "1", "4"};
  for (std::size_t i = 0; i < threads.size(); ++i) {
    const fs::path out = root.path() / ("run" + std::to_string(i));
    fs::create_directories(out);
    std::map<std::string, std::string> files;
    for (const std::string& c : commands) {
      const RunResult r = run("VNSA_THREADS=" + threads[i], exe,
                              "--config '" + cfg.string() + "' --out '" + out.string() + "' " + c,
                              root.path() / "stdout.txt");
      if (r.status != 0) return {false, "command '" + c + "' exited " + std::to_string(r.status) + ": " + r.out};
      files["stdout:" + c] = r.out;
    }
    for (auto& [name, bytes] : snapshot(out)) files[name] = bytes;
    runs.push_back(std::move(files));
  }
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].size() != runs[0].size()) return {false, "different file sets"};
    for (const auto& [name, bytes] : runs[0]) {
      if (runs[i].at(name) != bytes) {
        return {false, name + " differs between run 1 and run " + std::to_string(i + 1)};
      }
    }
  }
  return {true, std::to_string(runs[0].size()) + " outputs of " + std::to_string(commands.size()) +
                    " commands identical over two runs at VNSA_THREADS=1 and one at 4 "
                    "(cost.csv compared without wall_ns)"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: vnsa_acceptance <path-to-vnsa>\n";
    return 2;
  }
  const std::string exe = argv[1];
  using namespace vnsa::checks;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"budget headline", [&] { return budget_headline(exe); }},
      {"full-budget oracle equivalence",
       [] { return timed(30.0, [](Report& r) { full_budget_equivalence(r, 2024); return std::string("L in {64, 256}, s in {4, 16}"); }); }},
      {"causality",
       [] { return timed(30.0, [](Report& r) { causality_trials(r, 50, 2024); return std::string("50 trials x 5 kernels"); }); }},
      {"selection complexity", [] { return selection_complexity(); }},
      {"gradient correctness", [] {
         return timed(60.0, [](Report& r) {
           const GradientStats s = gate_gradients(r, 100, 2024);
           return std::to_string(s.instances) + " instances, " + std::to_string(s.entries) + " entries, " +
                  std::to_string(s.failures) + " failures, " + std::to_string(s.resampled) + " kink resamples";
         });
       }},
      {"sink detector exactness",
       [] { return timed(1e9, [](Report& r) { sink_fixtures(r, 20, 2024); return std::string("fixtures + 20 shuffles"); }); }},
      {"GQA degeneracy",
       [] { return timed(1e9, [](Report& r) { gqa_degeneracy(r, 2024); return std::string("g = h vs per-head, group map"); }); }},
      {"determinism", [&] { return determinism(exe); }},
      {"gate statistics oracles",
       [] { return timed(1e9, [](Report& r) { gate_stat_oracles(r, 10, 2024); return std::string("10 instances"); }); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
