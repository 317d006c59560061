#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "vnsa/error.hpp"

namespace vnsa::cli {
namespace fs = std::filesystem;

namespace {

// Hidden states are drawn in [-1, 1) so projected queries carry non-trivial logits.
constexpr float kHiddenScale = 20.0f;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

Tensor spans_tensor(const ModalitySpans& spans) {
  std::vector<float> data;
  for (const auto& s : spans.spans) {
    data.push_back(static_cast<float>(s.first));
    data.push_back(static_cast<float>(s.last));
    data.push_back(s.modality == Modality::kVision ? 0.0f : 1.0f);
  }
  return Tensor({spans.spans.size(), 3}, std::move(data));
}

double row_norm(std::span<const float> row) {
  double acc = 0.0;
  for (float x : row) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

/// Mean over the leading axis of per-row L2 norms of a [lead x N x d] tensor.
std::vector<double> mean_row_norms(const Tensor& t) {
  const std::size_t lead = t.dims()[0];
  const std::size_t n = t.dims()[1];
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < lead; ++a) out[i] += row_norm(t.row(a, i));
    out[i] /= static_cast<double>(lead);
  }
  return out;
}

std::vector<double> scatter_prefix(const AttentionRow& row, std::size_t pos) {
  if (row.keys.empty()) return {};
  std::vector<double> dense(pos + 1, 0.0);
  for (std::size_t i = 0; i < row.keys.size(); ++i) dense[row.keys[i]] = row.probs[i];
  return dense;
}

GateValues gates_for(const RunConfig& config, const QkvBatch& batch, const ExecOptions& exec) {
  if (config.gate_override) {
    return GateValues::constant(batch.seq_len(), config.layout.heads, *config.gate_override);
  }
  return gate_values_from_queries(batch.q, GateParams::load(config.fixture_dir), exec);
}

}  // namespace

unsigned threads_from_env() {
  const char* raw = std::getenv("VNSA_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const unsigned long v = std::strtoul(raw, &end, 10);
  if (*end != '\0' || v == 0) fail(ErrorKind::kValidation, "VNSA_THREADS must be a positive integer");
  return static_cast<unsigned>(v);
}

void cmd_gen(const RunConfig& config, const ExecOptions& /*exec*/) {
  config.validate();
  const HeadLayout& layout = config.layout;
  const std::size_t width = layout.heads * layout.head_dim;
  Rng64 rng(config.seed);

  Tensor hidden = seeded_uniform(rng, {config.seq_len, width});
  for (float& x : hidden.data()) x *= kHiddenScale;
  const Tensor wq = seeded_uniform(rng, {width, layout.heads * layout.head_dim});
  const Tensor wk = seeded_uniform(rng, {width, layout.kv_groups * layout.head_dim});
  const Tensor wv = seeded_uniform(rng, {width, layout.kv_groups * layout.head_dim});
  const GateParams params = GateParams::seeded(rng, width, width, layout.heads);

  ensure_dir(config.fixture_dir);
  save_tensor(config.fixture_dir / "q.vnsa", split_heads(matmul(hidden, wq), layout.heads));
  save_tensor(config.fixture_dir / "k.vnsa", split_heads(matmul(hidden, wk), layout.kv_groups));
  save_tensor(config.fixture_dir / "v.vnsa", split_heads(matmul(hidden, wv), layout.kv_groups));
  params.save(config.fixture_dir);
  save_tensor(config.fixture_dir / "spans.vnsa", spans_tensor(config.spans()));
}

QkvBatch load_batch(const RunConfig& config) {
  QkvBatch batch{load_tensor(config.fixture_dir / "q.vnsa"),
                 load_tensor(config.fixture_dir / "k.vnsa"),
                 load_tensor(config.fixture_dir / "v.vnsa")};
  try {
    batch.validate(config.layout);
  } catch (const Error& e) {
    fail(ErrorKind::kValidation, std::string("fixtures do not match the config: ") + e.what());
  }
  return batch;
}

ModalitySpans load_spans(const fs::path& dir, std::size_t seq_len) {
  const Tensor t = load_tensor(dir / "spans.vnsa");
  if (t.rank() != 2 || t.dims()[1] != 3) {
    fail(ErrorKind::kFormat, "spans fixture must be [n x 3], got " + shape_to_string(t.dims()));
  }
  ModalitySpans spans;
  for (std::size_t i = 0; i < t.dims()[0]; ++i) {
    spans.spans.push_back({static_cast<std::size_t>(t.at(i, 0)), static_cast<std::size_t>(t.at(i, 1)),
                           t.at(i, 2) == 0.0f ? Modality::kVision : Modality::kText});
  }
  spans.validate(seq_len);
  return spans;
}

AttendSummary cmd_attend(const RunConfig& config, const ExecOptions& exec) {
  const QkvBatch batch = load_batch(config);
  const ModalitySpans spans = load_spans(config.fixture_dir, batch.seq_len());
  const GateValues gates = gates_for(config, batch, exec);

  const HybridResult hybrid = run_hybrid_layer(batch, config.layout, config.sparse, gates, spans, exec);
  const Tensor dense = concat_heads(dense_causal_attention(batch, config.layout, exec));

  AttendSummary summary;
  summary.counts = hybrid.vision_counts;
  summary.vision_tokens = hybrid.vision_tokens;
  summary.text_tokens = hybrid.text_tokens;
  for (Branch b : kAllBranches) {
    double sum = 0.0;
    for (std::size_t t = 0; t < gates.tokens(); ++t) {
      for (std::size_t s = 0; s < gates.heads(); ++s) sum += gates.at(t, s, b);
    }
    summary.gate_means[static_cast<std::size_t>(b)] =
        sum / static_cast<double>(gates.tokens() * gates.heads());
  }
  for (std::size_t i = 0; i < dense.size(); ++i) {
    summary.max_abs_dev_vs_dense = std::max(
        summary.max_abs_dev_vs_dense,
        std::abs(static_cast<double>(hybrid.output[i]) - static_cast<double>(dense[i])));
  }

  ensure_dir(config.output_dir);
  save_tensor(config.output_dir / "output.vnsa", hybrid.output);
  save_tensor(config.output_dir / "dense.vnsa", dense);
  std::ostringstream os;
  os << "metric,value\n"
     << "vision_tokens," << summary.vision_tokens << '\n'
     << "text_tokens," << summary.text_tokens << '\n';
  for (Branch b : kAllBranches) {
    os << "gate_mean_" << branch_name(b) << ','
       << format_double(summary.gate_means[static_cast<std::size_t>(b)]) << '\n';
  }
  os << "cmp_scores," << summary.counts.cmp_scores << '\n'
     << "slc_scores," << summary.counts.slc_scores << '\n'
     << "slc_attended," << summary.counts.slc_attended << '\n'
     << "win_attended," << summary.counts.win_attended << '\n'
     << "max_abs_dev_vs_dense," << format_double(summary.max_abs_dev_vs_dense) << '\n';
  write_file_atomic(config.output_dir / "attend_summary.csv", os.str());
  return summary;
}

int cmd_bench(const RunConfig& config, std::span<const std::size_t> seq_lens,
              const ExecOptions& exec, std::ostream& out) {
  config.validate();
  if (seq_lens.empty()) fail(ErrorKind::kValidation, "--lengths needs at least one value");
  for (std::size_t i = 1; i < seq_lens.size(); ++i) {
    if (seq_lens[i] <= seq_lens[i - 1]) fail(ErrorKind::kValidation, "--lengths must be ascending");
  }
  ProfileOptions opts;
  opts.seed = config.seed;
  opts.exec = exec;
  const CostReport report = profile_branches(seq_lens, config.sparse, config.layout, opts);
  ensure_dir(config.output_dir);
  write_file_atomic(config.output_dir / "cost.csv", cost_report_csv(report));
  const bool ok = report.counts_match();
  out << "selected_tokens=" << report.selected_tokens << '\n'
      << "counts_match=" << (ok ? "yes" : "no") << '\n'
      << "dominant_at_L" << seq_lens.back() << '=' << report.dominant_branch << '\n';
  return ok ? 0 : 1;
}

std::vector<SinkSource> cmd_sinks(const RunConfig& config, const ExecOptions& exec) {
  const QkvBatch batch = load_batch(config);
  const HeadLayout& layout = config.layout;
  const std::size_t seq = batch.seq_len();
  const CompressedKv compressed = compress_blocks(batch.k, batch.v, config.sparse.block_size);
  const SelectionResult selection = select_blocks(batch, layout, config.sparse, compressed, exec);

  using RowFn = std::function<std::vector<double>(std::size_t head, std::size_t pos)>;
  auto head_mean_alphas = [&](std::size_t num_keys, const RowFn& row_fn) {
    std::vector<double> alpha(num_keys, 0.0);
    for (std::size_t s = 0; s < layout.heads; ++s) {
      std::vector<std::vector<double>> rows(seq);
      parallel_for(seq, exec, [&](std::size_t pos) { rows[pos] = row_fn(s, pos); });
      const auto a = compute_alphas(rows, num_keys);
      for (std::size_t k = 0; k < num_keys; ++k) alpha[k] += a[k];
    }
    for (double& a : alpha) a /= static_cast<double>(layout.heads);
    return alpha;
  };

  std::vector<SinkSource> sources;
  const std::vector<double> token_norms = mean_row_norms(batch.v);
  sources.push_back({"dense", detect_sinks(head_mean_alphas(seq, [&](std::size_t s, std::size_t pos) {
                                             return dense_attention_row(batch, layout, s, pos).probs;
                                           }),
                                           token_norms)});
  if (compressed.num_blocks > 0) {
    sources.push_back(
        {"cmp", detect_sinks(head_mean_alphas(compressed.num_blocks,
                                              [&](std::size_t s, std::size_t pos) {
                                                return compression_attention(
                                                           batch.q.row(s, pos), compressed,
                                                           group_index(s, layout), pos)
                                                    .probs;
                                              }),
                             mean_row_norms(compressed.values))});
  } else {
    sources.push_back({"cmp", SinkReport{}});
  }
  sources.push_back(
      {"slc", detect_sinks(head_mean_alphas(seq,
                                            [&](std::size_t s, std::size_t pos) {
                                              const std::size_t g = group_index(s, layout);
                                              return scatter_prefix(
                                                  selection_attention(batch.q.row(s, pos), batch.k,
                                                                      batch.v, g, selection.at(g, pos),
                                                                      config.sparse.block_size, pos),
                                                  pos);
                                            }),
                           token_norms)});
  sources.push_back(
      {"win", detect_sinks(head_mean_alphas(seq,
                                            [&](std::size_t s, std::size_t pos) {
                                              return scatter_prefix(
                                                  sliding_window_attention(
                                                      batch.q.row(s, pos), batch.k, batch.v,
                                                      group_index(s, layout), config.sparse.window, pos),
                                                  pos);
                                            }),
                           token_norms)});

  ensure_dir(config.output_dir);
  std::ostringstream summary;
  summary << "source,tokens,sinks,sink_ratio\n";
  for (const auto& src : sources) {
    write_file_atomic(config.output_dir / ("sinks_" + src.name + ".csv"), sink_report_csv(src.report));
    summary << src.name << ',' << src.report.tokens() << ',' << src.report.sink_count << ','
            << format_double(src.report.sink_ratio()) << '\n';
  }
  write_file_atomic(config.output_dir / "sinks_summary.csv", summary.str());
  return sources;
}

GateStats cmd_gates(const RunConfig& config, const ExecOptions& exec) {
  const QkvBatch batch = load_batch(config);
  const GateValues gates = gates_for(config, batch, exec);
  const GateStats stats = gate_statistics(std::span<const GateValues>(&gates, 1));
  ensure_dir(config.output_dir);
  write_file_atomic(config.output_dir / "gate_stats.csv", gate_stats_csv(stats));
  return stats;
}

std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%#.4g", fraction * 100.0);
  return buf;
}

int cmd_budget(const RunConfig& config, const BudgetArgs& args, std::ostream& out) {
  const std::uint64_t b = args.blocks.value_or(config.sparse.select_blocks);
  const std::uint64_t s = args.block_size.value_or(config.sparse.block_size);
  const std::uint64_t w = args.window.value_or(config.sparse.window);
  std::uint64_t seq = kDefaultBudgetLength;
  if (args.seq_len) {
    seq = *args.seq_len;
  } else if (args.frames || args.tokens_per_frame) {
    if (!args.frames || !args.tokens_per_frame) {
      fail(ErrorKind::kValidation, "--frames and --tpf must be given together");
    }
    seq = info_context_length(*args.tokens_per_frame, *args.frames);
  }
  const std::uint64_t budget = attention_budget(b, s, w);
  const double gamma = attention_fraction(b, s, w, seq);
  out << "K_attn=" << budget << '\n'
      << "L=" << seq << '\n'
      << "gamma=" << format_percent(gamma) << "%\n";
  if (budget > 0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", local_ratio(b, s, w));
    out << "alpha_local=" << buf << '\n';
  }
  return 0;
}

}  // namespace vnsa::cli
