#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "reference/reference.hpp"
#include "run_config.hpp"

namespace vnsa::checks {
namespace {

using ref::Real;

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b);
  return buf;
}

Tensor scaled_uniform(Rng64& rng, const Shape& dims, float scale) {
  Tensor t = seeded_uniform(rng, dims);
  for (float& x : t.data()) x *= scale;
  return t;
}

// Max |a - b| over rows (head, pos) with pos < limit for [h x L x d], or
// rows pos < limit for [L x D].
double prefix_diff(const Tensor& a, const Tensor& b, std::size_t limit) {
  double worst = 0.0;
  if (a.rank() == 3) {
    for (std::size_t s = 0; s < a.dims()[0]; ++s)
      for (std::size_t pos = 0; pos < limit; ++pos) {
        const auto ra = a.row(s, pos);
        const auto rb = b.row(s, pos);
        for (std::size_t c = 0; c < ra.size(); ++c)
          worst = std::max(worst, std::abs(double(ra[c]) - double(rb[c])));
      }
  } else {
    for (std::size_t pos = 0; pos < limit; ++pos) {
      const auto ra = a.row(pos);
      const auto rb = b.row(pos);
      for (std::size_t c = 0; c < ra.size(); ++c)
        worst = std::max(worst, std::abs(double(ra[c]) - double(rb[c])));
    }
  }
  return worst;
}

double max_diff(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  return worst;
}

// |core(head, pos) - oracle(head, pos)| for a flattened [h][L][d] oracle.
double row_vs_oracle(const Tensor& out, const std::vector<Real>& oracle, std::size_t head,
                     std::size_t pos) {
  const std::size_t seq = out.dims()[1], d = out.dims()[2];
  const auto row = out.row(head, pos);
  double worst = 0.0;
  for (std::size_t c = 0; c < d; ++c)
    worst = std::max(worst, double(std::abs(Real(row[c]) - oracle[(head * seq + pos) * d + c])));
  return worst;
}

std::vector<double> random_gates(Rng64& rng, std::size_t tokens, std::size_t heads) {
  std::vector<double> g(tokens * heads * kNumBranches);
  for (double& x : g) x = 1.0 / (1.0 + std::exp(-40.0 * double(uniform_from_u64(rng.next_u64()))));
  return g;
}

}  // namespace

void Report::expect(bool ok, const std::string& what) {
  ++checks_;
  if (!ok) failures_.push_back(what);
}

void Report::within(double err, double tol, const std::string& what) {
  ++checks_;
  if (std::isfinite(err)) worst_ = std::max(worst_, err);
  if (!(err <= tol + tol_.offset)) {
    failures_.push_back(what + fmt(" (error %.3g, tolerance %.3g)", err, tol + tol_.offset));
  }
}

void Report::throws(ErrorKind kind, const std::function<void()>& fn, const std::string& what) {
  ++checks_;
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() == kind) return;
    failures_.push_back(what + ": wrong error kind " + to_string(e.kind()));
    return;
  } catch (const std::exception& e) {
    failures_.push_back(what + ": unexpected exception " + e.what());
    return;
  }
  failures_.push_back(what + ": no error raised");
}

QkvBatch random_batch(std::uint64_t seed, const HeadLayout& layout, std::size_t seq_len) {
  Rng64 rng(seed);
  QkvBatch b;
  b.q = scaled_uniform(rng, {layout.heads, seq_len, layout.head_dim}, 20.0f);
  b.k = scaled_uniform(rng, {layout.kv_groups, seq_len, layout.head_dim}, 20.0f);
  b.v = scaled_uniform(rng, {layout.kv_groups, seq_len, layout.head_dim}, 20.0f);
  return b;
}

// ---------------------------------------------------------------------------

void softmax_properties(Report& r, std::uint64_t seed) {
  Rng64 rng(seed);
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial * 3;
    std::vector<double> logits(n);
    for (double& x : logits) x = 200.0 * uniform_from_u64(rng.next_u64());
    std::vector<bool> mask(n, true);
    for (std::size_t i = 0; i + 1 < n; i += 3) mask[i] = false;
    const auto p = stable_softmax(logits, mask);
    double sum = 0.0;
    bool nonneg = true;
    for (std::size_t i = 0; i < n; ++i) {
      sum += p[i];
      nonneg = nonneg && p[i] >= 0.0 && (mask[i] || p[i] == 0.0);
    }
    r.expect(nonneg, "softmax entries nonnegative, masked entries zero");
    r.within(std::abs(sum - 1.0), 1e-6, "softmax sums to 1");

    std::vector<double> shifted(logits);
    for (double& x : shifted) x += 37.5;
    const auto ps = stable_softmax(shifted, mask);
    double shift_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) shift_err = std::max(shift_err, std::abs(p[i] - ps[i]));
    r.within(shift_err, 1e-6, "softmax shift invariance");

    std::vector<Real> kept;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) kept.push_back(logits[i]);
    const auto oracle = ref::softmax(kept);
    double oracle_err = 0.0;
    for (std::size_t i = 0, j = 0; i < n; ++i)
      if (mask[i]) oracle_err = std::max(oracle_err, double(std::abs(Real(p[i]) - oracle[j++])));
    r.within(oracle_err, 1e-7, "softmax matches extended-precision oracle");
  }
  r.throws(ErrorKind::kEmptySupport,
           [] { stable_softmax(std::vector<double>{1.0, 2.0}, std::vector<bool>{false, false}); },
           "fully masked softmax");
}

void reproducibility(Report& r) {
  Rng64 a(42), b(42);
  const Tensor ta = seeded_uniform(a, {1000});
  const Tensor tb = seeded_uniform(b, {1000});
  r.expect(ta == tb, "seed 42 stream reproducible");
  bool in_range = true;
  for (float x : ta.data()) in_range = in_range && x >= -0.05f && x < 0.05f;
  r.expect(in_range, "uniform draws inside [-0.05, 0.05)");

  Rng64 m(7);
  const Tensor x = scaled_uniform(m, {17, 23}, 20.0f);
  const Tensor y = scaled_uniform(m, {23, 11}, 20.0f);
  const Tensor p1 = matmul(x, y);
  const Tensor p2 = matmul(x, y);
  r.within(max_diff(p1, p2), 0.0, "matmul bit-identical across runs");
  const auto oracle = ref::matmul(x, y);
  r.within(double(ref::max_abs_diff(p1.data(), oracle)), 1e-5, "matmul matches oracle");
}

void fixture_roundtrip(Report& r, std::uint64_t seed) {
  Rng64 rng(seed);
  for (const Shape& dims : {Shape{5}, Shape{3, 4}, Shape{2, 3, 4}, Shape{1, 1, 1, 2}}) {
    const Tensor t = seeded_uniform(rng, dims);
    const auto bytes = encode_tensor(t);
    r.expect(bytes.size() >= 5 && bytes[0] == 0x56 && bytes[1] == 0x4E && bytes[2] == 0x53 &&
                 bytes[3] == 0x41 && bytes[4] == 0x01,
             "fixture header bytes");
    r.expect(decode_tensor(bytes) == t, "fixture round trip " + shape_to_string(dims));
  }
  auto bytes = encode_tensor(Tensor({2, 2}, {1, 2, 3, 4}));
  bytes[0] = 'X';
  r.throws(ErrorKind::kFormat, [&] { decode_tensor(bytes); }, "bad magic rejected");
  bytes = encode_tensor(Tensor({2, 2}, {1, 2, 3, 4}));
  bytes.pop_back();
  r.throws(ErrorKind::kFormat, [&] { decode_tensor(bytes); }, "truncated payload rejected");
}

void quantile_oracle(Report& r, std::uint64_t seed) {
  Rng64 rng(seed);
  for (std::size_t n : {1u, 2u, 5u, 10u, 37u}) {
    std::vector<double> xs(n);
    for (double& x : xs) x = uniform_from_u64(rng.next_u64());
    for (double q : {0.0, 0.25, 0.3, 0.5, 0.75, 1.0}) {
      r.within(std::abs(quantile(xs, q) - double(ref::order_statistic_quantile(xs, q))), 1e-12,
               fmt("quantile q=%.2f matches order statistics", q));
    }
  }
}

// ---------------------------------------------------------------------------

void dense_oracle(Report& r, std::uint64_t seed) {
  const HeadLayout layout{4, 2, 8};
  const QkvBatch b = random_batch(seed, layout, 40);
  const Tensor out = dense_causal_attention(b, layout);
  const auto oracle = ref::dense_causal(b.q, b.k, b.v, layout.kv_groups);
  r.within(double(ref::max_abs_diff(out.data(), oracle)), 1e-6, "dense attention matches oracle");
  double sum_err = 0.0;
  for (std::size_t s = 0; s < layout.heads; ++s)
    for (std::size_t pos = 0; pos < 40; ++pos) {
      const auto row = dense_attention_row(b, layout, s, pos);
      sum_err = std::max(sum_err, std::abs(std::accumulate(row.probs.begin(), row.probs.end(), 0.0) - 1.0));
    }
  r.within(sum_err, 1e-6, "attention rows sum to 1");

  const HeadLayout shared{4, 1, 8};
  const QkvBatch one = random_batch(seed + 1, shared, 16);
  for (std::size_t s = 1; s <= shared.heads; ++s)
    r.expect(gqa_group_of_head(s, shared) == 1, "g = 1 maps every head to the single group");
  QkvBatch same_q = one;
  for (std::size_t s = 1; s < shared.heads; ++s)
    for (std::size_t pos = 0; pos < 16; ++pos) {
      auto dst = same_q.q.row(s, pos);
      const auto src = same_q.q.row(0, pos);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  const Tensor o = dense_causal_attention(same_q, shared);
  double spread = 0.0;
  for (std::size_t s = 1; s < shared.heads; ++s)
    for (std::size_t pos = 0; pos < 16; ++pos) {
      const auto a = o.row(0, pos), c = o.row(s, pos);
      for (std::size_t i = 0; i < a.size(); ++i) spread = std::max(spread, double(std::abs(a[i] - c[i])));
    }
  r.within(spread, 0.0, "g = 1 heads with equal queries give equal outputs");
}

void gqa_degeneracy(Report& r, std::uint64_t seed) {
  const HeadLayout mha{4, 4, 8};
  const std::size_t seq = 24;
  const QkvBatch b = random_batch(seed, mha, seq);
  const Tensor gqa = dense_causal_attention(b, mha);
  double worst = 0.0;
  const HeadLayout single{1, 1, 8};
  for (std::size_t s = 0; s < mha.heads; ++s) {
    QkvBatch head{Tensor({1, seq, 8}), Tensor({1, seq, 8}), Tensor({1, seq, 8})};
    for (std::size_t pos = 0; pos < seq; ++pos)
      for (std::size_t c = 0; c < 8; ++c) {
        head.q.at(0, pos, c) = b.q.at(s, pos, c);
        head.k.at(0, pos, c) = b.k.at(s, pos, c);
        head.v.at(0, pos, c) = b.v.at(s, pos, c);
      }
    const Tensor o = dense_causal_attention(head, single);
    for (std::size_t pos = 0; pos < seq; ++pos) {
      const auto a = gqa.row(s, pos), c = o.row(0, pos);
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a[i] - c[i])));
    }
  }
  r.within(worst, 1e-6, "g = h reproduces per-head attention");
  const auto oracle = ref::dense_causal(b.q, b.k, b.v, mha.kv_groups);
  r.within(double(ref::max_abs_diff(gqa.data(), oracle)), 1e-6, "g = h matches oracle");

  for (const auto& [h, g] : std::vector<std::pair<std::size_t, std::size_t>>{{28, 4}, {8, 2}, {6, 3}, {5, 5}}) {
    const HeadLayout layout{h, g, 1};
    bool ok = true;
    for (std::size_t s = 1; s <= h; ++s) {
      const auto expected = static_cast<std::size_t>(std::ceil(double(s) * double(g) / double(h)));
      ok = ok && gqa_group_of_head(s, layout) == expected &&
           gqa_group_of_head(s, layout) == ref::group_of(s - 1, h, g) + 1;
    }
    r.expect(ok, "group map equals ceil(s*g/h) for h=" + std::to_string(h) + ", g=" + std::to_string(g));
  }
}

// ---------------------------------------------------------------------------

void full_budget_equivalence(Report& r, std::uint64_t seed) {
  const HeadLayout layout{4, 2, 8};
  for (std::size_t seq : {64u, 256u}) {
    for (std::size_t s : {4u, 16u}) {
      const SparseConfig cfg{s, seq / s, seq};
      const QkvBatch b = random_batch(seed + seq + s, layout, seq);
      const auto oracle = ref::dense_causal(b.q, b.k, b.v, layout.kv_groups);
      const BranchOutputs br = run_branches(b, layout, cfg);
      const std::string tag = " (L=" + std::to_string(seq) + ", s=" + std::to_string(s) + ")";
      double slc = 0.0, win = 0.0;
      for (std::size_t h = 0; h < layout.heads; ++h)
        for (std::size_t pos = 0; pos < seq; ++pos) {
          if ((pos + 1) % s == 0) slc = std::max(slc, row_vs_oracle(br.selection, oracle, h, pos));
          win = std::max(win, row_vs_oracle(br.window, oracle, h, pos));
        }
      r.within(slc, 1e-5, "selection equals dense at block boundaries" + tag);
      r.within(win, 1e-5, "window equals dense at every position" + tag);

      const Tensor nsa = nsa_attention(b, layout, cfg, GateValues::constant(seq, layout.heads, {0.0, 0.0, 1.0}));
      double fused = 0.0;
      for (std::size_t h = 0; h < layout.heads; ++h)
        for (std::size_t pos = 0; pos < seq; ++pos) fused = std::max(fused, row_vs_oracle(nsa, oracle, h, pos));
      r.within(fused, 1e-5, "gates (0,0,1) equal dense at every position" + tag);
    }
  }
}

void branch_counters(Report& r, std::uint64_t seed) {
  const HeadLayout layout{2, 1, 4};
  for (const SparseConfig& cfg : {SparseConfig{4, 2, 8}, SparseConfig{64, 32, 256}}) {
    for (std::size_t seq : {8u, 64u, 257u, 1024u}) {
      const QkvBatch b = random_batch(seed + seq, layout, seq);
      const BranchOutputs br = run_branches(b, layout, cfg);
      const BranchCounts closed = branch_op_counts(seq, cfg);
      BranchCounts loop;
      for (std::uint64_t t = 1; t <= seq; ++t) {
        const std::uint64_t blocks = t / cfg.block_size;
        loop.cmp_scores += blocks;
        loop.slc_scores += blocks;
        loop.slc_attended += cfg.block_size * std::min<std::uint64_t>(cfg.select_blocks, blocks);
        loop.win_attended += std::min<std::uint64_t>(cfg.window, t);
      }
      const std::string tag = " (L=" + std::to_string(seq) + ", s=" + std::to_string(cfg.block_size) + ")";
      r.expect(closed == loop, "closed-form counts" + tag);
      r.expect(br.counts == closed, "fused kernel counters" + tag);

      const CompressedKv ckv = compress_blocks(b.k, b.v, cfg.block_size);
      const SelectionResult sel = select_blocks(b, layout, cfg, ckv);
      const BranchCounts passes{compression_pass(b, layout, ckv).count, sel.scores_evaluated,
                                selection_pass(b, layout, cfg, sel).count,
                                window_pass(b, layout, cfg).count};
      r.expect(passes == closed, "per-branch pass counters" + tag);
    }
  }
}

void selection_structure(Report& r, std::uint64_t seed) {
  const HeadLayout layout{4, 2, 8};
  const SparseConfig cfg{4, 3, 8};
  const std::size_t seq = 50;
  const QkvBatch b = random_batch(seed, layout, seq);
  const CompressedKv ckv = compress_blocks(b.k, b.v, cfg.block_size);
  r.expect(ckv.num_blocks == seq / cfg.block_size, "trailing partial block dropped");
  const SelectionResult sel = select_blocks(b, layout, cfg, ckv);
  bool ok = true;
  for (std::size_t g = 0; g < layout.kv_groups; ++g)
    for (std::size_t pos = 0; pos < seq; ++pos) {
      const auto& idx = sel.at(g, pos);
      const std::size_t visible = (pos + 1) / cfg.block_size;
      ok = ok && idx.size() == std::min(cfg.select_blocks, visible) &&
           std::is_sorted(idx.begin(), idx.end()) &&
           std::adjacent_find(idx.begin(), idx.end()) == idx.end() &&
           std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return i < visible; });
    }
  r.expect(ok, "selected blocks are visible, unique, sorted and min(n, visible) in number");

  const auto top = select_top_blocks(std::vector<double>{0.5, 0.9, 0.5, 0.9, 0.1}, 3);
  r.expect(top == std::vector<std::size_t>{0, 1, 3}, "top-n ties go to the lower index");

  double sum_err = 0.0;
  for (std::size_t s = 0; s < layout.heads; ++s)
    for (std::size_t pos = cfg.block_size - 1; pos < seq; ++pos) {
      const auto row = compression_attention(b.q.row(s, pos), ckv, group_index(s, layout), pos);
      sum_err = std::max(sum_err, std::abs(std::accumulate(row.probs.begin(), row.probs.end(), 0.0) - 1.0));
    }
  r.within(sum_err, 1e-6, "compression rows sum to 1");
  const auto early = compression_attention(b.q.row(0, 2), ckv, 0, 2);
  r.expect(early.probs.empty() && std::all_of(early.output.begin(), early.output.end(),
                                               [](float x) { return x == 0.0f; }),
           "no visible block gives a zero compression output");
}

void constant_block_compression(Report& r) {
  const std::size_t s = 4, blocks = 5, d = 3;
  Tensor k({2, s * blocks, d}), v({2, s * blocks, d});
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t t = 0; t < s * blocks; ++t)
      for (std::size_t c = 0; c < d; ++c) {
        const float base = 0.1f * float(t / s) + 0.37f * float(c) - 0.71f * float(g);
        k.at(g, t, c) = base;
        v.at(g, t, c) = -base * 3.3f;
      }
  const CompressedKv ckv = compress_blocks(k, v, s);
  bool exact = true;
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t i = 0; i < blocks; ++i)
      for (std::size_t c = 0; c < d; ++c)
        exact = exact && ckv.keys.at(g, i, c) == k.at(g, i * s, c) && ckv.values.at(g, i, c) == v.at(g, i * s, c);
  r.expect(exact, "constant blocks compress to their constant exactly");

  const QkvBatch b = random_batch(3, HeadLayout{2, 1, 4}, 20);
  const CompressedKv real = compress_blocks(b.k, b.v, 4);
  double err = 0.0;
  for (std::size_t i = 0; i < real.num_blocks; ++i) {
    const auto oracle = ref::block_mean(b.k, 0, i * 4, 4);
    for (std::size_t c = 0; c < 4; ++c) err = std::max(err, double(std::abs(Real(real.keys.at(0, i, c)) - oracle[c])));
  }
  r.within(err, 1e-6, "block means match oracle");
}

ScalingResult selection_scaling(Report& r, const ExecOptions& exec) {
  const std::vector<std::size_t> lens{1024, 2048, 4096, 8192};
  const SparseConfig cfg{64, 32, 256};
  ProfileOptions opts;
  opts.runs = 1;
  opts.exec = exec;
  ScalingResult out;
  out.report = profile_branches(lens, cfg, HeadLayout{2, 1, 8}, opts);
  r.expect(out.report.counts_match(), "measured counts equal closed forms");
  for (std::size_t seq : lens) {
    std::uint64_t sum = 0;
    for (std::uint64_t t = 1; t <= seq; ++t) sum += t / 64;
    r.expect(out.report.row(seq, "slc_score").measured == sum,
             "selection scoring count equals sum floor(t/64) at L=" + std::to_string(seq));
    if (seq >= 256) {
      r.expect(out.report.row(seq, "win").analytic == seq * 256 - 256 * 255 / 2,
               "window count closed form at L=" + std::to_string(seq));
    }
  }
  for (std::size_t i = 1; i < lens.size(); ++i) {
    const double score = double(out.report.row(lens[i], "slc_score").measured) /
                         double(out.report.row(lens[i - 1], "slc_score").measured);
    const double win = double(out.report.row(lens[i], "win").measured) /
                       double(out.report.row(lens[i - 1], "win").measured);
    out.score_ratios.push_back(score);
    out.window_ratios.push_back(win);
    r.within(std::abs(score - 4.0), 0.5, fmt("scoring ratio %.4f in [3.5, 4.5]", score));
    const double closed = double(256 * lens[i] - 32640) / double(256 * lens[i - 1] - 32640);
    r.within(std::abs(win - closed), 1e-12, fmt("window ratio %.4f follows 256L - 32640", win));
  }
  const BranchCounts big = branch_op_counts(std::size_t{1} << 20, cfg);
  r.expect(big.slc_scores > big.slc_attended && big.slc_scores > big.win_attended,
           "selection scoring dominates asymptotically");
  return out;
}

// ---------------------------------------------------------------------------

void causality_trials(Report& r, std::size_t trials, std::uint64_t seed) {
  const HeadLayout layout{4, 2, 8};
  const SparseConfig cfg{4, 2, 8};
  Rng64 rng(seed);
  const GateParams params = [&] {
    Rng64 prng(seed ^ 0x5eedULL);
    return GateParams{scaled_uniform(prng, {32, 32}, 20.0f), scaled_uniform(prng, {32}, 20.0f),
                      scaled_uniform(prng, {32, 12}, 20.0f), scaled_uniform(prng, {12}, 20.0f)};
  }();

  using Kernel = std::function<Tensor(const QkvBatch&)>;
  const std::vector<std::pair<std::string, Kernel>> kernels{
      {"dense", [&](const QkvBatch& b) { return dense_causal_attention(b, layout); }},
      {"cmp", [&](const QkvBatch& b) {
         return compression_pass(b, layout, compress_blocks(b.k, b.v, cfg.block_size)).output;
       }},
      {"slc", [&](const QkvBatch& b) {
         const CompressedKv ckv = compress_blocks(b.k, b.v, cfg.block_size);
         return selection_pass(b, layout, cfg, select_blocks(b, layout, cfg, ckv)).output;
       }},
      {"win", [&](const QkvBatch& b) { return window_pass(b, layout, cfg).output; }},
      {"hybrid", [&](const QkvBatch& b) {
         const std::size_t seq = b.seq_len();
         const std::vector<std::pair<std::size_t, std::size_t>> vision{{1, seq / 3}, {seq / 2 + 1, seq}};
         return hybrid_layer_attention(b, layout, cfg, gate_values_from_queries(b.q, params),
                                       ModalitySpans::from_vision(vision, seq));
       }},
  };

  for (const auto& [name, kernel] : kernels) {
    double worst = 0.0;
    double moved = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
      const std::size_t seq = 16 + rng.next_u64() % 49;
      const std::size_t p = 1 + rng.next_u64() % (seq - 1);
      const QkvBatch base = random_batch(rng.next_u64(), layout, seq);
      QkvBatch pert = base;
      for (std::size_t c = 0; c < layout.head_dim; ++c) {
        for (std::size_t g = 0; g < layout.kv_groups; ++g) {
          pert.k.at(g, p, c) += 0.5f + float(c);
          pert.v.at(g, p, c) -= 0.75f + float(g);
        }
        for (std::size_t s = 0; s < layout.heads; ++s) pert.q.at(s, p, c) *= -2.0f;
      }
      const Tensor a = kernel(base);
      const Tensor b = kernel(pert);
      worst = std::max(worst, prefix_diff(a, b, p));
      moved = std::max(moved, max_diff(a, b));
    }
    r.within(worst, 0.0, name + " output before the perturbed position is bit-identical");
    r.expect(moved > 0.0, name + " perturbation reaches later outputs");
  }
}

// ---------------------------------------------------------------------------

void gate_forward_oracle(Report& r, std::uint64_t seed) {
  Rng64 rng(seed);
  const std::size_t din = 16, dh = 16, heads = 3;
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const GateParams p{scaled_uniform(rng, {din, dh}, 20.0f), scaled_uniform(rng, {dh}, 20.0f),
                       scaled_uniform(rng, {dh, 3 * heads}, 20.0f), scaled_uniform(rng, {3 * heads}, 20.0f)};
    const Tensor x = scaled_uniform(rng, {din}, 20.0f);
    const auto got = gate_forward(x.data(), p);
    std::vector<Real> xr(x.data().begin(), x.data().end());
    const auto want = ref::gate_forward(xr, p.w1, p.b1, p.w2, p.b2);
    double err = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, double(std::abs(Real(got[i]) - want[i])));
    r.within(err, 1e-6, "gate forward matches oracle");
  }
  const GateParams zero{Tensor({4, 4}), Tensor({4}), Tensor({4, 6}), Tensor({6})};
  const auto half = gate_forward(std::vector<float>{1, -2, 3, 4}, zero);
  r.expect(std::all_of(half.begin(), half.end(), [](double g) { return g == 0.5; }), "zero weights give 0.5 gates");
}

GradientStats gate_gradients(Report& r, std::size_t instances, std::uint64_t seed) {
  const std::size_t din = 12, dh = 10, heads = 2, dout = 3 * heads;
  const Real step = 1e-3L;
  Rng64 rng(seed);
  GradientStats stats;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    GateParams p;
    Tensor x;
    // Resample until every hidden pre-activation stays clear of the relu kink
    // under any single +-step perturbation, so central differences are valid.
    for (;;) {
      p = GateParams{scaled_uniform(rng, {din, dh}, 20.0f), scaled_uniform(rng, {dh}, 20.0f),
                     scaled_uniform(rng, {dh, dout}, 20.0f), scaled_uniform(rng, {dout}, 20.0f)};
      x = scaled_uniform(rng, {din}, 20.0f);
      Real max_x = 1, max_w = 1;
      for (float v : x.data()) max_x = std::max(max_x, Real(std::abs(v)));
      for (float v : p.w1.data()) max_w = std::max(max_w, Real(std::abs(v)));
      const Real margin = 2 * step * std::max(max_x, max_w);
      bool clear = true;
      for (std::size_t j = 0; j < dh; ++j) {
        Real z = p.b1[j];
        for (std::size_t i = 0; i < din; ++i) z += Real(x[i]) * Real(p.w1.at(i, j));
        clear = clear && std::abs(z) > margin;
      }
      if (clear) break;
      ++stats.resampled;
    }
    std::vector<double> upstream(dout);
    for (double& u : upstream) u = 20.0 * uniform_from_u64(rng.next_u64());
    const GateGradients grad = gate_backward(x.data(), p, upstream);

    std::vector<Real> xr(x.data().begin(), x.data().end());
    std::vector<Real> w1(p.w1.data().begin(), p.w1.data().end());
    std::vector<Real> b1(p.b1.data().begin(), p.b1.data().end());
    std::vector<Real> w2(p.w2.data().begin(), p.w2.data().end());
    std::vector<Real> b2(p.b2.data().begin(), p.b2.data().end());
    auto objective = [&] {
      const auto out = ref::gate_forward(xr, w1, b1, w2, b2, din, dh, dout);
      Real acc = 0;
      for (std::size_t i = 0; i < dout; ++i) acc += Real(upstream[i]) * out[i];
      return acc;
    };
    auto probe = [&](std::vector<Real>& slots, const std::vector<double>& analytic) {
      for (std::size_t i = 0; i < slots.size(); ++i) {
        const Real saved = slots[i];
        slots[i] = saved + step;
        const Real up = objective();
        slots[i] = saved - step;
        const Real down = objective();
        slots[i] = saved;
        const double fd = double((up - down) / (2 * step));
        const double diff = std::abs(analytic[i] - fd);
        const double scale = std::max(1e-6, 1e-3 * std::max(std::abs(analytic[i]), std::abs(fd)));
        ++stats.entries;
        if (!(diff <= scale)) ++stats.failures;
        r.within(diff / scale, 1.0, "gradient entry matches central difference");
      }
    };
    probe(xr, grad.x);
    probe(w1, grad.w1);
    probe(b1, grad.b1);
    probe(w2, grad.w2);
    probe(b2, grad.b2);
    ++stats.instances;
  }
  return stats;
}

void gate_linearity_and_range(Report& r, std::uint64_t seed) {
  const HeadLayout layout{4, 2, 8};
  const SparseConfig cfg{4, 2, 8};
  const std::size_t seq = 40;
  const QkvBatch b = random_batch(seed, layout, seq);
  Rng64 rng(seed + 1);
  const std::size_t width = layout.heads * layout.head_dim;
  const GateParams p{scaled_uniform(rng, {width, width}, 20.0f), scaled_uniform(rng, {width}, 20.0f),
                     scaled_uniform(rng, {width, 3 * layout.heads}, 20.0f),
                     scaled_uniform(rng, {3 * layout.heads}, 20.0f)};
  const GateValues g = gate_values_from_queries(b.q, p);
  r.expect(g.strictly_open_unit(), "MLP gates lie strictly inside (0, 1)");

  const Tensor base = nsa_attention(b, layout, cfg, g);
  const Tensor half = nsa_attention(b, layout, cfg, g.scaled(0.5));
  double err = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) err = std::max(err, std::abs(0.5 * double(base[i]) - double(half[i])));
  r.within(err, 1e-6, "fusion is linear in the gates");

  const BranchOutputs br = run_branches(b, layout, cfg);
  const Tensor only_cmp = nsa_attention(b, layout, cfg, GateValues::constant(seq, layout.heads, {1.0, 0.0, 0.0}));
  r.within(max_diff(only_cmp, br.compression), 0.0, "gates (1,0,0) give the compression branch alone");
}

void hybrid_composition(Report& r, std::uint64_t seed) {
  const HeadLayout layout{4, 2, 8};
  const SparseConfig cfg{4, 2, 4};
  const std::size_t seq = 12;
  const QkvBatch b = random_batch(seed, layout, seq);
  Rng64 rng(seed + 2);
  const std::vector<double> raw = random_gates(rng, seq, layout.heads);
  const GateValues gates(seq, layout.heads, raw);
  const std::vector<std::pair<std::size_t, std::size_t>> vision{{1, 8}};
  const ModalitySpans spans = ModalitySpans::from_vision(vision, seq);
  const Tensor out = hybrid_layer_attention(b, layout, cfg, gates, spans);

  const Tensor dense = concat_heads(dense_causal_attention(b, layout));
  const auto oracle = ref::dense_causal(b.q, b.k, b.v, layout.kv_groups);
  double text = 0.0, text_oracle = 0.0;
  for (std::size_t pos = 8; pos < seq; ++pos) {
    const auto a = out.row(pos), d = dense.row(pos);
    for (std::size_t i = 0; i < a.size(); ++i) text = std::max(text, double(std::abs(a[i] - d[i])));
    for (std::size_t h = 0; h < layout.heads; ++h)
      for (std::size_t c = 0; c < layout.head_dim; ++c)
        text_oracle = std::max(text_oracle, double(std::abs(Real(out.at(pos, h * layout.head_dim + c)) -
                                                            oracle[(h * seq + pos) * layout.head_dim + c])));
  }
  r.within(text, 1e-6, "text rows equal dense GQA rows");
  r.within(text_oracle, 1e-6, "text rows match the dense oracle");

  std::vector<std::size_t> vis(8);
  std::iota(vis.begin(), vis.end(), 0);
  const Tensor nsa = concat_heads(nsa_attention(gather_positions(b, vis), layout, cfg, gates.subset(vis)));
  r.within(prefix_diff(out, nsa, 8), 1e-6, "vision rows equal standalone NSA on the vision tokens");

  const Tensor all_text = hybrid_layer_attention(b, layout, cfg, gates, ModalitySpans::all(Modality::kText, seq));
  r.within(max_diff(all_text, dense), 0.0, "all-text spans equal dense GQA bit-exactly");

  const SparseConfig full{4, 3, seq};
  const Tensor all_vision = hybrid_layer_attention(b, layout, full, GateValues::constant(seq, layout.heads, {0.0, 0.5, 0.5}),
                                                   ModalitySpans::all(Modality::kVision, seq));
  double vis_err = 0.0;
  for (std::size_t pos = 3; pos < seq; pos += 4)
    for (std::size_t h = 0; h < layout.heads; ++h)
      for (std::size_t c = 0; c < layout.head_dim; ++c)
        vis_err = std::max(vis_err, double(std::abs(Real(all_vision.at(pos, h * layout.head_dim + c)) -
                                                    oracle[(h * seq + pos) * layout.head_dim + c])));
  r.within(vis_err, 1e-5, "all-vision full budget equals dense at block boundaries");

  r.throws(ErrorKind::kValidation,
           [&] {
             ModalitySpans bad{{{1, 5, Modality::kVision}, {7, seq, Modality::kText}}};
             hybrid_layer_attention(b, layout, cfg, gates, bad);
           },
           "gapped spans rejected");
}

void thread_invariance(Report& r, std::uint64_t seed) {
  const HeadLayout layout{4, 2, 8};
  const SparseConfig cfg{4, 2, 8};
  const std::size_t seq = 45;
  const QkvBatch b = random_batch(seed, layout, seq);
  Rng64 rng(seed + 3);
  const GateValues gates(seq, layout.heads, random_gates(rng, seq, layout.heads));
  const ModalitySpans spans = ModalitySpans::from_vision(std::vector<std::pair<std::size_t, std::size_t>>{{5, 30}}, seq);
  const ExecOptions one{1}, four{4};
  r.within(max_diff(dense_causal_attention(b, layout, one), dense_causal_attention(b, layout, four)), 0.0,
           "dense attention independent of thread count");
  const BranchOutputs a = run_branches(b, layout, cfg, one);
  const BranchOutputs c = run_branches(b, layout, cfg, four);
  r.within(std::max({max_diff(a.compression, c.compression), max_diff(a.selection, c.selection),
                     max_diff(a.window, c.window)}),
           0.0, "branches independent of thread count");
  r.within(max_diff(hybrid_layer_attention(b, layout, cfg, gates, spans, one),
                    hybrid_layer_attention(b, layout, cfg, gates, spans, four)),
           0.0, "hybrid layer independent of thread count");
}

// ---------------------------------------------------------------------------

void budget_identity(Report& r) {
  r.expect(attention_budget(32, 64, 256) == 2304, "K_attn for the default configuration");
  r.within(std::abs(100.0 * attention_fraction(32, 64, 256, 128000) - 3.6), 0.05, "3.6% headline");
  r.within(std::abs(100.0 * attention_fraction(0, 64, 256, 1000) - 51.25), 0.005, "budget 0 64 256 1000");
  r.within(std::abs(100.0 * attention_fraction(32, 64, 256, info_context_length(64, 512)) - 14.06), 0.005,
           "budget over 512 frames of 64 tokens");
  for (const auto& [b, s, w, L] : std::vector<std::array<std::uint64_t, 4>>{
           {32, 64, 256, 128000}, {0, 64, 256, 1000}, {1, 1, 0, 2}, {7, 16, 100, 99991}, {32, 64, 256, 32768}}) {
    const double lhs = attention_fraction(b, s, w, L) * double(L - 1) / 2.0;
    const double rhs = double(attention_budget(b, s, w));
    r.within(std::abs(lhs - rhs) / std::max(1.0, rhs), 1e-12, "fraction times (L-1)/2 equals budget");
  }
  r.throws(ErrorKind::kDomain, [] { attention_fraction(32, 64, 256, 1); }, "L < 2 rejected");
}

void sink_fixtures(Report& r, std::size_t shuffles, std::uint64_t seed) {
  auto expect_flags = [&](const std::vector<double>& alpha, const std::vector<double>& norm,
                          const std::vector<std::size_t>& want, const std::string& what) {
    const SinkReport rep = detect_sinks(alpha, norm);
    r.expect(rep.flagged() == want, what);
    // Both conjuncts hold for flagged tokens and at least one fails otherwise.
    const double med = double(ref::order_statistic_quantile(norm, 0.5));
    const double iqr = double(ref::order_statistic_quantile(norm, 0.75) - ref::order_statistic_quantile(norm, 0.25));
    bool consistent = true;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      const bool both = alpha[i] > 0.1 && norm[i] < med - 2.0 * iqr;
      consistent = consistent && both == bool(rep.is_sink[i]);
    }
    r.expect(consistent, what + ": flags equal the two-conjunct rule");
    const SinkReport again = detect_sinks(rep.alpha, rep.vnorm);
    r.expect(again.is_sink == rep.is_sink, what + ": idempotent");
  };

  std::vector<double> alpha(20, 0.02), norm(20);
  for (std::size_t i = 0; i < 20; ++i) norm[i] = 1.0 + 0.01 * double(i);
  alpha[7] = 0.5;
  norm[7] = 0.01;
  expect_flags(alpha, norm, {7}, "planted sink flagged alone");

  std::vector<double> flat(20, 1.0);
  std::vector<double> loud(20, 0.5);
  expect_flags(loud, flat, {}, "equal norms give no sinks");

  std::vector<double> sub = alpha;
  sub[7] = 0.1;
  expect_flags(sub, norm, {}, "alpha exactly 0.1 is not a sink");

  std::vector<double> grid_alpha(10, 0.1), grid_norm{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  expect_flags(grid_alpha, grid_norm, {}, "sub-threshold alpha everywhere gives no sinks");

  Rng64 rng(seed);
  std::vector<double> a(40), n(40);
  for (std::size_t i = 0; i < 40; ++i) {
    a[i] = 0.06 + double(uniform_from_u64(rng.next_u64()));
    n[i] = 10.0 + 10.0 * double(uniform_from_u64(rng.next_u64()));
  }
  for (std::size_t i : {3u, 17u, 31u}) {
    a[i] = 0.3;
    n[i] = 0.05 * double(i);
  }
  const SinkReport base = detect_sinks(a, n);
  r.expect(base.sink_count == 3, "three planted sinks among random tokens");
  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  bool equivariant = true;
  for (std::size_t trial = 0; trial < shuffles; ++trial) {
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.next_u64() % (i + 1)]);
    std::vector<double> pa(40), pn(40);
    for (std::size_t i = 0; i < 40; ++i) {
      pa[i] = a[perm[i]];
      pn[i] = n[perm[i]];
    }
    const SinkReport shuffled = detect_sinks(pa, pn);
    for (std::size_t i = 0; i < 40; ++i) equivariant = equivariant && shuffled.is_sink[i] == base.is_sink[perm[i]];
  }
  r.expect(equivariant, "sink flags permute with the tokens");
}

void alpha_range(Report& r, std::uint64_t seed) {
  Rng64 rng(seed);
  const std::size_t seq = 30;
  std::vector<std::vector<double>> rows(seq);
  for (std::size_t t = 0; t < seq; ++t) {
    std::vector<double> logits(t + 1);
    for (double& x : logits) x = 100.0 * uniform_from_u64(rng.next_u64());
    rows[t] = stable_softmax(logits);
  }
  const auto alpha = compute_alphas(rows, seq);
  r.expect(std::all_of(alpha.begin(), alpha.end(), [](double x) { return x >= 0.0 && x <= 1.0; }),
           "alpha values lie in [0, 1]");
  const auto uniform = compute_alphas({{1.0}, {0.5, 0.5}, {1.0 / 3, 1.0 / 3, 1.0 / 3}}, 3);
  r.within(std::abs(uniform[0] - 11.0 / 18.0) + std::abs(uniform[1] - 5.0 / 12.0) + std::abs(uniform[2] - 1.0 / 3.0),
           1e-12, "uniform causal rows give alphas 11/18, 5/12, 1/3");
}

void gate_stat_oracles(Report& r, std::size_t instances, std::uint64_t seed) {
  Rng64 rng(seed);
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const std::size_t tokens = 20 + inst * 3, heads = 2 + inst % 5;
    const GateValues g(tokens, heads, random_gates(rng, tokens, heads));
    const GateStats stats = gate_statistics(std::span<const GateValues>(&g, 1));
    for (Branch b : kAllBranches) {
      std::vector<double> pop;
      std::vector<std::vector<double>> series(heads, std::vector<double>(tokens));
      for (std::size_t t = 0; t < tokens; ++t)
        for (std::size_t s = 0; s < heads; ++s) {
          pop.push_back(g.at(t, s, b));
          series[s][t] = g.at(t, s, b);
        }
      Real corr = 0;
      std::size_t pairs = 0;
      for (std::size_t i = 0; i < heads; ++i)
        for (std::size_t j = i + 1; j < heads; ++j, ++pairs) corr += ref::pearson(series[i], series[j]);
      corr /= Real(pairs);
      const auto& got = stats.layers[0][static_cast<std::size_t>(b)];
      const std::string tag = std::string(" (") + std::string(branch_name(b)) + ")";
      r.within(std::abs(got.mean - double(ref::mean(pop))), 1e-6, "gate mean matches oracle" + tag);
      r.within(std::abs(got.iqr - double(ref::order_statistic_quantile(pop, 0.75) -
                                         ref::order_statistic_quantile(pop, 0.25))),
               1e-6, "gate IQR matches oracle" + tag);
      r.expect(got.inter_head_corr.has_value(), "correlation present" + tag);
      r.within(std::abs(got.inter_head_corr.value_or(NAN) - double(corr)), 1e-6, "gate correlation matches oracle" + tag);
      r.within(std::abs(inter_head_similarity(g, b) - double(corr)), 1e-6, "inter-head similarity matches oracle" + tag);
    }
  }
  std::vector<double> ramp;
  for (int i = 1; i <= 10; ++i) ramp.insert(ramp.end(), {0.1 * i, 0.1 * i, 0.1 * i});
  const GateValues line(10, 1, ramp);
  const GateStats ls = gate_statistics(std::span<const GateValues>(&line, 1));
  r.within(std::abs(ls.layers[0][0].mean - 0.55) + std::abs(ls.layers[0][0].iqr - 0.45), 1e-12,
           "gates 0.1..1.0 give mean 0.55 and IQR 0.45");
  const GateValues half = GateValues::constant(8, 3, {0.5, 0.5, 0.5});
  r.within(std::abs(inter_head_similarity(half, Branch::kWindow)), 0.0, "constant gates correlate 0");
}

void inter_head_properties(Report& r, std::uint64_t seed) {
  Rng64 rng(seed);
  const std::size_t tokens = 25, heads = 4;
  std::vector<double> raw(tokens * heads * kNumBranches);
  for (double& x : raw) x = 0.45 + 4.0 * double(uniform_from_u64(rng.next_u64()));
  const GateValues g(tokens, heads, raw);
  std::vector<double> reversed(raw.size()), shifted(raw);
  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t s = 0; s < heads; ++s)
      for (std::size_t b = 0; b < kNumBranches; ++b)
        reversed[(t * heads + s) * kNumBranches + b] = raw[(t * heads + (heads - 1 - s)) * kNumBranches + b];
  for (double& x : shifted) x += 0.2;
  const GateValues rev(tokens, heads, reversed), up(tokens, heads, shifted);
  for (Branch b : kAllBranches) {
    const double base = inter_head_similarity(g, b);
    r.within(std::abs(base - inter_head_similarity(rev, b)), 1e-12, "similarity symmetric in head order");
    r.within(std::abs(base - inter_head_similarity(up, b)), 1e-9, "similarity invariant to a constant shift");
  }
  std::vector<double> twin;
  for (std::size_t t = 0; t < tokens; ++t) {
    const double v = 0.1 + 0.03 * double(t);
    for (std::size_t s = 0; s < 2; ++s) twin.insert(twin.end(), {v, v, v});
  }
  r.within(std::abs(inter_head_similarity(GateValues(tokens, 2, twin), Branch::kSelection) - 1.0), 1e-12,
           "identical heads correlate 1");
}

// ---------------------------------------------------------------------------

void config_and_csv(Report& r) {
  const cli::RunConfig defaults = cli::parse_config("");
  r.expect(defaults.sparse.block_size == 64 && defaults.sparse.select_blocks == 32 && defaults.sparse.window == 256 &&
               defaults.layout.heads == 28 && defaults.layout.kv_groups == 4 && defaults.layout.head_dim == 128,
           "empty config yields defaults");
  r.throws(ErrorKind::kValidation, [] { cli::parse_config("block_size = 0\n"); }, "block_size 0 rejected");
  r.throws(ErrorKind::kValidation, [] { cli::parse_config("heads = 6\nkv_heads = 4\n"); }, "heads not divisible rejected");
  r.throws(ErrorKind::kValidation, [] { cli::parse_config("speed = 3\n"); }, "unknown key rejected");

  SinkReport sinks = detect_sinks(std::vector<double>{0.5, 0.02, 0.02, 0.02, 0.02},
                                  std::vector<double>{0.01, 1.0, 1.1, 1.2, 1.3});
  const CsvTable sink_rows = parse_csv(sink_report_csv(sinks));
  r.expect(sink_rows.size() == 6 && sink_rows[0] == std::vector<std::string>{"token_index", "alpha", "vnorm", "is_sink"},
           "sink CSV parses back with header and one row per token");
  bool numbers = sink_rows.size() == 6;
  for (std::size_t i = 1; numbers && i < sink_rows.size(); ++i)
    numbers = std::stod(sink_rows[i][1]) == std::stod(format_double(sinks.alpha[i - 1]));
  r.expect(numbers, "sink CSV values round-trip");

  const GateValues g = GateValues::constant(4, 2, {0.2, 0.5, 0.8});
  const CsvTable gate_rows = parse_csv(gate_stats_csv(gate_statistics(std::span<const GateValues>(&g, 1))));
  r.expect(gate_rows.size() == 1 + kNumBranches && gate_rows[0].size() == 5, "gate stats CSV shape");
}

}  // namespace vnsa::checks
