#include "vnsa/gating.hpp"

#include <algorithm>
#include <cmath>

#include "vnsa/error.hpp"

namespace vnsa {

std::string_view branch_name(Branch b) {
  switch (b) {
    case Branch::kCompression: return "cmp";
    case Branch::kSelection: return "slc";
    case Branch::kWindow: return "win";
  }
  return "?";
}

void GateParams::validate() const {
  if (w1.rank() != 2 || w2.rank() != 2 || b1.rank() != 1 || b2.rank() != 1) {
    fail(ErrorKind::kShape, "gate params must be W1/W2 rank 2 and b1/b2 rank 1");
  }
  if (b1.dims()[0] != w1.dims()[1] || w2.dims()[0] != w1.dims()[1] ||
      b2.dims()[0] != w2.dims()[1] || w2.dims()[1] % kNumBranches != 0) {
    fail(ErrorKind::kShape, "gate params inconsistent: W1" + shape_to_string(w1.dims()) + " b1" +
                                shape_to_string(b1.dims()) + " W2" + shape_to_string(w2.dims()) +
                                " b2" + shape_to_string(b2.dims()));
  }
}

GateParams GateParams::seeded(Rng64& rng, std::size_t input_dim, std::size_t hidden_dim,
                              std::size_t heads) {
  GateParams p;
  p.w1 = seeded_uniform(rng, {input_dim, hidden_dim});
  p.b1 = seeded_uniform(rng, {hidden_dim});
  p.w2 = seeded_uniform(rng, {hidden_dim, kNumBranches * heads});
  p.b2 = seeded_uniform(rng, {kNumBranches * heads});
  return p;
}

void GateParams::save(const std::filesystem::path& dir) const {
  validate();
  save_tensor(dir / "W1.vnsa", w1);
  save_tensor(dir / "b1.vnsa", b1);
  save_tensor(dir / "W2.vnsa", w2);
  save_tensor(dir / "b2.vnsa", b2);
}

GateParams GateParams::load(const std::filesystem::path& dir) {
  GateParams p;
  p.w1 = load_tensor(dir / "W1.vnsa");
  p.b1 = load_tensor(dir / "b1.vnsa");
  p.w2 = load_tensor(dir / "W2.vnsa");
  p.b2 = load_tensor(dir / "b2.vnsa");
  p.validate();
  return p;
}

GateValues::GateValues(std::size_t tokens, std::size_t heads)
    : tokens_(tokens), heads_(heads), data_(tokens * heads * kNumBranches, 0.0) {}

GateValues::GateValues(std::size_t tokens, std::size_t heads, std::vector<double> data)
    : tokens_(tokens), heads_(heads), data_(std::move(data)) {
  if (data_.size() != tokens * heads * kNumBranches) {
    fail(ErrorKind::kShape, "gate values need " + std::to_string(tokens * heads * kNumBranches) +
                                " entries, got " + std::to_string(data_.size()));
  }
  for (double g : data_) {
    if (!std::isfinite(g) || g < 0.0 || g > 1.0) {
      fail(ErrorKind::kValidation, "gate values must be finite and within [0, 1]");
    }
  }
}

GateValues GateValues::constant(std::size_t tokens, std::size_t heads,
                                const std::array<double, kNumBranches>& triple) {
  std::vector<double> data;
  data.reserve(tokens * heads * kNumBranches);
  for (std::size_t i = 0; i < tokens * heads; ++i) data.insert(data.end(), triple.begin(), triple.end());
  return GateValues(tokens, heads, std::move(data));
}

GateValues GateValues::subset(std::span<const std::size_t> tokens) const {
  std::vector<double> data;
  data.reserve(tokens.size() * heads_ * kNumBranches);
  const std::size_t width = heads_ * kNumBranches;
  for (std::size_t t : tokens) {
    if (t >= tokens_) fail(ErrorKind::kIndex, "gate token " + std::to_string(t) + " out of range");
    data.insert(data.end(), data_.begin() + static_cast<std::ptrdiff_t>(t * width),
                data_.begin() + static_cast<std::ptrdiff_t>((t + 1) * width));
  }
  return GateValues(tokens.size(), heads_, std::move(data));
}

GateValues GateValues::scaled(double factor) const {
  std::vector<double> data(data_);
  for (double& g : data) g *= factor;
  return GateValues(tokens_, heads_, std::move(data));
}

bool GateValues::strictly_open_unit() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double g) { return std::isfinite(g) && g > 0.0 && g < 1.0; });
}

namespace {

double sigmoid(double z) {
  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  // Keep the open interval even where double rounding saturates.
  return std::clamp(s, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

struct ForwardTrace {
  std::vector<double> pre_hidden;
  std::vector<double> hidden;
  std::vector<double> gates;
};

ForwardTrace forward_trace(std::span<const float> x, const GateParams& params) {
  params.validate();
  const std::size_t din = params.input_dim();
  const std::size_t dh = params.hidden_dim();
  const std::size_t dout = params.w2.dims()[1];
  if (x.size() != din) {
    fail(ErrorKind::kShape, "gate input has " + std::to_string(x.size()) + " features, W1 expects " +
                                std::to_string(din));
  }
  ForwardTrace tr;
  tr.pre_hidden.assign(dh, 0.0);
  const auto w1 = params.w1.data();
  for (std::size_t i = 0; i < din; ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < dh; ++j) tr.pre_hidden[j] += xi * w1[i * dh + j];
  }
  tr.hidden.resize(dh);
  for (std::size_t j = 0; j < dh; ++j) {
    tr.pre_hidden[j] += params.b1[j];
    tr.hidden[j] = tr.pre_hidden[j] > 0.0 ? tr.pre_hidden[j] : 0.0;
  }
  std::vector<double> pre_out(dout, 0.0);
  const auto w2 = params.w2.data();
  for (std::size_t j = 0; j < dh; ++j) {
    const double hj = tr.hidden[j];
    if (hj == 0.0) continue;
    for (std::size_t k = 0; k < dout; ++k) pre_out[k] += hj * w2[j * dout + k];
  }
  tr.gates.resize(dout);
  for (std::size_t k = 0; k < dout; ++k) tr.gates[k] = sigmoid(pre_out[k] + params.b2[k]);
  return tr;
}

}  // namespace

std::vector<double> gate_forward(std::span<const float> x, const GateParams& params) {
  return forward_trace(x, params).gates;
}

GateValues gate_values_from_queries(const Tensor& q, const GateParams& params,
                                    const ExecOptions& opts) {
  params.validate();
  if (q.rank() != 3) fail(ErrorKind::kShape, "queries must be [h x L x d_k]");
  const std::size_t heads = q.dims()[0];
  const std::size_t seq = q.dims()[1];
  const std::size_t d = q.dims()[2];
  if (params.heads() != heads || params.input_dim() != heads * d) {
    fail(ErrorKind::kShape, "gate params expect input " + std::to_string(params.input_dim()) +
                                " and " + std::to_string(params.heads()) + " heads; queries are " +
                                shape_to_string(q.dims()));
  }
  GateValues gates(seq, heads);
  parallel_for(seq, opts, [&](std::size_t t) {
    std::vector<float> x(heads * d);
    for (std::size_t s = 0; s < heads; ++s) {
      const auto row = q.row(s, t);
      std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(s * d));
    }
    const auto g = gate_forward(x, params);
    std::copy(g.begin(), g.end(), gates.token_row(t).begin());
  });
  return gates;
}

GateGradients gate_backward(std::span<const float> x, const GateParams& params,
                            std::span<const double> upstream) {
  const ForwardTrace tr = forward_trace(x, params);
  const std::size_t din = params.input_dim();
  const std::size_t dh = params.hidden_dim();
  const std::size_t dout = params.w2.dims()[1];
  if (upstream.size() != dout) {
    fail(ErrorKind::kShape, "upstream gradient has " + std::to_string(upstream.size()) +
                                " entries, expected " + std::to_string(dout));
  }
  GateGradients g;
  g.b2.resize(dout);
  for (std::size_t k = 0; k < dout; ++k) {
    const double s = tr.gates[k];
    g.b2[k] = upstream[k] * s * (1.0 - s);
  }
  const auto w2 = params.w2.data();
  g.w2.assign(dh * dout, 0.0);
  std::vector<double> dhidden(dh, 0.0);
  for (std::size_t j = 0; j < dh; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < dout; ++k) {
      g.w2[j * dout + k] = tr.hidden[j] * g.b2[k];
      acc += w2[j * dout + k] * g.b2[k];
    }
    dhidden[j] = acc;
  }
  g.b1.resize(dh);
  for (std::size_t j = 0; j < dh; ++j) g.b1[j] = tr.pre_hidden[j] > 0.0 ? dhidden[j] : 0.0;

  const auto w1 = params.w1.data();
  g.w1.assign(din * dh, 0.0);
  g.x.assign(din, 0.0);
  for (std::size_t i = 0; i < din; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dh; ++j) {
      g.w1[i * dh + j] = static_cast<double>(x[i]) * g.b1[j];
      acc += w1[i * dh + j] * g.b1[j];
    }
    g.x[i] = acc;
  }
  return g;
}

Tensor fuse_branches(const BranchOutputs& branches, const GateValues& gates) {
  const Shape& shape = branches.compression.dims();
  const std::size_t heads = shape[0];
  const std::size_t seq = shape[1];
  const std::size_t d = shape[2];
  if (gates.tokens() != seq || gates.heads() != heads) {
    fail(ErrorKind::kShape, "gates cover " + std::to_string(gates.tokens()) + " tokens x " +
                                std::to_string(gates.heads()) + " heads; branches need " +
                                std::to_string(seq) + " x " + std::to_string(heads));
  }
  Tensor out(shape);
  for (std::size_t s = 0; s < heads; ++s) {
    for (std::size_t t = 0; t < seq; ++t) {
      const double gc = gates.at(t, s, Branch::kCompression);
      const double gs = gates.at(t, s, Branch::kSelection);
      const double gw = gates.at(t, s, Branch::kWindow);
      const auto oc = branches.compression.row(s, t);
      const auto os = branches.selection.row(s, t);
      const auto ow = branches.window.row(s, t);
      auto dst = out.row(s, t);
      for (std::size_t c = 0; c < d; ++c) {
        double acc = gc * oc[c];
        acc += gs * os[c];
        acc += gw * ow[c];
        dst[c] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor nsa_attention(const QkvBatch& batch, const HeadLayout& layout, const SparseConfig& sparse,
                     const GateValues& gates, const ExecOptions& opts) {
  return fuse_branches(run_branches(batch, layout, sparse, opts), gates);
}

void ModalitySpans::validate(std::size_t seq_len) const {
  std::size_t next = 1;
  for (const Span& s : spans) {
    if (s.first != next || s.last < s.first) {
      fail(ErrorKind::kValidation, "modality spans must be ascending, disjoint and contiguous; "
                                   "expected a span starting at " + std::to_string(next) +
                                   ", got [" + std::to_string(s.first) + ", " +
                                   std::to_string(s.last) + "]");
    }
    next = s.last + 1;
  }
  if (next != seq_len + 1) {
    fail(ErrorKind::kValidation, "modality spans cover [1, " + std::to_string(next - 1) +
                                     "] but the sequence has " + std::to_string(seq_len) +
                                     " tokens");
  }
}

ModalitySpans ModalitySpans::from_vision(
    std::span<const std::pair<std::size_t, std::size_t>> vision, std::size_t seq_len) {
  ModalitySpans out;
  std::size_t next = 1;
  for (const auto& [first, last] : vision) {
    if (first < next || last < first || last > seq_len) {
      fail(ErrorKind::kValidation, "vision span " + std::to_string(first) + "-" +
                                       std::to_string(last) +
                                       " is out of order, overlapping or outside [1, " +
                                       std::to_string(seq_len) + "]");
    }
    if (first > next) out.spans.push_back({next, first - 1, Modality::kText});
    out.spans.push_back({first, last, Modality::kVision});
    next = last + 1;
  }
  if (next <= seq_len) out.spans.push_back({next, seq_len, Modality::kText});
  out.validate(seq_len);
  return out;
}

ModalitySpans ModalitySpans::all(Modality m, std::size_t seq_len) {
  if (seq_len == 0) fail(ErrorKind::kEmptySequence, "empty sequence (L = 0)");
  return ModalitySpans{{{1, seq_len, m}}};
}

std::vector<std::size_t> ModalitySpans::positions(Modality m) const {
  std::vector<std::size_t> out;
  for (const Span& s : spans) {
    if (s.modality != m) continue;
    for (std::size_t p = s.first; p <= s.last; ++p) out.push_back(p - 1);
  }
  return out;
}

QkvBatch gather_positions(const QkvBatch& batch, std::span<const std::size_t> positions) {
  auto gather = [&](const Tensor& t) {
    const std::size_t lead = t.dims()[0];
    const std::size_t d = t.dims()[2];
    Tensor out({lead, positions.size(), d});
    for (std::size_t a = 0; a < lead; ++a) {
      for (std::size_t i = 0; i < positions.size(); ++i) {
        const auto src = t.row(a, positions[i]);
        std::copy(src.begin(), src.end(), out.row(a, i).begin());
      }
    }
    return out;
  };
  return QkvBatch{gather(batch.q), gather(batch.k), gather(batch.v)};
}

HybridResult run_hybrid_layer(const QkvBatch& batch, const HeadLayout& layout,
                              const SparseConfig& sparse, const GateValues& gates,
                              const ModalitySpans& spans, const ExecOptions& opts) {
  if (batch.seq_len() == 0) fail(ErrorKind::kEmptySequence, "empty sequence (L = 0)");
  batch.validate(layout);
  const std::size_t seq = batch.seq_len();
  spans.validate(seq);
  if (gates.tokens() != seq || gates.heads() != layout.heads) {
    fail(ErrorKind::kShape, "gates must cover every token and head of the batch");
  }

  Tensor per_head({layout.heads, seq, layout.head_dim});
  const std::vector<std::size_t> vision = spans.positions(Modality::kVision);
  const std::vector<std::size_t> text = spans.positions(Modality::kText);

  HybridResult result;
  result.vision_tokens = vision.size();
  result.text_tokens = text.size();
  if (!vision.empty()) {
    const QkvBatch sub = gather_positions(batch, vision);
    const BranchOutputs branches = run_branches(sub, layout, sparse, opts);
    result.vision_counts = branches.counts;
    const Tensor o = fuse_branches(branches, gates.subset(vision));
    for (std::size_t s = 0; s < layout.heads; ++s) {
      for (std::size_t i = 0; i < vision.size(); ++i) {
        const auto src = o.row(s, i);
        std::copy(src.begin(), src.end(), per_head.row(s, vision[i]).begin());
      }
    }
  }
  parallel_for(layout.heads * text.size(), opts, [&](std::size_t idx) {
    const std::size_t s = idx / text.size();
    const std::size_t pos = text[idx % text.size()];
    const AttentionRow row = dense_attention_row(batch, layout, s, pos);
    std::copy(row.output.begin(), row.output.end(), per_head.row(s, pos).begin());
  });
  result.output = concat_heads(per_head);
  return result;
}

Tensor hybrid_layer_attention(const QkvBatch& batch, const HeadLayout& layout,
                              const SparseConfig& sparse, const GateValues& gates,
                              const ModalitySpans& spans, const ExecOptions& opts) {
  return run_hybrid_layer(batch, layout, sparse, gates, spans, opts).output;
}

}  // namespace vnsa
