#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "vnsa/dense_attention.hpp"
#include "vnsa/nsa_branches.hpp"
#include "vnsa/parallel.hpp"
#include "vnsa/tensor.hpp"

namespace vnsa {

enum class Branch : std::size_t { kCompression = 0, kSelection = 1, kWindow = 2 };
inline constexpr std::size_t kNumBranches = 3;
inline constexpr std::array<Branch, kNumBranches> kAllBranches = {
    Branch::kCompression, Branch::kSelection, Branch::kWindow};

std::string_view branch_name(Branch b);

/// Gate MLP: hidden = relu(x W1 + b1), gates = sigmoid(hidden W2 + b2),
/// with W2 producing 3 gates per query head laid out as [head][branch].
struct GateParams {
  Tensor w1;  // [d_in x d_hidden]
  Tensor b1;  // [d_hidden]
  Tensor w2;  // [d_hidden x 3h]
  Tensor b2;  // [3h]

  std::size_t input_dim() const { return w1.dims()[0]; }
  std::size_t hidden_dim() const { return w1.dims()[1]; }
  std::size_t heads() const { return w2.dims()[1] / kNumBranches; }
  void validate() const;

  static GateParams seeded(Rng64& rng, std::size_t input_dim, std::size_t hidden_dim,
                           std::size_t heads);
  /// Files W1.vnsa, b1.vnsa, W2.vnsa, b2.vnsa under `dir`.
  void save(const std::filesystem::path& dir) const;
  static GateParams load(const std::filesystem::path& dir);
};

/// Gate weights for every token, head and branch.
class GateValues {
 public:
  GateValues() = default;
  GateValues(std::size_t tokens, std::size_t heads);
  GateValues(std::size_t tokens, std::size_t heads, std::vector<double> data);

  /// Same triple for every (token, head).
  static GateValues constant(std::size_t tokens, std::size_t heads,
                             const std::array<double, kNumBranches>& triple);

  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t heads() const noexcept { return heads_; }

  double at(std::size_t token, std::size_t head, Branch b) const {
    return data_[(token * heads_ + head) * kNumBranches + static_cast<std::size_t>(b)];
  }
  double& at(std::size_t token, std::size_t head, Branch b) {
    return data_[(token * heads_ + head) * kNumBranches + static_cast<std::size_t>(b)];
  }
  std::span<double> token_row(std::size_t token) {
    return std::span<double>(data_).subspan(token * heads_ * kNumBranches, heads_ * kNumBranches);
  }
  const std::vector<double>& values() const noexcept { return data_; }

  /// Rows for the listed tokens, in order.
  GateValues subset(std::span<const std::size_t> tokens) const;
  GateValues scaled(double factor) const;

  /// True when every entry is finite and strictly inside (0, 1).
  bool strictly_open_unit() const;

 private:
  std::size_t tokens_ = 0;
  std::size_t heads_ = 0;
  std::vector<double> data_;
};

/// Forward pass for one token; returns 3h gates ordered [head][branch].
std::vector<double> gate_forward(std::span<const float> x, const GateParams& params);

/// Gates for every token, using the concatenated per-head query row as input.
GateValues gate_values_from_queries(const Tensor& q, const GateParams& params,
                                    const ExecOptions& opts = {});

struct GateGradients {
  std::vector<double> x;
  std::vector<double> w1;  // row-major like GateParams::w1
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> b2;
};

/// Gradients of sum(upstream .* gate_forward(x)). The relu derivative at 0 is 0.
GateGradients gate_backward(std::span<const float> x, const GateParams& params,
                            std::span<const double> upstream);

/// o = g_cmp * o_cmp + g_slc * o_slc + g_win * o_win, per head and position.
Tensor fuse_branches(const BranchOutputs& branches, const GateValues& gates);

Tensor nsa_attention(const QkvBatch& batch, const HeadLayout& layout, const SparseConfig& sparse,
                     const GateValues& gates, const ExecOptions& opts = {});

enum class Modality { kVision, kText };

/// Ordered, disjoint spans covering positions 1..L (1-based, inclusive).
struct ModalitySpans {
  struct Span {
    std::size_t first;
    std::size_t last;
    Modality modality;
  };
  std::vector<Span> spans;

  void validate(std::size_t seq_len) const;
  /// Vision ranges as given; every gap becomes text.
  static ModalitySpans from_vision(std::span<const std::pair<std::size_t, std::size_t>> vision,
                                   std::size_t seq_len);
  static ModalitySpans all(Modality m, std::size_t seq_len);

  /// 0-based positions of each modality, ascending.
  std::vector<std::size_t> positions(Modality m) const;
};

struct HybridResult {
  Tensor output;               // [L x h*d_k]
  BranchCounts vision_counts;  // branch counters of the vision NSA pass
  std::size_t vision_tokens = 0;
  std::size_t text_tokens = 0;
};

HybridResult run_hybrid_layer(const QkvBatch& batch, const HeadLayout& layout,
                              const SparseConfig& sparse, const GateValues& gates,
                              const ModalitySpans& spans, const ExecOptions& opts = {});

/// Vision queries run NSA over the preceding vision tokens only; text queries
/// run dense GQA over everything before them. Result is [L x h*d_k].
Tensor hybrid_layer_attention(const QkvBatch& batch, const HeadLayout& layout,
                              const SparseConfig& sparse, const GateValues& gates,
                              const ModalitySpans& spans, const ExecOptions& opts = {});

/// Rows `positions` of every tensor in the batch (sequence axis).
QkvBatch gather_positions(const QkvBatch& batch, std::span<const std::size_t> positions);

}  // namespace vnsa
