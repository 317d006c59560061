#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vnsa/dense_attention.hpp"
#include "vnsa/gating.hpp"
#include "vnsa/nsa_branches.hpp"

namespace vnsa::cli {

/// Validated run configuration. Defaults follow the reference training
/// setup: s=64, n=32, w=256 with 28 query heads over 4 KV heads.
struct RunConfig {
  HeadLayout layout{28, 4, 128};
  SparseConfig sparse{64, 32, 256};
  std::size_t seq_len = 512;
  std::optional<std::size_t> tokens_per_frame;
  std::optional<std::size_t> frames;
  std::uint64_t seed = 0;
  /// 1-based inclusive vision ranges; nullopt means the whole sequence is vision.
  std::optional<std::vector<std::pair<std::size_t, std::size_t>>> vision_spans;
  /// Constant (cmp, slc, win) gates replacing the MLP when set.
  std::optional<std::array<double, kNumBranches>> gate_override;
  std::filesystem::path fixture_dir = "vnsa_out";
  std::filesystem::path output_dir = "vnsa_out";

  ModalitySpans spans() const;
  void validate() const;
};

/// `key = value` lines, '#' starts a comment, unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace vnsa::cli
