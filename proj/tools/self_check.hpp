#pragma once

#include <ostream>

#include "checks.hpp"

namespace vnsa::cli {

struct CheckOptions {
  std::uint64_t seed = 0;
  /// Test hook: pushes every numeric tolerance below zero.
  bool corrupt_tolerance = false;
};

/// Runs every invariant suite on built-in seeded fixtures and prints one
/// line per suite. Returns 0 iff all suites pass.
int cmd_check(const CheckOptions& options, std::ostream& out);

}  // namespace vnsa::cli
