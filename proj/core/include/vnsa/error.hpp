#pragma once

#include <stdexcept>
#include <string>

namespace vnsa {

enum class ErrorKind {
  kShape,
  kIndex,
  kDomain,
  kValidation,
  kEmptySupport,
  kEmptySequence,
  kIo,
  kFormat,
  kInternal,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; the kind distinguishes failure
/// classes so callers (and tests) can branch on them.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace vnsa
