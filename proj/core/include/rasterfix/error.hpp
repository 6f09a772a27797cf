#pragma once

#include <stdexcept>
#include <string>

namespace rasterfix {

/// Machine-readable failure categories; the CLI maps these to exit codes.
enum class ErrorCode {
  invalid_argument,
  io_bad_magic,
  io_bad_version,
  io_dimension_mismatch,
  io_truncated,
  io_failure,
  degenerate_image,
  empty_overlap,
  no_peaks,
  insufficient_atoms,
  solver_failure,
  non_convergence,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace rasterfix
