// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace cse {

// Error categories; the CLI maps these to exit codes.
enum class ErrorKind {
  Config,   // bad configuration / usage
  Io,       // filesystem-level failure
  Format,   // file exists but contents are malformed or unsupported
  Shape,    // tensor / signal dimension mismatch
  Numeric,  // NaN/Inf or other numerical failure
  State,    // API misuse (wrong call order, empty input, ...)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void check(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace cse
