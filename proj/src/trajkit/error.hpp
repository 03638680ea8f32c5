#pragma once

#include <stdexcept>
#include <string>

namespace trajkit {

enum class ErrorKind {
  invalid,     // bad argument or precondition violation
  io,          // file missing, unreadable, or malformed
  numeric,     // NaN/Inf surfaced where finite values are required
  constraint,  // compound-scaling constraint or empty feasible grid
  not_found,   // named scene/frame/tensor does not exist
};

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

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) {
    fail(kind, message);
  }
}

}  // namespace trajkit
