#pragma once

#include <stdexcept>
#include <string>

namespace lungcrowd {

/// Error classes. Each maps to a distinct CLI exit code.
enum class ErrorKind {
  usage = 2,
  io = 3,
  format = 4,
  invalid_argument = 5,
  algorithm = 6,
  service = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace lungcrowd
