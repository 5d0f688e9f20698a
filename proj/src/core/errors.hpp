#pragma once

#include <stdexcept>
#include <string>

namespace covdl {

enum class ErrorCode {
  invalid_argument = 1,
  dimension = 2,
  empty_plan = 3,
  rank_deficient = 4,
  numerical = 5,
  io = 6,
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

}  // namespace covdl
