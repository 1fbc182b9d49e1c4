#pragma once

#include <stdexcept>
#include <string>

namespace authlm {

// Broad failure categories; the CLI maps them onto exit codes.
enum class ErrorKind {
  kInvalidArgument,
  kData,
  kNoScoreable,
  kDiverged,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace authlm
