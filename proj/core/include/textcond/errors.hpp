#pragma once

#include <stdexcept>
#include <string>

namespace textcond {

/// Raised when a value is outside the domain a numeric routine accepts
/// (NaN/Inf inputs, non-finite losses).
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Dataset, manifest and checkpoint problems. `kind()` tells callers which
/// check failed so the CLI can map it onto an exit code and a message.
class FormatError : public std::runtime_error {
 public:
  enum class Kind {
    kMissingFile,
    kBadMagic,
    kBadVersion,
    kDimMismatch,
    kIdOutOfRange,
    kMalformed,
  };

  FormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace textcond
