#pragma once

#include <stdexcept>
#include <string>

namespace gnf {

/// Failure categories for malformed or unreadable input data.
enum class DataErrc {
  kIo,
  kMalformedHeader,
  kCountMismatch,
  kNonNumeric,
  kUnsupportedFormat,
  kTruncated,
  kBadModel,
};

/// Raised for problems with files and datasets (as opposed to programming
/// errors, which use std::invalid_argument / std::logic_error).
class DataError : public std::runtime_error {
 public:
  DataError(DataErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  DataErrc code() const noexcept { return code_; }

 private:
  DataErrc code_;
};

}  // namespace gnf
