#pragma once

#include <stdexcept>
#include <string>

namespace tbnet {

/// Corpus / image ingestion failures. Mapped to exit code 2 by the CLI.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Model container failures. Mapped to exit code 3 by the CLI.
class FormatError : public std::runtime_error {
 public:
  enum class Kind {
    io,
    bad_magic,
    version_mismatch,
    checksum,
    bad_manifest,
    unknown_dtype,
    truncated,
  };

  FormatError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace tbnet
