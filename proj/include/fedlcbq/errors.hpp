#pragma once

#include <stdexcept>
#include <string>

namespace fedlcbq {

// Error taxonomy mirrored by the CLI exit codes: validation errors exit 2,
// invariant (contract) violations exit 3, I/O failures exit 4.

class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class InvariantError : public std::logic_error {
 public:
  explicit InvariantError(const std::string& what) : std::logic_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedlcbq
