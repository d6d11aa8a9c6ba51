#pragma once

#include <stdexcept>
#include <string>

namespace ent {

// Bad arguments: shapes, ranges, out-of-vocabulary input, invalid configs.
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed files: bad magic, version, truncation, shape mismatch on load.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// NaN or infinite values where finite values are required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ent
