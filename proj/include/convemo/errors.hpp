#pragma once

#include <stdexcept>
#include <string>

namespace convemo {

// Error taxonomy maps 1:1 onto CLI exit codes:
// ValidationError -> 1, IoError -> 2, NumericError -> 3.

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace convemo
