#pragma once

#include <stdexcept>
#include <string>

namespace clusterate {

// Error categories map onto CLI exit codes: DataError -> 2, ModelError -> 3,
// InfeasibleError -> 4.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace clusterate
