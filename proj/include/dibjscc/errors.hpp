#pragma once

#include <stdexcept>
#include <string>

namespace dibjscc {

// Error taxonomy mirrored by the CLI exit codes:
//   precondition_error / config_error / input_error -> 1
//   numeric_error                                   -> 2
//   io_error                                        -> 3
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

class precondition_error : public std::runtime_error {
 public:
  explicit precondition_error(const std::string& what) : std::runtime_error(what) {}
};

class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dibjscc
