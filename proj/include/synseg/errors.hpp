#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace synseg {

// Raised for problems with user-supplied inputs (files, configs, flag
// values). The CLI maps this class to exit code 2; everything else that
// escapes is an internal error (exit 1).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a training step produces a non-finite loss. Carries the ids of
// the offending images so the report can name them. CLI exit code 3.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& msg, std::vector<std::string> image_ids)
      : std::runtime_error(msg), image_ids_(std::move(image_ids)) {}
  const std::vector<std::string>& image_ids() const { return image_ids_; }

 private:
  std::vector<std::string> image_ids_;
};

}  // namespace synseg
