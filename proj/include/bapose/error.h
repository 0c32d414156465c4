#pragma once

#include <stdexcept>
#include <string>

namespace bapose {

// Tensor extents do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input text or bytes: annotation/result files, tensor dumps,
// images, checkpoints, config files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration is inconsistent or does not match a stored artifact.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical quantity is undefined (e.g. OKS against a ground truth with no
// labeled keypoints) or became non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bapose
