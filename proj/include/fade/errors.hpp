#pragma once

#include <stdexcept>
#include <string>

namespace fade {

// Shape or dimension mismatch between tensors, layers or masks.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unknown parameter / attribute name.
struct LookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A gradient record was used after the parameters it traced were mutated.
struct StalenessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values appeared during sampling or training.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or argument values.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  enum class Kind { io, corrupt, version_mismatch, stage_mismatch };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg)
      : std::runtime_error(msg), kind(k) {}
};

}  // namespace fade
