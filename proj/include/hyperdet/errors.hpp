#pragma once

#include <stdexcept>
#include <string>

namespace hyperdet {

// Mismatched vector lengths or matrix shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A precondition on the geometric state of an input was violated
// (off-manifold point, non-tangent vector, wrong head mode).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Out-of-range scalar parameter (d_min <= 0, k >= N, ...).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid experiment configuration or malformed input file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered during training.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hyperdet
