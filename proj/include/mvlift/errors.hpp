#ifndef MVLIFT_ERRORS_HPP
#define MVLIFT_ERRORS_HPP

#include <stdexcept>

namespace mvlift {

/// Box with non-positive width or height where a proper region is required.
struct DegenerateBoxError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Depth that is zero, negative, or otherwise unusable for unprojection.
struct InvalidDepthError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Region that does not intersect the target image or feature map.
struct EmptyRegionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent or unsupported configuration values.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Tensor or matrix dimensions that do not match the declared contract.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or numerically unusable inputs.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller broke a stated precondition (e.g. a query with no allowed keys).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace mvlift

#endif
