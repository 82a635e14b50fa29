#pragma once

#include <stdexcept>
#include <string>

namespace spurious {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A documented precondition of a construction does not hold.
struct PreconditionError : std::domain_error {
  using std::domain_error::domain_error;
};

// A numerical step could not complete (exhausted budget, failed decomposition).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw DimensionMismatch(what);
}

}  // namespace spurious
