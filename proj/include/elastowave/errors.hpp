#pragma once

#include <stdexcept>
#include <string>

namespace elastowave {

// Error taxonomy maps onto the CLI exit codes: ParameterError/MeshError/
// AssumptionError -> 2 (invalid input), GeometryError -> 3, SolverError -> 4,
// AuditError -> 5.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParameterError : Error {
  using Error::Error;
};

struct MeshError : Error {
  using Error::Error;
};

// Violations of the geometric boundary-partition conditions or of the
// damping-region layout (collar reaching the opposite boundary, gap facets).
struct GeometryError : Error {
  using Error::Error;
};

// Coefficient floors violated (damping/boundary coefficient assumptions).
struct AssumptionError : Error {
  using Error::Error;
};

struct SolverError : Error {
  using Error::Error;
};

// An enabled scenario invariant evaluated outside its tolerance.
struct AuditError : Error {
  using Error::Error;
};

}  // namespace elastowave
