#pragma once

#include <stdexcept>
#include <string>

namespace shared_transfer {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A covariate whose samples cannot support the requested spline basis
// (zero-width domain or too few distinct values for the knot sequence).
struct DegenerateCovariate : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

// Normal equations unsolvable (rank-deficient system with nu = 0).
struct SingularSystem : Error {
  using Error::Error;
};

struct ZeroAtom : Error {
  using Error::Error;
};

// Combinatorial enumeration guard tripped.
struct BudgetExceeded : Error {
  using Error::Error;
};

// Malformed or inconsistent input data.
struct DataError : Error {
  using Error::Error;
};

// Persisted model has an unsupported format version.
struct VersionError : Error {
  using Error::Error;
};

}  // namespace shared_transfer
