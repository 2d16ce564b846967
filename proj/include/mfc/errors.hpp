#pragma once

#include <stdexcept>
#include <string>

namespace mfc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model document or programmatic construction violates the schema.
struct SchemaError : Error {
  using Error::Error;
};

// A probability row fails normalization beyond tolerance.
struct StochasticityError : Error {
  using Error::Error;
};

// A requested computation exceeds a hard size cap.
struct CapacityError : Error {
  using Error::Error;
};

// Iterative solve failed to reach its stopping rule.
struct ConvergenceError : Error {
  using Error::Error;
};

// Lookup of a state outside the solved/enumerated domain.
struct LookupError : Error {
  using Error::Error;
};

// Model evaluation produced an invalid quantity (e.g. non-finite cost).
struct ModelError : Error {
  using Error::Error;
};

}  // namespace mfc
