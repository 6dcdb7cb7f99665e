#pragma once

#include <stdexcept>
#include <string>

namespace dlab {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// nn-core
struct ShapeError : Error { using Error::Error; };         // dimension mismatch
struct LabelError : Error { using Error::Error; };         // class label out of range
struct WeightError : Error { using Error::Error; };        // negative sample weight
struct ScheduleError : Error { using Error::Error; };      // step outside schedule horizon
struct ArchitectureError : Error { using Error::Error; };  // net shape unusable (e.g. no hidden layer)
struct NumericError : Error { using Error::Error; };       // non-finite value where finite required

// data
struct SpecError : Error { using Error::Error; };          // invalid dataset/config spec values
struct FormatError : Error { using Error::Error; };        // malformed file (IDX, snapshots)
struct SchemaError : Error { using Error::Error; };        // unknown attribute name

// clustering
struct InputError : Error { using Error::Error; };         // bad clustering input
struct ModelError : Error { using Error::Error; };         // query against an unfitted model

// debias / baselines
struct ContractError : Error { using Error::Error; };      // caller violated a documented precondition
struct SupervisionError : Error { using Error::Error; };   // oracle group labels missing/mismatched

// eval
struct EvalError : Error { using Error::Error; };          // evaluation over an empty group table

// cli
struct ConfigError : Error { using Error::Error; };        // config validation failure (exit code 2)
struct CompatError : Error { using Error::Error; };        // snapshot/dataset incompatibility

}  // namespace dlab
