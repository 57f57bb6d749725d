#pragma once

#include <stdexcept>
#include <string>

namespace carma {

// Contract violations surface as typed exceptions. Out-of-memory during
// simulated allocation is NOT among them: that is a modeled outcome and is
// returned as a value (see gpu.hpp).

struct CarmaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedSpec : CarmaError {
    using CarmaError::CarmaError;
};
struct UnsupportedFamily : CarmaError {
    using CarmaError::CarmaError;
};
struct NonPositiveRange : CarmaError {
    using CarmaError::CarmaError;
};
struct IncompatibleFamily : CarmaError {
    using CarmaError::CarmaError;
};
struct InvalidBounds : CarmaError {
    using CarmaError::CarmaError;
};
struct EmptyDataset : CarmaError {
    using CarmaError::CarmaError;
};
struct DegenerateFeature : CarmaError {
    using CarmaError::CarmaError;
};
struct FamilyMismatch : CarmaError {
    using CarmaError::CarmaError;
};
struct DuplicateTaskId : CarmaError {
    using CarmaError::CarmaError;
};
struct UnknownRegion : CarmaError {
    using CarmaError::CarmaError;
};
struct MalformedTrace : CarmaError {
    using CarmaError::CarmaError;
};
struct UnknownCatalogKey : CarmaError {
    using CarmaError::CarmaError;
};
struct IncompleteRun : CarmaError {
    using CarmaError::CarmaError;
};
struct ConfigError : CarmaError {
    using CarmaError::CarmaError;
};

}  // namespace carma
