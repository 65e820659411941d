#pragma once

#include <stdexcept>
#include <string>

namespace cada {

// Validation problems (bad input, bad config, bad file) exit the CLI with 2;
// numeric failures (NaN loss, divergence) exit with 3.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : ValidationError {
    using ValidationError::ValidationError;
};

struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cada
