#pragma once

#include <stdexcept>
#include <string>

namespace cyclet {

// Error taxonomy mirrors the CLI exit codes: ConfigError -> 1,
// DataError -> 2, anything else -> 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or argument violation inside the numeric core.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace cyclet
