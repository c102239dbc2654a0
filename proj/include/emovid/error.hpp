#pragma once

#include <stdexcept>
#include <string>

namespace emovid {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// exit codes: usage/config -> 1, input/data/geometry/shape -> 2, numeric -> 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace emovid
