#pragma once

#include <stdexcept>
#include <string>

namespace protobeam {

// Error taxonomy shared across the library. The CLI maps these onto its
// exit codes (config -> 2, data -> 3, numeric -> 4).
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace protobeam
