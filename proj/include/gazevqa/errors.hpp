#pragma once

#include <stdexcept>
#include <string>

namespace gazevqa {

// Error taxonomy shared by all modules. The CLI maps these to exit codes:
// ValidationError / ConfigError / FormatError -> 2, TrainingError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad data: schema violations, invariant failures, out-of-range inputs.
struct ValidationError : Error {
    using Error::Error;
};

// Bad configuration: dimension mismatches, invalid hyperparameters, unknown modes.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed binary or serialized files (heatmaps, checkpoints, JSONL parse).
struct FormatError : Error {
    using Error::Error;
};

// Optimization-time failures (divergence, missing run artifacts).
struct TrainingError : Error {
    using Error::Error;
};

} // namespace gazevqa
