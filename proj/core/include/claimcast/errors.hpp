#pragma once

#include <stdexcept>
#include <string>

namespace claimcast {

// Base class for all library errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value; message names the offending field.
struct config_error : error {
    using error::error;
};

// Malformed input file; message carries the line number where known.
struct parse_error : error {
    using error::error;
};

// Structurally valid input that violates a data invariant; names the claim.
struct data_error : error {
    using error::error;
};

// Tensor/vector dimension mismatch.
struct shape_error : error {
    using error::error;
};

// Mathematical domain violation (log of a nonpositive value etc.).
struct domain_error : error {
    using error::error;
};

// Two prediction sets that should cover identical observations do not.
struct alignment_error : error {
    using error::error;
};

// A pipeline stage was invoked before the stage it depends on.
struct dependency_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

// Every combination in a tuning grid failed to train.
struct tuning_error : error {
    using error::error;
};

}  // namespace claimcast
