#pragma once

#include <stdexcept>
#include <string>

namespace sduda {

// Dimension/shape disagreement between tensors or clouds.
struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid hyper-parameter or configuration value.
struct parameter_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/inf or other numeric breakdown.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Inconsistent mutable state (missing gradient, unlabeled node, ...).
struct state_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk file.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sduda
