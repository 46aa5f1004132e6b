#pragma once

#include <stdexcept>
#include <string>

namespace hcp {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// distinct exit codes (usage 2, data 3, numeric 4).
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller violated a precondition (bad parameter range, wrong call sequence).
struct usage_error : error {
    using error::error;
};

// Malformed or inconsistent input data (files, labels, schemas).
struct data_error : error {
    using error::error;
};

// Numeric validation failure (mass sums, branch normalization).
struct numeric_error : error {
    using error::error;
};

}  // namespace hcp
