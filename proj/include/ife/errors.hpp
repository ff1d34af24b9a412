#pragma once

#include <stdexcept>
#include <string>

namespace ife {

// Bad input: shapes, non-finite entries, infeasible specs. Maps to CLI exit 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical failure: singular matrices, optimizer non-convergence. Maps to CLI exit 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ife
