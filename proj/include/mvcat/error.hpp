#pragma once

#include <stdexcept>
#include <string>

namespace mvcat {

// Contract violations and invalid arguments (bad layouts, mismatched shapes).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (parse failures, out-of-range categories).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite objectives, solver breakdowns, non-convergence of reference solvers.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mvcat
