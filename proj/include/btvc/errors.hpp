#pragma once

#include <stdexcept>
#include <string>

namespace btvc {

/// Input or configuration rejected before any numerics ran.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Objective went non-finite or the optimizer diverged.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace btvc
