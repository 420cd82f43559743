#pragma once

#include <stdexcept>
#include <string>

namespace clab {

// Precondition violated by the caller (bad sizes, unsupported options).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// An object was used before it held the data an operation needs.
class InvalidState : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Iterative numerics did not converge; the message carries diagnostics.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Cross-Gram of a multiplicity block is rank deficient, so no meaningful
// rotation between discrete and continuum bases exists.
class DegenerateAlignment : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace clab
