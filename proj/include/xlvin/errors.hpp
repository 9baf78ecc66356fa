#pragma once

#include <stdexcept>
#include <string>

namespace xlvin {

// Caller broke a documented precondition (bad shape, out-of-range action, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// NaN or Inf detected where finite values are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Procedural generators that could not produce a valid instance.
class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

} // namespace xlvin
