#pragma once

#include <stdexcept>
#include <string>

namespace specmargin {

/// Thrown when an argument violates an operation's precondition
/// (shape mismatch, out-of-range scalar, malformed file).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Power iteration did not reach the requested tolerance.
/// Carries the last Rayleigh-quotient estimate so callers can decide what to do with it.
class NotConverged : public std::runtime_error {
public:
    NotConverged(const std::string& what, double last_estimate, int iterations)
        : std::runtime_error(what), last_estimate_(last_estimate), iterations_(iterations) {}

    double last_estimate() const noexcept { return last_estimate_; }
    int iterations() const noexcept { return iterations_; }

private:
    double last_estimate_;
    int iterations_;
};

/// Training produced a non-finite weight.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace specmargin
