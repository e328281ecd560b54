#pragma once

#include <stdexcept>
#include <string>

namespace msense {

/// Raised when a caller hands in data that violates an operation's preconditions.
class invalid_input : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative numeric routine fails; carries the last residual.
class numeric_failure : public std::runtime_error {
public:
    numeric_failure(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace msense
