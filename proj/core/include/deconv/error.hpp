#pragma once

#include <stdexcept>
#include <string>

namespace deconv {

// Bad parameters, failed model assumptions, malformed configuration.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A named model or kernel assumption does not hold for the given inputs.
class AssumptionError : public ValidationError {
public:
    AssumptionError(std::string assumption, const std::string& detail)
        : ValidationError(assumption + ": " + detail), assumption_(std::move(assumption)) {}
    const std::string& assumption() const noexcept { return assumption_; }

private:
    std::string assumption_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical self-check or a requested statistical assertion failed.
class AssertionFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace deconv
