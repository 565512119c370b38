#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace magtunnel {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input to an operation (violated precondition).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A symmetry an operation relies on does not hold (e.g. parity on an asymmetric potential).
class SymmetryError : public Error {
public:
    using Error::Error;
};

/// Iterative solver or root finder ran out of iterations.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> best_residuals = {})
        : Error(what), best_residuals_(std::move(best_residuals)) {}

    const std::vector<double>& best_residuals() const { return best_residuals_; }

private:
    std::vector<double> best_residuals_;
};

}  // namespace magtunnel
