#ifndef AFFAGG_ERRORS_HPP
#define AFFAGG_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace affagg {

/// Sizes of two operands disagree.
class DimensionError : public std::invalid_argument {
public:
    DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
        : std::invalid_argument(what + ": expected size " + std::to_string(expected) +
                                ", got " + std::to_string(actual)),
          expected_(expected), actual_(actual) {}

    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

/// Argument outside the domain of the operation (n < 3 for the smoothness grid, negative variance, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Iterative method hit its cap. Carries the best estimate reached.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double best_estimate)
        : std::runtime_error(what), best_(best_estimate) {}

    double best_estimate() const noexcept { return best_; }

private:
    double best_;
};

/// An enumeration would exceed a configured size cap.
class CapacityError : public std::runtime_error {
public:
    CapacityError(const std::string& what, std::size_t requested, std::size_t cap)
        : std::runtime_error(what + ": " + std::to_string(requested) + " exceeds cap " +
                             std::to_string(cap)),
          requested_(requested), cap_(cap) {}

    std::size_t requested() const noexcept { return requested_; }
    std::size_t cap() const noexcept { return cap_; }

private:
    std::size_t requested_;
    std::size_t cap_;
};

}  // namespace affagg

#endif
