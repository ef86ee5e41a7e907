#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fwi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or config.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Mesh topology or geometry violates an invariant. `element` is the first
/// offending triangle (or boundary-edge line) index, -1 when not applicable.
class MeshError : public Error {
public:
    MeshError(const std::string& what, long element = -1)
        : Error(element >= 0 ? what + " (element " + std::to_string(element) + ")" : what),
          element_(element) {}
    long element() const noexcept { return element_; }

private:
    long element_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Linear solve or eigenvalue iteration did not reach its tolerance.
class SolverError : public Error {
public:
    using Error::Error;
};

/// The time stepper hit a non-finite or overflowing state.
class InstabilityError : public Error {
public:
    InstabilityError(const std::string& what, std::size_t step)
        : Error(what + " at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A precondition on problem data (bounds, CFL, feasibility) is violated.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Stored and regenerated quantities disagree.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

inline void check_dimension(std::size_t got, std::size_t expected, const char* what) {
    if (got != expected) {
        throw DimensionError(std::string(what) + ": expected size " + std::to_string(expected) +
                             ", got " + std::to_string(got));
    }
}

}  // namespace fwi
