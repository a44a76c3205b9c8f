#pragma once

#include <stdexcept>
#include <string>

namespace spdae {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A requested operation exceeds the declared smoothness / jet capability of a problem.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Unknown registry name.
class NotFoundError : public Error {
public:
    using Error::Error;
};

/// The matrix-pencil structure does not match the assumed turning-point pattern
/// (wrong divisor counts, singular pencil, eigenvalue collisions, ...).
class StructureError : public Error {
public:
    using Error::Error;
};

/// An iterative solve (Newton, Picard, fixed point) failed to converge.
class SolveError : public Error {
public:
    using Error::Error;
};

} // namespace spdae
