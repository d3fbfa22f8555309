#pragma once

#include <stdexcept>
#include <string>

namespace kneemorph {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable, malformed or unsupported file content.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Two inputs that must share a voxel grid do not.
class GeometryMismatch : public Error {
public:
    using Error::Error;
};

/// An operation was called with arguments outside its contract.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace kneemorph
