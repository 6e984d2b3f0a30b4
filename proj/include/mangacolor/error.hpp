#pragma once

#include <stdexcept>
#include <string>

namespace mangacolor {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An image was passed in an encoding the operation does not accept.
class EncodingMismatch : public Error {
public:
    using Error::Error;
};

/// Tensor or image dimensions do not agree with what the operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied value violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// File or codec failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mangacolor
