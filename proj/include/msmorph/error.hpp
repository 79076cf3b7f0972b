#pragma once

#include <stdexcept>
#include <string>

namespace msmorph {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad dims, bad config, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimsMismatch : public InvalidArgument {
public:
    explicit DimsMismatch(const std::string& what)
        : InvalidArgument("dimension mismatch: " + what) {}
};

/// Data violates a container invariant (NaN, wrong length, negative label).
class InvalidData : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents. Subclasses let callers tell the failure apart.
class FormatError : public Error {
public:
    using Error::Error;
};

class BadMagic : public FormatError {
public:
    using FormatError::FormatError;
};

class UnsupportedVersion : public FormatError {
public:
    using FormatError::FormatError;
};

class UnsupportedDatatype : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedFile : public FormatError {
public:
    using FormatError::FormatError;
};

class BadHeader : public FormatError {
public:
    using FormatError::FormatError;
};

} // namespace msmorph
