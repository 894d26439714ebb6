#pragma once

#include <stdexcept>
#include <string>

namespace partco {

// Base class for everything the library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller passed a value outside an operation's contract.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Incompatible shapes (non-square profit matrix, q > cols, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

// A file could not be opened, created, or written.
class IoError : public Error {
public:
    using Error::Error;
};

// On-disk bytes do not match the declared format. Carries the byte
// offset at which parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}
    explicit FormatError(const std::string& msg) : Error(msg), offset_(0) {}
    std::size_t byte_offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Well-formed input that violates a semantic constraint (duplicate ids,
// labeled row without class, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Input carries no usable variation for the requested fit (constant
// features, zero foreground, all-zero selection scores).
class DegenerateDataError : public Error {
public:
    using Error::Error;
};

// A non-finite value appeared mid-computation; message names the component.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace partco
