#pragma once

#include <stdexcept>
#include <string>

namespace fedsvd {

// Base class for every error raised by the library. Callers that only care
// about "something went wrong" can catch this; the CLI maps it to exit 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Value outside the mathematical domain of an operation (logit of 1.0, NaN input).
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid argument value (negative lambda, empty matrix, zero clients).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Incompatible matrix / vector dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Unparseable or missing input data.
class IngestError : public Error {
public:
    using Error::Error;
};

// Structurally malformed input (ragged CSV rows).
class FormatError : public Error {
public:
    using Error::Error;
};

// Label not present in the class list.
class EncodingError : public Error {
public:
    using Error::Error;
};

// Malformed wire frame or payload.
class ProtocolError : public Error {
public:
    ProtocolError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Socket-level failure: refused, reset, closed mid-frame.
class TransportError : public Error {
public:
    using Error::Error;
};

// The peer answered with an error frame.
class RemoteError : public Error {
public:
    using Error::Error;
};

}  // namespace fedsvd
