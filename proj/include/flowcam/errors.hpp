#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowcam {

/// Base of every recoverable data error raised by the library. The CLI maps
/// these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MalformedCapture : public Error {
public:
    using Error::Error;
};

class OutOfOrderTimestamp : public Error {
public:
    using Error::Error;
};

class SchemaMismatch : public Error {
public:
    using Error::Error;
};

/// A CSV cell or row could not be parsed. `row()` is the 1-based line of
/// the file where the offending record starts.
class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& what)
        : Error("row " + std::to_string(row) + ": " + what), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class UncleanData : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class InsufficientSamples : public Error {
public:
    using Error::Error;
};

class CorruptModel : public Error {
public:
    using Error::Error;
};

class AllFeaturesPruned : public Error {
public:
    using Error::Error;
};

class InsufficientRtp : public Error {
public:
    using Error::Error;
};

class EmptyClass : public Error {
public:
    using Error::Error;
};

class IoFailure : public Error {
public:
    using Error::Error;
};

}  // namespace flowcam
