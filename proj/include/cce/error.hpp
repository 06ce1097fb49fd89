#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cce {

// Base for every error raised by the library. Callers that only care about
// "bad data" versus "bad usage" can catch the two intermediate classes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data or artifacts violate a contract (exit code 2 in the CLI).
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class SchemaError : public DataError {
public:
    SchemaError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public DataError {
public:
    using DataError::DataError;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class VersionError : public DataError {
public:
    VersionError(unsigned found, unsigned supported)
        : DataError("checkpoint version " + std::to_string(found) +
                    " is not supported by this reader (version " + std::to_string(supported) + ")"),
          found_(found), supported_(supported) {}
    unsigned found() const { return found_; }
    unsigned supported() const { return supported_; }

private:
    unsigned found_;
    unsigned supported_;
};

class IntegrityError : public DataError {
public:
    using DataError::DataError;
};

// Programming errors: mismatched tensor shapes, misuse of an API.
class ShapeError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace cce
