#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twa {

// Root of every error the toolkit throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid arguments or degenerate input data (e.g. zero spread, n < 2).
class InputError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public InputError {
public:
    using InputError::InputError;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class StorageError : public Error {
public:
    using Error::Error;
};

// Checkpoint / manifest validation failures. Each subclass names the offending path.
class ValidationError : public Error {
public:
    ValidationError(std::string path, const std::string& what);
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class MissingFileError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class CorruptFileError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class BadMagicError : public CorruptFileError {
public:
    using CorruptFileError::CorruptFileError;
};

class TruncatedFileError : public CorruptFileError {
public:
    using CorruptFileError::CorruptFileError;
};

class DimensionMismatchError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

} // namespace twa
