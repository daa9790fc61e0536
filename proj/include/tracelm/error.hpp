#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tracelm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files (vocab, merges, tensor containers, catalogs).
class LoadError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied parameter outside its domain (negative temperature, k = 0, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

class ContextOverflowError : public Error {
public:
    ContextOverflowError(std::size_t length, std::size_t n_ctx)
        : Error("sequence of " + std::to_string(length) + " tokens exceeds context length " +
                std::to_string(n_ctx)),
          n_ctx_(n_ctx) {}

    std::size_t n_ctx() const noexcept { return n_ctx_; }

private:
    std::size_t n_ctx_;
};

/// Raised while writing a trace; carries the JSON path of the offending field.
class SerializationError : public Error {
public:
    SerializationError(std::string path, const std::string& what)
        : Error(path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace tracelm
