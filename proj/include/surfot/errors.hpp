#pragma once

#include <stdexcept>
#include <string>

namespace surfot {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class PatchTooSmall : public Error {
public:
    using Error::Error;
};

class RankDeficientPatch : public Error {
public:
    using Error::Error;
};

class GridTooSmall : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class SizeGuard : public Error {
public:
    using Error::Error;
};

class MassMismatch : public Error {
public:
    using Error::Error;
};

/// Raised when the projection root finder fails; signals an internal bug.
class NoRootFound : public Error {
public:
    using Error::Error;
};

class DivergenceDetected : public Error {
public:
    DivergenceDetected(int iteration, const std::string& what)
        : Error(what), iteration_(iteration)
    {
    }
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

class IncompatibleSpec : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace surfot
