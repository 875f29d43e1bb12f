#pragma once

#include <stdexcept>
#include <string>

namespace activereg {

/// Base of every domain error raised by the library. The CLI maps these to
/// exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonFinite : public Error {
public:
    NonFinite() : Error("matrix or vector contains a non-finite entry") {}
};

class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(double pivot)
        : Error("matrix is not positive definite (pivot " + std::to_string(pivot) + ")"),
          pivot_(pivot) {}
    double pivot() const noexcept { return pivot_; }

private:
    double pivot_;
};

class TooLarge : public Error {
public:
    using Error::Error;
};

/// Structural design condition failed; tag is "AQ" or "AB".
class ConditionViolated : public Error {
public:
    ConditionViolated(std::string tag, const std::string& detail)
        : Error("condition [" + tag + "] violated: " + detail), tag_(std::move(tag)) {}
    const std::string& tag() const noexcept { return tag_; }

private:
    std::string tag_;
};

class UnsupportedFamily : public Error {
public:
    using Error::Error;
};

class NotEnoughSamples : public Error {
public:
    using Error::Error;
};

class MissingBiasProxy : public Error {
public:
    using Error::Error;
};

class AllModelsFailed : public Error {
public:
    using Error::Error;
};

class GammaOutOfRange : public Error {
public:
    explicit GammaOutOfRange(double gamma)
        : Error("gamma must lie in (0, 1/4) for the oracle inequality, got " +
                std::to_string(gamma)) {}
};

class Exhausted : public Error {
public:
    Exhausted() : Error("no unsampled candidate points remain") {}
};

class KraftViolation : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(int line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class ValidationError : public Error {
public:
    ValidationError(std::string field, std::string constraint)
        : Error("field '" + field + "' must satisfy: " + constraint),
          field_(std::move(field)), constraint_(std::move(constraint)) {}
    const std::string& field() const noexcept { return field_; }
    const std::string& constraint() const noexcept { return constraint_; }

private:
    std::string field_;
    std::string constraint_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace activereg
