#pragma once

#include <stdexcept>
#include <string>

namespace bandsel {

enum class ErrorKind {
    Parameter,  // invalid argument, flag, or configuration
    Shape,      // dimension mismatch between arrays, cubes, or models
    Domain,     // input outside the operation's domain (empty mask, wrong cube kind)
    Numeric,    // degenerate regression, non-finite loss
    Io,         // unreadable or malformed file
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ParameterError : Error {
    explicit ParameterError(const std::string& w) : Error(ErrorKind::Parameter, w) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(ErrorKind::Shape, w) {}
};
struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};

}  // namespace bandsel
