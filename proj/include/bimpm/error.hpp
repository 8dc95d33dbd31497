#pragma once

#include <stdexcept>
#include <string>

namespace bimpm
{

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorKind
{
    Config = 1,
    Data = 2,
    Numeric = 3,
    Verification = 4,
};

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error
{
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error
{
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NumericError : Error
{
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

struct VerificationError : Error
{
    explicit VerificationError(const std::string& what) : Error(ErrorKind::Verification, what) {}
};

/// Raised when operand shapes of a graph op disagree. The message names the op and both shapes.
struct ShapeError : Error
{
    explicit ShapeError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

} // namespace bimpm
