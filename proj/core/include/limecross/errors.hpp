#pragma once

#include <stdexcept>
#include <string>

namespace limecross {

// Error taxonomy used across the library.  Callers that need to map
// failures to process exit codes can switch on kind().
enum class ErrorKind {
    dimension,  // shape/size mismatch between related objects
    index,      // out-of-range layer/token/instance index
    parse,      // malformed manifest, config, or report text
    io,         // filesystem read/write failure
    model,      // invalid velocity request or model configuration
    metric,     // metric preconditions violated (empty mask, too few samples)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& m) : Error(ErrorKind::dimension, m) {}
};
struct IndexError : Error {
    explicit IndexError(const std::string& m) : Error(ErrorKind::index, m) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error(ErrorKind::parse, m) {}
};
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};
struct ModelError : Error {
    explicit ModelError(const std::string& m) : Error(ErrorKind::model, m) {}
};
struct MetricError : Error {
    explicit MetricError(const std::string& m) : Error(ErrorKind::metric, m) {}
};

}  // namespace limecross
