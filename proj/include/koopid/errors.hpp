#pragma once

#include <stdexcept>
#include <string>

namespace koopid {

// Error categories. The CLI prints these as a machine-parsable prefix,
// e.g. "error[config]: unknown key 'foo'".
enum class ErrorCode {
    Config,      // invalid configuration / dimensions
    Shape,       // runtime dimension mismatch
    Usage,       // operation called on an incompatible object
    Parse,       // malformed input file
    Numeric,     // non-finite value where a finite one is required
    Generation,  // data generation failed (divergence, undefined SNR, ...)
    Evaluation,  // evaluation impossible (e.g. zero output variance)
    Io           // file system problems
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::Config: return "config";
        case ErrorCode::Shape: return "shape";
        case ErrorCode::Usage: return "usage";
        case ErrorCode::Parse: return "parse";
        case ErrorCode::Numeric: return "numeric";
        case ErrorCode::Generation: return "generation";
        case ErrorCode::Evaluation: return "evaluation";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    const char* code_name() const noexcept { return error_code_name(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace koopid
