#pragma once

#include <stdexcept>
#include <string>

namespace cgseg {

enum class ErrorCode {
    Format,            // malformed or mismatched file contents
    EmptyScene,        // scene with zero Gaussians
    ContractViolation, // caller broke an API precondition
    Precondition,      // input does not satisfy an operation's requirements
    Numeric,           // non-finite values during optimization
    BackgroundClick,   // click landed on a pixel with too little opacity
    NoConfidentMatch,  // no cluster is similar enough to the clicked feature
    Capacity,          // a bounded buffer overflowed
    Io,                // filesystem / socket failure
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace cgseg
