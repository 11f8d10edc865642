#include "cgseg/error.hpp"

namespace cgseg {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::Format: return "format";
    case ErrorCode::EmptyScene: return "empty_scene";
    case ErrorCode::ContractViolation: return "contract_violation";
    case ErrorCode::Precondition: return "precondition";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::BackgroundClick: return "background_click";
    case ErrorCode::NoConfidentMatch: return "no_confident_match";
    case ErrorCode::Capacity: return "capacity";
    case ErrorCode::Io: return "io";
    }
    return "unknown";
}

} // namespace cgseg
