#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ptool {

enum class ErrorCode {
    precondition,
    transport_failure,
    scripted_exhausted,
    structure_failure,
    distinctness_failure,
    target_unreachable,
    non_convergence,
    duplicate_values,
    dangling_platform,
    leakage_detected,
    parse_failure,
    unresolvable_provenance,
    verdict_unparsable,
    schema_mismatch,
    missing_split,
    missing_dependency,
    config_invalid,
    invalid_edit,
    conflict,
    not_found,
    io,
};

inline std::string_view to_string(ErrorCode c) {
    switch (c) {
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::transport_failure: return "transport-failure";
    case ErrorCode::scripted_exhausted: return "scripted-exhausted";
    case ErrorCode::structure_failure: return "structure-failure";
    case ErrorCode::distinctness_failure: return "distinctness-failure";
    case ErrorCode::target_unreachable: return "target-unreachable";
    case ErrorCode::non_convergence: return "non-convergence";
    case ErrorCode::duplicate_values: return "duplicate-values";
    case ErrorCode::dangling_platform: return "dangling-platform";
    case ErrorCode::leakage_detected: return "leakage-detected";
    case ErrorCode::parse_failure: return "parse-failure";
    case ErrorCode::unresolvable_provenance: return "unresolvable-provenance";
    case ErrorCode::verdict_unparsable: return "verdict-unparsable";
    case ErrorCode::schema_mismatch: return "schema-mismatch";
    case ErrorCode::missing_split: return "missing-split";
    case ErrorCode::missing_dependency: return "missing-dependency";
    case ErrorCode::config_invalid: return "config-invalid";
    case ErrorCode::invalid_edit: return "invalid-edit";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::io: return "io";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace ptool
