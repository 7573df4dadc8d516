#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rakecal {

enum class ErrorCode {
    NoEvents,
    SingularInformation,
    NotConverged,
    NonFiniteInput,
    EmptyValidation,
    RankDeficientDesign,
    DimensionMismatch,
    InsufficientRiskSet,
    SingularB,
    AuxiliaryDegenerate,
    InvalidPlan,
    AllReplicatesFailed,
    InvalidConfig,
    NotBracketed,
    ParseError,
    SchemaError,
    EmptyDataset,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NoEvents: return "NoEvents";
        case ErrorCode::SingularInformation: return "SingularInformation";
        case ErrorCode::NotConverged: return "NotConverged";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::EmptyValidation: return "EmptyValidation";
        case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::InsufficientRiskSet: return "InsufficientRiskSet";
        case ErrorCode::SingularB: return "SingularB";
        case ErrorCode::AuxiliaryDegenerate: return "AuxiliaryDegenerate";
        case ErrorCode::InvalidPlan: return "InvalidPlan";
        case ErrorCode::AllReplicatesFailed: return "AllReplicatesFailed";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::NotBracketed: return "NotBracketed";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (bootstrap, simulation, CLI) can decide between drop-and-count
/// and hard failure without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace rakecal
