#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace precip_slomo {

enum class ErrorCode {
    EmptyCrop,
    ExtentMismatch,
    ShapeMismatch,
    NegativeInput,
    InvalidArgument,
    TOutOfRange,
    UninitializedParams,
    MisalignedDem,
    EmptyMask,
    NonFiniteLoss,
    SeriesTooShort,
    DivergedLoss,
    CorruptCheckpoint,
    IncompatibleSteps,
    InstabilityDetected,
    TimestampMismatch,
    EmptyWindow,
    IoError,
    ManifestError,
    GridMismatch,
    UnitUnknown,
    ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::EmptyCrop: return "EmptyCrop";
    case ErrorCode::ExtentMismatch: return "ExtentMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TOutOfRange: return "TOutOfRange";
    case ErrorCode::UninitializedParams: return "UninitializedParams";
    case ErrorCode::MisalignedDem: return "MisalignedDem";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::IncompatibleSteps: return "IncompatibleSteps";
    case ErrorCode::InstabilityDetected: return "InstabilityDetected";
    case ErrorCode::TimestampMismatch: return "TimestampMismatch";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ManifestError: return "ManifestError";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::UnitUnknown: return "UnitUnknown";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what)
{
    throw Error(code, what);
}

inline void expect(bool condition, ErrorCode code, const std::string& what)
{
    if (!condition) fail(code, what);
}

} // namespace precip_slomo
