#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sparsesplat {

enum class ErrorCode {
    BehindCamera,
    OutOfBounds,
    ZeroQuaternion,
    SingularCovariance,
    DegreeMismatch,
    ForwardStateMissing,
    UnknownView,
    DegenerateBox,
    InsufficientVisibility,
    EmptyImage,
    InvalidStep,
    FeatureViewMismatch,
    SizeMismatch,
    ShapeMismatch,
    EmptyField,
    InvalidConfig,
    InvalidArgument,
    IoError,
    ParseError,
};

/// Machine-readable snake_case name, used in CLI diagnostics.
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace sparsesplat
