#include "sparsesplat/error.hpp"

namespace sparsesplat {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::BehindCamera: return "behind_camera";
    case ErrorCode::OutOfBounds: return "out_of_bounds";
    case ErrorCode::ZeroQuaternion: return "zero_quaternion";
    case ErrorCode::SingularCovariance: return "singular_covariance";
    case ErrorCode::DegreeMismatch: return "degree_mismatch";
    case ErrorCode::ForwardStateMissing: return "forward_state_missing";
    case ErrorCode::UnknownView: return "unknown_view";
    case ErrorCode::DegenerateBox: return "degenerate_box";
    case ErrorCode::InsufficientVisibility: return "insufficient_visibility";
    case ErrorCode::EmptyImage: return "empty_image";
    case ErrorCode::InvalidStep: return "invalid_step";
    case ErrorCode::FeatureViewMismatch: return "feature_view_mismatch";
    case ErrorCode::SizeMismatch: return "size_mismatch";
    case ErrorCode::ShapeMismatch: return "shape_mismatch";
    case ErrorCode::EmptyField: return "empty_field";
    case ErrorCode::InvalidConfig: return "invalid_config";
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::IoError: return "io_error";
    case ErrorCode::ParseError: return "parse_error";
    }
    return "unknown";
}

} // namespace sparsesplat
