#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evocollapse {

/// Failure categories; the CLI prints the class name as a machine-parsable tag.
enum class ErrorClass {
    InvalidArgument,
    Io,
    MissingTensor,
    ShapeMismatch,
    NonFinite,
    Incompatible,
    Infeasible,
};

constexpr std::string_view error_class_name(ErrorClass c) noexcept {
    switch (c) {
        case ErrorClass::InvalidArgument: return "invalid_argument";
        case ErrorClass::Io: return "io_error";
        case ErrorClass::MissingTensor: return "missing_tensor";
        case ErrorClass::ShapeMismatch: return "shape_mismatch";
        case ErrorClass::NonFinite: return "non_finite";
        case ErrorClass::Incompatible: return "incompatible";
        case ErrorClass::Infeasible: return "infeasible";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}

    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

[[noreturn]] inline void fail(ErrorClass cls, const std::string& what) { throw Error(cls, what); }

}  // namespace evocollapse
