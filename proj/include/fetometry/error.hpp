/**
 * @file error.hpp
 * @brief Error codes and the exception type thrown across the library
 */
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fetometry {

enum class ErrorCode {
    MissingFrame,
    BadMetadata,
    BadImage,
    BadSize,
    BadThreshold,
    DegenerateFit,
    Unmeasurable,
    BadInput,
    BadConfig,
    IncompleteBiometry,
    InfiniteLoss,
    EmptyOverlap,
    Insufficient,
    BadFixture,
    BadSpec,
    AllFramesFailed,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MissingFrame: return "MissingFrame";
        case ErrorCode::BadMetadata: return "BadMetadata";
        case ErrorCode::BadImage: return "BadImage";
        case ErrorCode::BadSize: return "BadSize";
        case ErrorCode::BadThreshold: return "BadThreshold";
        case ErrorCode::DegenerateFit: return "DegenerateFit";
        case ErrorCode::Unmeasurable: return "Unmeasurable";
        case ErrorCode::BadInput: return "BadInput";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::IncompleteBiometry: return "IncompleteBiometry";
        case ErrorCode::InfiniteLoss: return "InfiniteLoss";
        case ErrorCode::EmptyOverlap: return "EmptyOverlap";
        case ErrorCode::Insufficient: return "Insufficient";
        case ErrorCode::BadFixture: return "BadFixture";
        case ErrorCode::BadSpec: return "BadSpec";
        case ErrorCode::AllFramesFailed: return "AllFramesFailed";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace fetometry
