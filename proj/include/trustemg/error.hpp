#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trustemg {

enum class Errc {
    InvalidArgument,
    AllZero,
    BadDuration,
    UnknownLabel,
    ZeroNoise,
    BadCutoff,
    TooShort,
    BadWindow,
    NoConvergence,
    TooFewModes,
    PerfectMatch,
    ZeroReference,
    NoComparableFrames,
    ShapeMismatch,
    StaleCache,
    EmptyDataset,
    BadMagic,
    Io,
    InvalidConfig,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::AllZero: return "AllZero";
    case Errc::BadDuration: return "BadDuration";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::ZeroNoise: return "ZeroNoise";
    case Errc::BadCutoff: return "BadCutoff";
    case Errc::TooShort: return "TooShort";
    case Errc::BadWindow: return "BadWindow";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::TooFewModes: return "TooFewModes";
    case Errc::PerfectMatch: return "PerfectMatch";
    case Errc::ZeroReference: return "ZeroReference";
    case Errc::NoComparableFrames: return "NoComparableFrames";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::StaleCache: return "StaleCache";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::BadMagic: return "BadMagic";
    case Errc::Io: return "Io";
    case Errc::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

/// Exception carrying a machine-checkable error code alongside the message.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline void require(bool condition, Errc code, const std::string& what) {
    if (!condition) {
        throw Error(code, what);
    }
}

} // namespace trustemg
