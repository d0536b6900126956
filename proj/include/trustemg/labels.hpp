#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trustemg/error.hpp"

namespace trustemg {

/// The five contaminant families, in the fixed processing order.
enum class Contaminant : std::uint8_t { BW = 0, PLI = 1, ECG = 2, MOA = 3, WGN = 4 };

inline constexpr std::array<Contaminant, 5> kAllContaminants = {Contaminant::BW, Contaminant::PLI, Contaminant::ECG,
                                                                Contaminant::MOA, Contaminant::WGN};

constexpr std::string_view to_string(Contaminant c) noexcept {
    switch (c) {
    case Contaminant::BW: return "BW";
    case Contaminant::PLI: return "PLI";
    case Contaminant::ECG: return "ECG";
    case Contaminant::MOA: return "MOA";
    case Contaminant::WGN: return "WGN";
    }
    return "?";
}

inline Contaminant parse_contaminant(std::string_view name) {
    for (Contaminant c : kAllContaminants) {
        if (to_string(c) == name) {
            return c;
        }
    }
    throw Error(Errc::UnknownLabel, "unknown contaminant label '" + std::string(name) + "'");
}

/// Set of contaminant kinds; iteration follows the processing order.
class LabelSet {
public:
    constexpr LabelSet() = default;
    constexpr LabelSet(std::initializer_list<Contaminant> labels) {
        for (Contaminant c : labels) {
            insert(c);
        }
    }

    constexpr void insert(Contaminant c) noexcept { bits_ |= bit(c); }
    [[nodiscard]] constexpr bool contains(Contaminant c) const noexcept { return (bits_ & bit(c)) != 0; }
    [[nodiscard]] constexpr bool empty() const noexcept { return bits_ == 0; }
    [[nodiscard]] constexpr std::size_t size() const noexcept {
        std::size_t n = 0;
        for (Contaminant c : kAllContaminants) {
            n += contains(c) ? 1 : 0;
        }
        return n;
    }
    [[nodiscard]] std::vector<Contaminant> members() const {
        std::vector<Contaminant> out;
        for (Contaminant c : kAllContaminants) {
            if (contains(c)) {
                out.push_back(c);
            }
        }
        return out;
    }
    [[nodiscard]] constexpr std::uint8_t bits() const noexcept { return bits_; }

    /// "BW+PLI+WGN" style key.
    [[nodiscard]] std::string key() const {
        std::string out;
        for (Contaminant c : members()) {
            if (!out.empty()) {
                out += '+';
            }
            out += to_string(c);
        }
        return out;
    }

    friend constexpr bool operator==(LabelSet, LabelSet) = default;

private:
    static constexpr std::uint8_t bit(Contaminant c) noexcept {
        return static_cast<std::uint8_t>(1U << static_cast<unsigned>(c));
    }
    std::uint8_t bits_ = 0;
};

/// Parses "BW,PLI" or "BW+PLI".
inline LabelSet parse_label_set(std::string_view text) {
    LabelSet out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find_first_of(",+", start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        const std::string_view token = text.substr(start, end - start);
        if (!token.empty()) {
            out.insert(parse_contaminant(token));
        }
        start = end + 1;
    }
    return out;
}

} // namespace trustemg
