#pragma once

// Template subtraction for ECG bursts: crossing-based burst detection on the
// rectified signal, filter-built templates, subtraction and a final high-pass.

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "trustemg/iir.hpp"
#include "trustemg/labels.hpp"
#include "trustemg/signal.hpp"

namespace trustemg::ts {

/// Half-open sample range [start, end) in signal coordinates.
struct EcgRegion {
    std::size_t start = 0;
    std::size_t end = 0;

    [[nodiscard]] std::size_t length() const noexcept { return end - start; }
    friend bool operator==(const EcgRegion&, const EcgRegion&) = default;
};

struct DetectorOptions {
    double pad_s = 0.5;
    double slow_window_s = 1.0;
    double fast_window_s = 0.1;
    double min_duration_s = 0.14;
};

inline std::size_t odd_window(double seconds, double fs) {
    return 2 * static_cast<std::size_t>(std::llround(seconds * fs / 2.0)) + 1;
}

/// Regions where the fast moving average of |x| rises above the slow one and
/// falls back below it more than `min_duration_s` later.
inline std::vector<EcgRegion> detect_ecg(const SampleBuffer& noisy, const DetectorOptions& opt = {}) {
    const double fs = noisy.fs();
    const auto pad = static_cast<std::size_t>(std::llround(opt.pad_s * fs));
    const std::size_t n = noisy.size();
    std::vector<double> rect(n + 2 * pad, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        rect[pad + i] = std::abs(noisy[i]);
    }
    const SampleBuffer padded(std::move(rect), fs);
    const SampleBuffer slow = iir::moving_average(padded, odd_window(opt.slow_window_s, fs));
    const SampleBuffer fast = iir::moving_average(padded, odd_window(opt.fast_window_s, fs));

    const double min_len = opt.min_duration_s * fs;
    std::vector<EcgRegion> regions;
    int last_sign = 0;
    std::ptrdiff_t open_at = -1;
    for (std::size_t i = 0; i < padded.size(); ++i) {
        const double d = fast[i] - slow[i];
        const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
        if (s == 0) {
            continue;
        }
        if (s > 0 && last_sign < 0) {
            open_at = static_cast<std::ptrdiff_t>(i);
        } else if (s < 0 && last_sign > 0 && open_at >= 0) {
            const auto up = static_cast<std::size_t>(open_at);
            const std::size_t a = up > pad ? up - pad : 0;
            const std::size_t b = std::min(i > pad ? i - pad : 0, n);
            if (a < b && static_cast<double>(b - a) > min_len) {
                regions.push_back({a, b});
            }
            open_at = -1;
        }
        last_sign = s;
    }
    return regions;
}

/// Inside each region the low-frequency template x - HPF50(x) is subtracted; the
/// whole buffer is then high-passed at 40 Hz.
inline SampleBuffer ts_denoise(const SampleBuffer& noisy, const std::vector<EcgRegion>& regions) {
    std::vector<double> out(noisy.vec());
    if (!regions.empty()) {
        const SampleBuffer hp50 = iir::apply_zero_phase(iir::highpass4(50.0, noisy.fs()), noisy);
        for (const auto& r : regions) {
            require(r.start < r.end && r.end <= noisy.size(), Errc::InvalidArgument, "ECG region out of bounds");
            for (std::size_t i = r.start; i < r.end; ++i) {
                out[i] = hp50[i];
            }
        }
    }
    return iir::apply_zero_phase(iir::highpass4(40.0, noisy.fs()), SampleBuffer(std::move(out), noisy.fs()));
}

struct TsResult {
    SampleBuffer output;
    std::vector<EcgRegion> regions;
};

/// TS for the ECG label, the fixed IIR filter for every other present label.
inline TsResult ts_iir_denoise(const SampleBuffer& noisy, const LabelSet& labels,
                               iir::MoaSource moa = iir::MoaSource::Nstdb) {
    require(!labels.empty(), Errc::InvalidArgument, "at least one contaminant label required");
    TsResult result{noisy, {}};
    if (labels.contains(Contaminant::ECG)) {
        result.regions = detect_ecg(noisy);
        result.output = ts_denoise(noisy, result.regions);
    }
    for (Contaminant c : kAllContaminants) {
        if (c != Contaminant::ECG && labels.contains(c)) {
            result.output = iir::apply_zero_phase(iir::filter_for(c, noisy.fs(), moa), result.output);
        }
    }
    return result;
}

inline nlohmann::ordered_json to_json(const std::vector<EcgRegion>& regions, double fs) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : regions) {
        arr.push_back({{"start", r.start}, {"end", r.end}, {"duration_s", static_cast<double>(r.length()) / fs}});
    }
    return arr;
}

} // namespace trustemg::ts
