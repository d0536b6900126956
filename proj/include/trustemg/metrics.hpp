#pragma once

// Waveform and feature-level quality metrics for denoised sEMG.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "trustemg/error.hpp"
#include "trustemg/signal.hpp"

namespace trustemg::metrics {

inline constexpr std::size_t kFeatureWindow = 200;
inline constexpr double kActivationFraction = 0.1;
inline constexpr double kMfLowHz = 10.0;
inline constexpr double kMfHighHz = 500.0;

namespace detail {

inline void same_length(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size() && !a.empty(), Errc::ShapeMismatch, "reference and estimate differ in length");
}

inline double error_energy(std::span<const double> x, std::span<const double> y) {
    double e = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        e += d * d;
    }
    return e;
}

} // namespace detail

/// 10 log10(sum x^2 / sum (x - y)^2).
inline double snr_db(std::span<const double> clean, std::span<const double> other) {
    detail::same_length(clean, other);
    const double signal = power(clean);
    require(signal > 0.0, Errc::ZeroReference, "clean reference is all zero");
    const double err = detail::error_energy(clean, other);
    require(err > 0.0, Errc::PerfectMatch, "estimate equals the reference; SNR is infinite");
    return 10.0 * std::log10(signal / err);
}

inline double snr_in(const SampleBuffer& clean, const SampleBuffer& noisy) {
    return snr_db(clean.samples(), noisy.samples());
}

inline double snr_out(const SampleBuffer& clean, const SampleBuffer& enhanced) {
    return snr_db(clean.samples(), enhanced.samples());
}

inline double rmse(std::span<const double> clean, std::span<const double> enhanced) {
    detail::same_length(clean, enhanced);
    return std::sqrt(detail::error_energy(clean, enhanced) / static_cast<double>(clean.size()));
}

/// 100 ||x - y|| / ||x||, in percent.
inline double prd(std::span<const double> clean, std::span<const double> enhanced) {
    detail::same_length(clean, enhanced);
    const double signal = power(clean);
    require(signal > 0.0, Errc::ZeroReference, "clean reference is all zero");
    return 100.0 * std::sqrt(detail::error_energy(clean, enhanced) / signal);
}

struct FeatureVector {
    std::vector<double> values;
    std::size_t frame_len = kFeatureWindow;
    std::vector<bool> mask;      ///< empty: every frame is comparable
    std::size_t degenerate = 0;  ///< active frames skipped for lack of in-band energy

    [[nodiscard]] bool usable(std::size_t i) const { return mask.empty() || mask[i]; }
};

/// Mean |x| over consecutive non-overlapping windows; a trailing partial window is ignored.
inline FeatureVector arv_vector(const SampleBuffer& buf, std::size_t window = kFeatureWindow) {
    require(window > 0 && window <= buf.size(), Errc::BadWindow, "ARV window must fit inside the buffer");
    FeatureVector out;
    out.frame_len = window;
    const std::size_t frames = buf.size() / window;
    out.values.reserve(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t i = f * window; i < (f + 1) * window; ++i) {
            acc += std::abs(buf[i]);
        }
        out.values.push_back(acc / static_cast<double>(window));
    }
    return out;
}

/// Frames whose reference ARV exceeds 10% of the largest frame ARV.
inline std::vector<bool> activation_mask(const SampleBuffer& reference, std::size_t window = kFeatureWindow) {
    const auto arv = arv_vector(reference, window);
    double peak = 0.0;
    for (double v : arv.values) {
        peak = std::max(peak, v);
    }
    std::vector<bool> mask(arv.values.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = arv.values[i] > kActivationFraction * peak;
    }
    return mask;
}

/// Amplitude-weighted mean frequency of each frame over bins in [10, 500] Hz.
/// Frames inactive in `reference` or with no in-band energy are masked out.
inline FeatureVector mf_vector(const SampleBuffer& buf, const SampleBuffer& reference,
                               std::size_t window = kFeatureWindow) {
    require(buf.size() == reference.size(), Errc::ShapeMismatch, "MF reference differs in length");
    require(window > 0 && window <= buf.size(), Errc::BadWindow, "MF window must fit inside the buffer");
    FeatureVector out;
    out.frame_len = window;
    out.mask = activation_mask(reference, window);
    for (const auto& frame : stft(buf, window)) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t k = 0; k < frame.frequencies.size(); ++k) {
            const double f = frame.frequencies[k];
            if (f >= kMfLowHz && f <= kMfHighHz) {
                num += f * frame.amplitudes[k];
                den += frame.amplitudes[k];
            }
        }
        const std::size_t i = out.values.size();
        if (den > 0.0) {
            out.values.push_back(num / den);
        } else {
            out.values.push_back(0.0);
            if (out.mask[i]) {
                out.mask[i] = false;
                ++out.degenerate;
            }
        }
    }
    return out;
}

inline FeatureVector mf_vector(const SampleBuffer& buf, std::size_t window = kFeatureWindow) {
    return mf_vector(buf, buf, window);
}

/// RMSE over frames usable in both vectors.
inline double feature_rmse(const FeatureVector& a, const FeatureVector& b) {
    require(a.values.size() == b.values.size() && a.frame_len == b.frame_len, Errc::ShapeMismatch,
            "feature vectors are on different frame grids");
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (a.usable(i) && b.usable(i)) {
            const double d = a.values[i] - b.values[i];
            acc += d * d;
            ++count;
        }
    }
    require(count > 0, Errc::NoComparableFrames, "no frame is comparable between the feature vectors");
    return std::sqrt(acc / static_cast<double>(count));
}

struct MetricReport {
    double snr_in = 0.0;
    double snr_out = 0.0;
    double snr_imp = 0.0;
    double rmse = 0.0;
    double prd = 0.0;
    double rmse_arv = 0.0;
    double rmse_mf = 0.0;
    std::vector<std::string> undefined; ///< fields that could not be computed (value is NaN)

    [[nodiscard]] bool defined(const std::string& field) const {
        return std::find(undefined.begin(), undefined.end(), field) == undefined.end();
    }
};

/// All metrics of one segment. Infinite SNR and empty MF comparisons are flagged, not thrown.
inline MetricReport evaluate(const SampleBuffer& clean, const SampleBuffer& noisy, const SampleBuffer& enhanced,
                             std::size_t window = kFeatureWindow) {
    require(clean.size() == noisy.size() && clean.size() == enhanced.size(), Errc::ShapeMismatch,
            "clean, noisy and enhanced lengths differ");
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    MetricReport r;
    auto guarded = [&](const char* field, auto&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            if (e.code() != Errc::PerfectMatch && e.code() != Errc::NoComparableFrames) {
                throw;
            }
            r.undefined.emplace_back(field);
            return nan;
        }
    };
    r.snr_in = guarded("snr_in", [&] { return snr_in(clean, noisy); });
    r.snr_out = guarded("snr_out", [&] { return snr_out(clean, enhanced); });
    r.snr_imp = r.snr_out - r.snr_in;
    if (!r.defined("snr_in") || !r.defined("snr_out")) {
        r.undefined.emplace_back("snr_imp");
    }
    r.rmse = rmse(clean.samples(), enhanced.samples());
    r.prd = prd(clean.samples(), enhanced.samples());
    r.rmse_arv = feature_rmse(arv_vector(clean, window), arv_vector(enhanced, window));
    r.rmse_mf = guarded("rmse_mf", [&] {
        return feature_rmse(mf_vector(clean, clean, window), mf_vector(enhanced, clean, window));
    });
    return r;
}

struct Summary {
    double mean = 0.0;
    double stddev = 0.0; ///< sample standard deviation; 0 for a single value
    std::size_t count = 0;
};

/// Mean and sample standard deviation of the finite entries, in order.
inline Summary summarize(std::span<const double> values) {
    Summary s;
    double acc = 0.0;
    for (double v : values) {
        if (std::isfinite(v)) {
            acc += v;
            ++s.count;
        }
    }
    if (s.count == 0) {
        s.mean = std::numeric_limits<double>::quiet_NaN();
        s.stddev = s.mean;
        return s;
    }
    s.mean = acc / static_cast<double>(s.count);
    if (s.count > 1) {
        double ss = 0.0;
        for (double v : values) {
            if (std::isfinite(v)) {
                ss += (v - s.mean) * (v - s.mean);
            }
        }
        s.stddev = std::sqrt(ss / static_cast<double>(s.count - 1));
    }
    return s;
}

} // namespace trustemg::metrics
