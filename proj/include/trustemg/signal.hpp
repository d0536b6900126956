#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "trustemg/error.hpp"
#include "trustemg/fft.hpp"

namespace trustemg {

/// A finite run of real samples at a fixed sample rate. Carries clean, noisy and
/// enhanced waveforms alike.
class SampleBuffer {
public:
    SampleBuffer() = default;

    SampleBuffer(std::vector<double> samples, double fs) : samples_(std::move(samples)), fs_(fs) {
        require(std::isfinite(fs_) && fs_ > 0.0, Errc::InvalidArgument, "sample rate must be positive");
        for (double v : samples_) {
            require(std::isfinite(v), Errc::InvalidArgument, "non-finite sample");
        }
    }

    [[nodiscard]] std::span<const double> samples() const noexcept { return samples_; }
    [[nodiscard]] const std::vector<double>& vec() const noexcept { return samples_; }
    [[nodiscard]] double fs() const noexcept { return fs_; }
    [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples_.empty(); }
    [[nodiscard]] double operator[](std::size_t i) const { return samples_[i]; }
    [[nodiscard]] double duration() const noexcept { return static_cast<double>(samples_.size()) / fs_; }

    friend bool operator==(const SampleBuffer&, const SampleBuffer&) = default;

private:
    std::vector<double> samples_;
    double fs_ = 1000.0;
};

/// Amplitude spectrum of one non-overlapping STFT frame.
struct StftFrame {
    std::vector<double> frequencies;
    std::vector<double> amplitudes;
    std::size_t frame_index = 0;
    std::size_t window_len = 0;
};

struct Spectrum {
    std::vector<double> frequencies;
    std::vector<double> magnitudes;
};

// ---------------------------------------------------------------------------
// elementwise helpers

inline SampleBuffer add(const SampleBuffer& a, const SampleBuffer& b) {
    require(a.size() == b.size(), Errc::InvalidArgument, "length mismatch in add");
    std::vector<double> out(a.size());
    std::transform(a.samples().begin(), a.samples().end(), b.samples().begin(), out.begin(), std::plus<>());
    return {std::move(out), a.fs()};
}

inline SampleBuffer subtract(const SampleBuffer& a, const SampleBuffer& b) {
    require(a.size() == b.size(), Errc::InvalidArgument, "length mismatch in subtract");
    std::vector<double> out(a.size());
    std::transform(a.samples().begin(), a.samples().end(), b.samples().begin(), out.begin(), std::minus<>());
    return {std::move(out), a.fs()};
}

inline SampleBuffer scale(const SampleBuffer& a, double factor) {
    std::vector<double> out(a.vec());
    for (double& v : out) {
        v *= factor;
    }
    return {std::move(out), a.fs()};
}

inline SampleBuffer zeros_like(const SampleBuffer& a) { return {std::vector<double>(a.size(), 0.0), a.fs()}; }

inline double mean(std::span<const double> x) {
    if (x.empty()) {
        return 0.0;
    }
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Population standard deviation.
inline double stddev(std::span<const double> x) {
    if (x.empty()) {
        return 0.0;
    }
    const double m = mean(x);
    double acc = 0.0;
    for (double v : x) {
        acc += (v - m) * (v - m);
    }
    return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double max_abs(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

inline double median(std::vector<double> x) {
    require(!x.empty(), Errc::InvalidArgument, "median of empty sequence");
    const std::size_t mid = x.size() / 2;
    std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid), x.end());
    double hi = x[mid];
    if (x.size() % 2 == 1) {
        return hi;
    }
    const double lo = *std::max_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// core operations

inline SampleBuffer normalize_max_abs(const SampleBuffer& buf) {
    const double peak = max_abs(buf.samples());
    require(peak > 0.0, Errc::AllZero, "cannot normalize an all-zero buffer");
    std::vector<double> out(buf.vec());
    for (double& v : out) {
        v /= peak;
    }
    return {std::move(out), buf.fs()};
}

/// Non-overlapping segments of `seg_len`; the trailing remainder is dropped.
inline std::vector<SampleBuffer> segment(const SampleBuffer& buf, std::size_t seg_len) {
    require(seg_len > 0, Errc::InvalidArgument, "segment length must be positive");
    std::vector<SampleBuffer> out;
    const std::size_t count = buf.size() / seg_len;
    out.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        auto first = buf.samples().begin() + static_cast<std::ptrdiff_t>(s * seg_len);
        out.emplace_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(seg_len)), buf.fs());
    }
    return out;
}

inline SampleBuffer concatenate(std::span<const SampleBuffer> parts) {
    require(!parts.empty(), Errc::InvalidArgument, "nothing to concatenate");
    std::vector<double> out;
    for (const auto& p : parts) {
        require(p.fs() == parts.front().fs(), Errc::InvalidArgument, "sample rate mismatch");
        out.insert(out.end(), p.samples().begin(), p.samples().end());
    }
    return {std::move(out), parts.front().fs()};
}

/// Energy: sum of squared samples.
inline double power(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) {
        acc += v * v;
    }
    return acc;
}

inline double power(const SampleBuffer& buf) { return power(buf.samples()); }

/// Transform length used for spectra: the input length doubled until it reaches
/// the next power of two. Bin-aligned tones stay bin-aligned.
inline std::size_t spectrum_length(std::size_t n) {
    const std::size_t target = fft::next_pow2(n);
    std::size_t m = std::max<std::size_t>(n, 1);
    while (m < target) {
        m *= 2;
    }
    return m;
}

inline Spectrum spectrum(const SampleBuffer& buf) {
    require(buf.size() >= 2, Errc::TooShort, "spectrum needs at least two samples");
    const std::size_t n = spectrum_length(buf.size());
    const auto bins = fft::rfft(buf.samples(), n);
    Spectrum s;
    s.frequencies.resize(bins.size());
    s.magnitudes.resize(bins.size());
    for (std::size_t k = 0; k < bins.size(); ++k) {
        s.frequencies[k] = static_cast<double>(k) * buf.fs() / static_cast<double>(n);
        s.magnitudes[k] = std::abs(bins[k]);
    }
    return s;
}

/// Frequency (Hz) of the largest spectral magnitude; ties go to the lower frequency.
inline double fmax(const SampleBuffer& buf) {
    const Spectrum s = spectrum(buf);
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.magnitudes.size(); ++k) {
        if (s.magnitudes[k] > s.magnitudes[best]) {
            best = k;
        }
    }
    return s.frequencies[best];
}

/// Rectangular, non-overlapping STFT amplitude frames.
inline std::vector<StftFrame> stft(const SampleBuffer& buf, std::size_t window_len) {
    require(window_len > 0 && window_len <= buf.size(), Errc::BadWindow, "window longer than buffer");
    std::vector<StftFrame> frames;
    const std::size_t count = buf.size() / window_len;
    frames.reserve(count);
    for (std::size_t f = 0; f < count; ++f) {
        const auto bins = fft::rfft(buf.samples().subspan(f * window_len, window_len));
        StftFrame frame;
        frame.frame_index = f;
        frame.window_len = window_len;
        frame.frequencies.resize(bins.size());
        frame.amplitudes.resize(bins.size());
        for (std::size_t k = 0; k < bins.size(); ++k) {
            frame.frequencies[k] = static_cast<double>(k) * buf.fs() / static_cast<double>(window_len);
            frame.amplitudes[k] = std::abs(bins[k]);
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

/// Pearson correlation; returns 0 when either input has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size() && !a.empty(), Errc::InvalidArgument, "pearson: length mismatch");
    const double ma = mean(a);
    const double mb = mean(b);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) {
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace trustemg
