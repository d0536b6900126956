#pragma once

// Periodized orthogonal DWT with the sym8 filter bank and soft thresholding.
// Odd-length levels are extended by repeating the last sample.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "trustemg/error.hpp"
#include "trustemg/signal.hpp"

namespace trustemg::wavelet {

/// sym8 decomposition low-pass filter.
inline constexpr std::array<double, 16> kSym8Lo = {
    -0.0033824159510061256, -0.0005421323317911481, 0.03169508781149298,  0.007607487324917605,
    -0.1432942383508097,    -0.061273359067658524,  0.4813596512583722,   0.7771857517005235,
    0.3644418948353314,     -0.05194583810770904,   -0.027219029917056003, 0.049137179673607506,
    0.003808752013890615,   -0.01495225833704823,   -0.0003029205147213668, 0.0018899503327594609};

/// Quadrature-mirror high-pass: hi[k] = (-1)^(k+1) lo[L-1-k].
inline constexpr std::array<double, 16> sym8_hi() {
    std::array<double, 16> hi{};
    for (std::size_t k = 0; k < 16; ++k) {
        hi[k] = ((k % 2 == 0) ? -1.0 : 1.0) * kSym8Lo[15 - k];
    }
    return hi;
}

inline constexpr std::array<double, 16> kSym8Hi = sym8_hi();

struct Decomposition {
    std::vector<double> approximation;
    std::vector<std::vector<double>> details; ///< details[0] is the finest level
    std::vector<std::size_t> lengths;         ///< input length at each level, finest first
};

/// One analysis step: out[k] = sum_j f[j] x[(2k + 8 - j) mod N].
inline std::pair<std::vector<double>, std::vector<double>> dwt_step(std::vector<double> x) {
    if (x.size() % 2 == 1) {
        x.push_back(x.back());
    }
    const std::size_t n = x.size();
    const std::size_t half = n / 2;
    std::vector<double> a(half, 0.0);
    std::vector<double> d(half, 0.0);
    for (std::size_t k = 0; k < half; ++k) {
        for (std::size_t j = 0; j < 16; ++j) {
            const std::size_t idx = (2 * k + 8 + 16 * n - j) % n;
            a[k] += kSym8Lo[j] * x[idx];
            d[k] += kSym8Hi[j] * x[idx];
        }
    }
    return {std::move(a), std::move(d)};
}

/// Adjoint of dwt_step, truncated to `out_len`.
inline std::vector<double> idwt_step(const std::vector<double>& a, const std::vector<double>& d, std::size_t out_len) {
    const std::size_t half = a.size();
    const std::size_t n = 2 * half;
    std::vector<double> x(n, 0.0);
    for (std::size_t k = 0; k < half; ++k) {
        for (std::size_t j = 0; j < 16; ++j) {
            const std::size_t idx = (2 * k + 8 + 16 * n - j) % n;
            x[idx] += kSym8Lo[j] * a[k] + kSym8Hi[j] * d[k];
        }
    }
    x.resize(out_len);
    return x;
}

inline Decomposition wavedec(std::span<const double> x, std::size_t levels) {
    require(levels >= 1, Errc::InvalidArgument, "at least one wavelet level");
    Decomposition out;
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t l = 0; l < levels; ++l) {
        require(a.size() >= 2, Errc::TooShort, "signal too short for the requested wavelet depth");
        out.lengths.push_back(a.size());
        auto [next, detail] = dwt_step(std::move(a));
        out.details.push_back(std::move(detail));
        a = std::move(next);
    }
    out.approximation = std::move(a);
    return out;
}

inline std::vector<double> waverec(const Decomposition& dec) {
    std::vector<double> a = dec.approximation;
    for (std::size_t l = dec.details.size(); l-- > 0;) {
        a = idwt_step(a, dec.details[l], dec.lengths[l]);
    }
    return a;
}

/// sign(c) * max(0, |c| - t)
inline double soft_threshold(double c, double t) {
    const double mag = std::abs(c) - t;
    if (mag <= 0.0) {
        return 0.0;
    }
    return std::copysign(mag, c);
}

inline void soft_threshold(std::vector<double>& coeffs, double t) {
    for (double& c : coeffs) {
        c = soft_threshold(c, t);
    }
}

/// Robust noise estimate median(|finest detail|) / 0.6745.
inline double mad_sigma(std::span<const double> x) {
    const auto dec = wavedec(x, 1);
    std::vector<double> mags(dec.details[0].size());
    for (std::size_t i = 0; i < mags.size(); ++i) {
        mags[i] = std::abs(dec.details[0][i]);
    }
    return median(std::move(mags)) / 0.6745;
}

/// Soft-thresholds every detail level with `threshold`; approximation untouched.
inline std::vector<double> denoise(std::span<const double> x, std::size_t levels, double threshold) {
    auto dec = wavedec(x, levels);
    for (auto& d : dec.details) {
        soft_threshold(d, threshold);
    }
    return waverec(dec);
}

} // namespace trustemg::wavelet
