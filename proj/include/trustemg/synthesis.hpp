#pragma once

// Surrogate clean sEMG, the five contaminant families, and SNR-controlled mixing.
// Every generator is a pure function of its seed.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "trustemg/error.hpp"
#include "trustemg/iir.hpp"
#include "trustemg/labels.hpp"
#include "trustemg/signal.hpp"

namespace trustemg::synth {

enum class Split { Train, Test };

inline std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(std::string_view s) {
    if (s == "train") {
        return Split::Train;
    }
    require(s == "test", Errc::InvalidArgument, "split must be train or test");
    return Split::Test;
}

/// splitmix64 finalizer; derives independent stream seeds from (seed, stream).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27U)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31U);
}

inline std::vector<double> gaussian_noise(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> out(n);
    for (double& v : out) {
        v = dist(rng);
    }
    return out;
}

inline std::size_t sample_count(double fs, double duration) {
    return static_cast<std::size_t>(std::llround(fs * duration));
}

/// Trapezoidal activation pattern scaled to the segment duration: active for
/// `on_fraction` of the duration (5 s on / 3 s off by default) with linear ramps.
struct Envelope {
    double on_fraction = 5.0 / 8.0;
    double ramp_fraction = 0.1; ///< of the active period, per side
    double rest_level = 0.05; ///< background activity between contractions
    double gain = 1.0;

    [[nodiscard]] double at(double t, double duration) const {
        const double on = on_fraction * duration;
        const double ramp = ramp_fraction * on;
        double level = rest_level;
        if (t < on) {
            double a = 1.0;
            if (ramp > 0.0 && t < ramp) {
                a = t / ramp;
            } else if (ramp > 0.0 && t > on - ramp) {
                a = (on - t) / ramp;
            }
            level = std::max(rest_level, a);
        }
        return gain * level;
    }
};

/// Surrogate clean sEMG: band-passed (20 Hz to Nyquist) Gaussian noise under an
/// activation envelope, max-abs normalized.
inline SampleBuffer gen_clean(std::uint64_t seed, double fs, double duration, const Envelope& envelope = {}) {
    require(fs == 1000.0, Errc::InvalidArgument, "clean surrogate is generated at 1 kHz");
    require(duration >= 2.0, Errc::BadDuration, "duration must be at least 2 s");
    const std::size_t n = sample_count(fs, duration);
    const std::size_t margin = 500;
    SampleBuffer raw(gaussian_noise(derive_seed(seed, 0xC1EA), n + 2 * margin), fs);
    const auto band = iir::design_butterworth(4, iir::FilterKind::Bandpass, {20.0, 500.0}, fs);
    const SampleBuffer filtered = iir::apply_zero_phase(band, raw);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = filtered[i + margin] * envelope.at(static_cast<double>(i) / fs, duration);
    }
    return normalize_max_abs(SampleBuffer(std::move(out), fs));
}

/// Power-line frequencies available to each split.
inline std::vector<double> pli_grid(Split split) {
    std::vector<double> grid;
    if (split == Split::Train) {
        for (int k = 0; k <= 15; ++k) {
            grid.push_back((584.0 + 2.0 * k) / 10.0); // 58.4 .. 61.4 step 0.2
        }
    } else {
        for (int k = 0; 58.8 + 0.375 * k <= 61.5; ++k) {
            grid.push_back(58.8 + 0.375 * k); // 58.8 .. 61.425 step 0.375
        }
    }
    return grid;
}

struct PliTone {
    double frequency = 0.0;
    double phase = 0.0;
};

inline PliTone draw_pli(std::uint64_t seed, Split split) {
    const auto grid = pli_grid(split);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    PliTone tone;
    tone.frequency = grid[pick(rng)];
    tone.phase = phase(rng);
    return tone;
}

/// ECG surrogate with the sample positions of its R peaks.
struct EcgTrace {
    SampleBuffer signal;
    std::vector<std::size_t> r_peaks;
};

inline EcgTrace gen_ecg(std::uint64_t seed, double fs, double duration) {
    struct Wave {
        double offset_s;
        double amplitude;
        double width_s;
    };
    // P, Q, R, S, T
    static constexpr std::array<Wave, 5> waves{{{-0.20, 0.15, 0.040},
                                                {-0.04, -0.15, 0.016},
                                                {0.00, 1.00, 0.016},
                                                {0.04, -0.25, 0.016},
                                                {0.25, 0.35, 0.060}}};
    const std::size_t n = sample_count(fs, duration);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> bpm(60.0, 100.0);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double rr = 60.0 / bpm(rng);

    std::vector<double> beats;
    for (double t = -rr + unit(rng) * rr; t < duration + rr; t += rr * (1.0 + jitter(rng))) {
        beats.push_back(t);
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        double v = 0.0;
        for (double b : beats) {
            const double dt0 = t - b;
            if (dt0 < -0.4 || dt0 > 0.5) {
                continue;
            }
            for (const Wave& w : waves) {
                const double dt = dt0 - w.offset_s;
                v += w.amplitude * std::exp(-0.5 * dt * dt / (w.width_s * w.width_s));
            }
        }
        out[i] = v;
    }
    EcgTrace trace{SampleBuffer(std::move(out), fs), {}};
    for (double b : beats) {
        if (b >= 0.0 && b < duration) {
            trace.r_peaks.push_back(static_cast<std::size_t>(std::llround(b * fs)));
        }
    }
    return trace;
}

/// Sparse biphasic electrode-tap transients (Poisson, at least one per segment), low-passed at 20 Hz.
inline SampleBuffer gen_moa(std::uint64_t seed, double fs, double duration) {
    const std::size_t n = sample_count(fs, duration);
    const std::size_t margin = 300;
    const std::size_t total = n + 2 * margin;
    std::mt19937_64 rng(seed);
    std::poisson_distribution<int> events(1.0 * duration);
    std::uniform_real_distribution<double> where(0.0, static_cast<double>(n));
    std::uniform_real_distribution<double> width(0.050, 0.150);
    std::uniform_real_distribution<double> amp(0.5, 1.0);
    std::bernoulli_distribution sign(0.5);
    const int count = std::max(1, events(rng));
    std::vector<double> raw(total, 0.0);
    for (int e = 0; e < count; ++e) {
        const double centre = where(rng) + static_cast<double>(margin);
        const double w = width(rng) * fs;
        const double a = amp(rng) * (sign(rng) ? 1.0 : -1.0);
        const double start = centre - w / 2.0;
        for (auto i = static_cast<std::size_t>(std::max(0.0, std::ceil(start)));
             i < total && static_cast<double>(i) <= start + w; ++i) {
            raw[i] += a * std::sin(2.0 * std::numbers::pi * (static_cast<double>(i) - start) / w);
        }
    }
    const auto lp = iir::lowpass4(20.0, fs);
    const SampleBuffer smooth = iir::apply_zero_phase(lp, SampleBuffer(std::move(raw), fs));
    return {std::vector<double>(smooth.vec().begin() + static_cast<std::ptrdiff_t>(margin),
                                smooth.vec().begin() + static_cast<std::ptrdiff_t>(margin + n)),
            fs};
}

inline SampleBuffer gen_contaminant(Contaminant label, std::uint64_t seed, double fs, double duration,
                                    Split split) {
    require(duration >= 2.0, Errc::BadDuration, "duration must be at least 2 s");
    const std::size_t n = sample_count(fs, duration);
    switch (label) {
    case Contaminant::PLI: {
        const PliTone tone = draw_pli(seed, split);
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = std::sin(2.0 * std::numbers::pi * tone.frequency * static_cast<double>(i) / fs + tone.phase);
        }
        return {std::move(out), fs};
    }
    case Contaminant::WGN: return {gaussian_noise(seed, n), fs};
    case Contaminant::BW: {
        const std::size_t margin = 3000;
        SampleBuffer raw(gaussian_noise(seed, n + 2 * margin), fs);
        const SampleBuffer low = iir::apply_zero_phase(iir::lowpass4(1.0, fs), raw);
        return {std::vector<double>(low.vec().begin() + static_cast<std::ptrdiff_t>(margin),
                                    low.vec().begin() + static_cast<std::ptrdiff_t>(margin + n)),
                fs};
    }
    case Contaminant::ECG: return gen_ecg(seed, fs, duration).signal;
    case Contaminant::MOA: return gen_moa(seed, fs, duration);
    }
    throw Error(Errc::UnknownLabel, "unknown contaminant");
}

/// Prepares an externally recorded contaminant; motion-artifact recordings get
/// the 51-point moving average.
inline SampleBuffer prepare_recorded(const SampleBuffer& recording, Contaminant label) {
    if (label == Contaminant::MOA) {
        return iir::moving_average(recording, 51);
    }
    return recording;
}

struct MixSpec {
    double snr_db = 0.0;
    LabelSet components;
    std::uint64_t seed = 0;
    Split split = Split::Test;
};

inline void validate(const MixSpec& spec) {
    require(std::isfinite(spec.snr_db), Errc::InvalidArgument, "SNR must be finite");
    const std::size_t k = spec.components.size();
    require(k == 1 || k == 3 || k == 5, Errc::InvalidArgument, "a mix has 1, 3 or 5 contaminant kinds");
}

struct ContaminatedSegment {
    SampleBuffer clean;
    SampleBuffer noise;
    SampleBuffer noisy;
    MixSpec spec;
    std::vector<SampleBuffer> components; ///< scaled, in label order
};

/// Mixes pre-generated components (one per label, label order) at the spec's SNR.
/// Components are first equalized in energy; the sum is then rescaled so the
/// total noise energy matches the target exactly.
inline ContaminatedSegment mix_components(const SampleBuffer& clean, std::vector<SampleBuffer> components,
                                          const MixSpec& spec) {
    validate(spec);
    require(components.size() == spec.components.size(), Errc::InvalidArgument,
            "one component per contaminant label required");
    const double p_signal = power(clean);
    require(p_signal > 0.0, Errc::AllZero, "clean segment is all zero");
    const double p_total = p_signal * std::pow(10.0, -spec.snr_db / 10.0);
    const double share = p_total / static_cast<double>(components.size());

    for (auto& c : components) {
        require(c.size() == clean.size() && c.fs() == clean.fs(), Errc::InvalidArgument,
                "component length or rate differs from clean");
        const double e = power(c);
        require(e > 0.0, Errc::ZeroNoise, "contaminant component has zero energy");
        c = scale(c, std::sqrt(share / e));
    }
    std::vector<double> noise(clean.size(), 0.0);
    for (const auto& c : components) {
        for (std::size_t i = 0; i < noise.size(); ++i) {
            noise[i] += c[i];
        }
    }
    const double e_sum = power(noise);
    require(e_sum > 0.0, Errc::ZeroNoise, "compound noise cancelled to zero");
    const double correction = std::sqrt(p_total / e_sum);
    for (double& v : noise) {
        v *= correction;
    }
    for (auto& c : components) {
        c = scale(c, correction);
    }
    SampleBuffer noise_buf(std::move(noise), clean.fs());
    SampleBuffer noisy = add(clean, noise_buf);
    return {clean, std::move(noise_buf), std::move(noisy), spec, std::move(components)};
}

/// Generates the spec's contaminants from its seed and mixes them into `clean`.
inline ContaminatedSegment mix(const SampleBuffer& clean, const MixSpec& spec) {
    validate(spec);
    std::vector<SampleBuffer> comps;
    for (Contaminant c : spec.components.members()) {
        comps.push_back(gen_contaminant(c, derive_seed(spec.seed, static_cast<std::uint64_t>(c) + 1), clean.fs(),
                                        clean.duration(), spec.split));
    }
    return mix_components(clean, std::move(comps), spec);
}

inline double measured_snr_db(const SampleBuffer& clean, const SampleBuffer& noise) {
    return 10.0 * std::log10(power(clean) / power(noise));
}

} // namespace trustemg::synth
