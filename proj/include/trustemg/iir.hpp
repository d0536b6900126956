#pragma once

// Butterworth / notch design in second-order sections, zero-phase application,
// and the per-contaminant IIR denoising recipe.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustemg/error.hpp"
#include "trustemg/labels.hpp"
#include "trustemg/signal.hpp"

namespace trustemg::iir {

struct Biquad {
    double b0 = 1.0;
    double b1 = 0.0;
    double b2 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;

    [[nodiscard]] std::complex<double> response(double omega) const {
        const std::complex<double> z1 = std::polar(1.0, -omega);
        const std::complex<double> z2 = z1 * z1;
        return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
    }

    /// Largest pole radius of 1 + a1 z^-1 + a2 z^-2.
    [[nodiscard]] double pole_radius() const {
        const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2));
        const auto r1 = std::abs((-a1 + disc) / 2.0);
        const auto r2 = std::abs((-a1 - disc) / 2.0);
        return std::max(r1, r2);
    }
};

enum class FilterKind { Lowpass, Highpass, Bandpass, Notch, Identity };

inline std::string to_string(FilterKind k) {
    switch (k) {
    case FilterKind::Lowpass: return "lowpass";
    case FilterKind::Highpass: return "highpass";
    case FilterKind::Bandpass: return "bandpass";
    case FilterKind::Notch: return "notch";
    case FilterKind::Identity: return "identity";
    }
    return "unknown";
}

struct FilterDescription {
    FilterKind kind = FilterKind::Identity;
    std::vector<double> cutoffs;
    int order = 0;
    double q = 0.0;
    std::string note;
};

/// Immutable cascade of stable second-order sections.
class BiquadCascade {
public:
    BiquadCascade(std::vector<Biquad> sections, double fs, FilterDescription description)
        : sections_(std::move(sections)), fs_(fs), description_(std::move(description)) {
        for (const auto& s : sections_) {
            require(std::isfinite(s.b0) && std::isfinite(s.b1) && std::isfinite(s.b2) && std::isfinite(s.a1) &&
                        std::isfinite(s.a2),
                    Errc::BadCutoff, "non-finite filter coefficient");
            require(s.pole_radius() < 1.0, Errc::BadCutoff, "unstable section");
        }
    }

    static BiquadCascade identity(double fs) {
        return {{Biquad{}}, fs, FilterDescription{FilterKind::Identity, {}, 0, 0.0, ""}};
    }

    [[nodiscard]] const std::vector<Biquad>& sections() const noexcept { return sections_; }
    [[nodiscard]] double fs() const noexcept { return fs_; }
    [[nodiscard]] const FilterDescription& description() const noexcept { return description_; }

    [[nodiscard]] std::complex<double> response(double freq_hz) const {
        const double omega = 2.0 * std::numbers::pi * freq_hz / fs_;
        std::complex<double> h(1.0, 0.0);
        for (const auto& s : sections_) {
            h *= s.response(omega);
        }
        return h;
    }

    [[nodiscard]] double magnitude_db(double freq_hz) const { return 20.0 * std::log10(std::abs(response(freq_hz))); }

private:
    std::vector<Biquad> sections_;
    double fs_;
    FilterDescription description_;
};

namespace detail {

using cplx = std::complex<double>;

inline cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

inline double prewarp(double f, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f / fs); }

/// Sections from digital poles (upper half-plane representatives) and a fixed
/// numerator shape, each normalized to unit gain at `omega_ref`.
inline std::vector<Biquad> sections_from_poles(const std::vector<cplx>& poles, std::array<double, 3> numerator,
                                               double omega_ref) {
    std::vector<Biquad> out;
    for (const cplx& p : poles) {
        if (p.imag() < 0.0) {
            continue;
        }
        Biquad s{numerator[0], numerator[1], numerator[2], -2.0 * p.real(), std::norm(p)};
        const double g = std::abs(s.response(omega_ref));
        s.b0 /= g;
        s.b1 /= g;
        s.b2 /= g;
        out.push_back(s);
    }
    return out;
}

inline std::vector<cplx> prototype_poles(int order) {
    std::vector<cplx> p;
    for (int k = 0; k < order; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + order + 1.0) / (2.0 * order);
        p.push_back(std::polar(1.0, theta));
    }
    return p;
}

} // namespace detail

/// Butterworth design by bilinear transform with pre-warping. `order` is the
/// prototype order (even). A band-pass has 2*order poles. A band-pass whose
/// upper edge sits at Nyquist degenerates to the high-pass at the lower edge.
inline BiquadCascade design_butterworth(int order, FilterKind kind, std::vector<double> cutoffs, double fs) {
    require(fs > 0.0, Errc::BadCutoff, "sample rate must be positive");
    require(order >= 2 && order % 2 == 0, Errc::InvalidArgument, "order must be a positive even integer");
    const double nyq = fs / 2.0;
    FilterDescription desc{kind, cutoffs, order, 0.0, ""};
    using detail::cplx;
    const auto proto = detail::prototype_poles(order);

    if (kind == FilterKind::Bandpass) {
        require(cutoffs.size() == 2 && cutoffs[0] > 0.0 && cutoffs[0] < cutoffs[1] && cutoffs[1] <= nyq,
                Errc::BadCutoff, "band-pass needs 0 < low < high <= fs/2");
        if (cutoffs[1] >= nyq) {
            auto hp = design_butterworth(order, FilterKind::Highpass, {cutoffs[0]}, fs);
            desc.note = "upper edge at Nyquist: no low-pass stage";
            return {hp.sections(), fs, desc};
        }
        const double wl = detail::prewarp(cutoffs[0], fs);
        const double wh = detail::prewarp(cutoffs[1], fs);
        const double w0 = std::sqrt(wl * wh);
        const double bw = wh - wl;
        std::vector<cplx> digital;
        for (const cplx& p : proto) {
            const cplx pb = p * bw;
            const cplx disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
            digital.push_back(detail::bilinear((pb + disc) / 2.0, fs));
            digital.push_back(detail::bilinear((pb - disc) / 2.0, fs));
        }
        const double omega0 = 2.0 * std::atan(w0 / (2.0 * fs));
        return {detail::sections_from_poles(digital, {1.0, 0.0, -1.0}, omega0), fs, desc};
    }

    require(cutoffs.size() == 1 && cutoffs[0] > 0.0 && cutoffs[0] < nyq, Errc::BadCutoff,
            "cutoff must satisfy 0 < fc < fs/2");
    const double wc = detail::prewarp(cutoffs[0], fs);
    std::vector<cplx> digital;
    if (kind == FilterKind::Lowpass) {
        for (const cplx& p : proto) {
            digital.push_back(detail::bilinear(p * wc, fs));
        }
        return {detail::sections_from_poles(digital, {1.0, 2.0, 1.0}, 0.0), fs, desc};
    }
    require(kind == FilterKind::Highpass, Errc::InvalidArgument, "unsupported Butterworth kind");
    for (const cplx& p : proto) {
        digital.push_back(detail::bilinear(wc / p, fs));
    }
    return {detail::sections_from_poles(digital, {1.0, -2.0, 1.0}, std::numbers::pi), fs, desc};
}

/// Second-order notch whose -3 dB bandwidth is exactly f0/q.
inline BiquadCascade design_notch(double f0, double q, double fs) {
    require(fs > 0.0 && f0 > 0.0 && f0 < fs / 2.0, Errc::BadCutoff, "notch needs 0 < f0 < fs/2");
    require(q > 0.0 && std::isfinite(q), Errc::BadCutoff, "notch quality factor must be positive");
    const double w0 = 2.0 * std::numbers::pi * f0 / fs;
    const double bw = w0 / q;
    const double beta = std::tan(bw / 2.0);
    const double gain = 1.0 / (1.0 + beta);
    const double c = std::cos(w0);
    Biquad s{gain, -2.0 * gain * c, gain, -2.0 * gain * c, 2.0 * gain - 1.0};
    return {{s}, fs, FilterDescription{FilterKind::Notch, {f0}, 2, q, ""}};
}

namespace detail {

/// Per-section state for a unit-step steady state (direct form II transposed).
inline std::vector<std::array<double, 2>> step_initial_state(const BiquadCascade& f) {
    std::vector<std::array<double, 2>> zi;
    double level = 1.0;
    for (const auto& s : f.sections()) {
        const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        const double z2 = s.b2 - s.a2 * g;
        const double z1 = s.b1 - s.a1 * g + z2;
        zi.push_back({z1 * level, z2 * level});
        level *= g;
    }
    return zi;
}

inline void filter_in_place(const BiquadCascade& f, std::vector<double>& x,
                            const std::vector<std::array<double, 2>>& zi, double x0) {
    for (std::size_t k = 0; k < f.sections().size(); ++k) {
        const Biquad& s = f.sections()[k];
        double z1 = zi[k][0] * x0;
        double z2 = zi[k][1] * x0;
        for (double& v : x) {
            const double in = v;
            const double y = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * y + z2;
            z2 = s.b2 * in - s.a2 * y;
            v = y;
        }
    }
}

} // namespace detail

inline std::size_t zero_phase_padding(const BiquadCascade& f) {
    return 3 * std::max<std::size_t>(2 * f.sections().size(), 24);
}

/// Causal single pass from rest. Used for inspection, not denoising.
inline SampleBuffer apply_forward(const BiquadCascade& f, const SampleBuffer& buf) {
    std::vector<double> x(buf.vec());
    const std::vector<std::array<double, 2>> rest(f.sections().size(), {0.0, 0.0});
    detail::filter_in_place(f, x, rest, 0.0);
    return {std::move(x), buf.fs()};
}

/// Forward-backward filtering with odd reflection padding and steady-state
/// initial conditions. Zero phase; squared magnitude response.
inline SampleBuffer apply_zero_phase(const BiquadCascade& f, const SampleBuffer& buf) {
    require(buf.fs() == f.fs(), Errc::InvalidArgument, "filter and signal sample rates differ");
    const std::size_t pad = zero_phase_padding(f);
    const std::size_t n = buf.size();
    require(n > pad, Errc::TooShort, "signal shorter than zero-phase padding");
    const auto& x = buf.vec();

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) {
        ext.push_back(2.0 * x[0] - x[i]);
    }
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) {
        ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    const auto zi = detail::step_initial_state(f);
    detail::filter_in_place(f, ext, zi, ext.front());
    std::reverse(ext.begin(), ext.end());
    detail::filter_in_place(f, ext, zi, ext.front());
    std::reverse(ext.begin(), ext.end());

    return {std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                                ext.begin() + static_cast<std::ptrdiff_t>(pad + n)),
            buf.fs()};
}

/// Centered moving average with edge replication; `window` odd.
inline SampleBuffer moving_average(const SampleBuffer& buf, std::size_t window) {
    require(window >= 1 && window % 2 == 1 && window <= buf.size(), Errc::BadWindow,
            "window must be odd and no longer than the signal");
    const auto n = static_cast<std::ptrdiff_t>(buf.size());
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    const auto& x = buf.vec();
    auto at = [&](std::ptrdiff_t i) { return x[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, n - 1))]; };
    std::vector<double> out(buf.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::ptrdiff_t j = i - half; j <= i + half; ++j) {
            acc += at(j);
        }
        out[static_cast<std::size_t>(i)] = acc / static_cast<double>(window);
    }
    return {std::move(out), buf.fs()};
}

// ---------------------------------------------------------------------------
// denoising recipe

/// Which recording family the motion artifact came from; selects the high-pass corner.
enum class MoaSource { Nstdb, Tapping };

inline BiquadCascade highpass4(double fc, double fs) { return design_butterworth(4, FilterKind::Highpass, {fc}, fs); }
inline BiquadCascade lowpass4(double fc, double fs) { return design_butterworth(4, FilterKind::Lowpass, {fc}, fs); }

/// The filter removing one contaminant family.
inline BiquadCascade filter_for(Contaminant c, double fs, MoaSource moa = MoaSource::Nstdb) {
    switch (c) {
    case Contaminant::BW: return highpass4(10.0, fs);
    case Contaminant::PLI: return design_notch(60.0, 5.0, fs);
    case Contaminant::ECG: return highpass4(40.0, fs);
    case Contaminant::MOA: return highpass4(moa == MoaSource::Nstdb ? 20.0 : 40.0, fs);
    case Contaminant::WGN: return design_butterworth(4, FilterKind::Bandpass, {20.0, 500.0}, fs);
    }
    throw Error(Errc::UnknownLabel, "unknown contaminant");
}

/// Applies, in fixed BW, PLI, ECG, MOA, WGN order, the filter of each present label.
inline SampleBuffer iir_denoise(const SampleBuffer& noisy, const LabelSet& labels,
                                MoaSource moa = MoaSource::Nstdb) {
    require(!labels.empty(), Errc::InvalidArgument, "at least one contaminant label required");
    SampleBuffer out = noisy;
    for (Contaminant c : kAllContaminants) {
        if (labels.contains(c)) {
            out = apply_zero_phase(filter_for(c, noisy.fs(), moa), out);
        }
    }
    return out;
}

inline nlohmann::ordered_json to_json(const BiquadCascade& f) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(f.description().kind);
    j["fs"] = f.fs();
    j["cutoffs"] = f.description().cutoffs;
    if (f.description().order > 0) {
        j["order"] = f.description().order;
    }
    if (f.description().q > 0.0) {
        j["q"] = f.description().q;
    }
    if (!f.description().note.empty()) {
        j["note"] = f.description().note;
    }
    auto& secs = j["sections"] = nlohmann::ordered_json::array();
    for (const auto& s : f.sections()) {
        secs.push_back({{"b", {s.b0, s.b1, s.b2}}, {"a", {1.0, s.a1, s.a2}}});
    }
    return j;
}

} // namespace trustemg::iir
