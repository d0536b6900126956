#pragma once

// Per-contaminant cleanup of decomposition modes and waveform reconstruction.
//
// Frequency-gated rules (BW, PLI, MOA) and the ECG correlation rule consider the
// residue as one more candidate after the modes; the WGN rules touch modes only.
// Candidate index imfs.size() denotes the residue in the decision log.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustemg/decomposition.hpp"
#include "trustemg/iir.hpp"
#include "trustemg/labels.hpp"
#include "trustemg/signal.hpp"
#include "trustemg/wavelet.hpp"

namespace trustemg::rules {

enum class Action { Drop, Keep, Filter, WaveletThreshold, IntervalThreshold };

inline std::string to_string(Action a) {
    switch (a) {
    case Action::Drop: return "drop";
    case Action::Keep: return "keep";
    case Action::Filter: return "filter";
    case Action::WaveletThreshold: return "wavelet_threshold";
    case Action::IntervalThreshold: return "interval_threshold";
    }
    return "?";
}

struct ModeDecision {
    std::size_t mode_index = 0;
    bool residue = false;
    Action action = Action::Keep;
    std::string detail; ///< filter spec or threshold value
    Contaminant label = Contaminant::BW;
    std::string rule;

    friend bool operator==(const ModeDecision&, const ModeDecision&) = default;
};

using DecisionLog = std::vector<ModeDecision>;

struct RuleOptions {
    double bw_fmax_hz = 10.0;
    double pli_low_hz = 50.0;
    double pli_high_hz = 70.0;
    double pli_q = 20.0;
    double ecg_template_hz = 40.0;
    double ecg_mode_hp_hz = 30.0;
    std::size_t ecg_modes = 5;
    double moa_fmax_hz = 20.0;
    std::size_t wavelet_levels = 5;
    double wgn_std_factor = 1.0; ///< keep a mode iff std > factor * sigma
    double interval_divisor = 4.0;
    double interval_rho = 0.719 / 2.01;
    bool interval_reestimate = true;
};

namespace detail {

inline std::size_t candidate_count(const decomp::ImfSet& s) { return s.imfs.size() + 1; }

inline SampleBuffer& candidate(decomp::ImfSet& s, std::size_t i) {
    return i < s.imfs.size() ? s.imfs[i] : s.residue;
}

inline const SampleBuffer& candidate(const decomp::ImfSet& s, std::size_t i) {
    return i < s.imfs.size() ? s.imfs[i] : s.residue;
}

inline bool is_silent(const SampleBuffer& b) { return max_abs(b.samples()) == 0.0; }

inline void log(DecisionLog* out, const decomp::ImfSet& s, std::size_t i, Action a, std::string detail,
                Contaminant label, std::string rule) {
    if (out != nullptr) {
        out->push_back({i, i >= s.imfs.size(), a, std::move(detail), label, std::move(rule)});
    }
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace detail

/// Modes with f_max below 10 Hz are removed; the others lose their 10 Hz low-passed part.
inline decomp::ImfSet rule_bw(decomp::ImfSet set, DecisionLog* log = nullptr, const RuleOptions& opt = {}) {
    require(!set.imfs.empty(), Errc::TooFewModes, "BW rule needs at least one mode");
    for (std::size_t i = 0; i < detail::candidate_count(set); ++i) {
        SampleBuffer& m = detail::candidate(set, i);
        if (detail::is_silent(m)) {
            continue;
        }
        if (fmax(m) < opt.bw_fmax_hz) {
            m = zeros_like(m);
            detail::log(log, set, i, Action::Drop, "fmax<" + detail::fmt(opt.bw_fmax_hz), Contaminant::BW, "bw.gate");
        } else {
            m = subtract(m, iir::apply_zero_phase(iir::lowpass4(opt.bw_fmax_hz, m.fs()), m));
            detail::log(log, set, i, Action::Filter, "minus lowpass4 " + detail::fmt(opt.bw_fmax_hz) + " Hz",
                        Contaminant::BW, "bw.subtract_lowpass");
        }
    }
    return set;
}

/// Modes whose f_max lies in [50, 70] Hz are notched at f_max with Q = 20.
inline decomp::ImfSet rule_pli(decomp::ImfSet set, DecisionLog* log = nullptr, const RuleOptions& opt = {}) {
    require(!set.imfs.empty(), Errc::TooFewModes, "PLI rule needs at least one mode");
    for (std::size_t i = 0; i < detail::candidate_count(set); ++i) {
        SampleBuffer& m = detail::candidate(set, i);
        if (detail::is_silent(m)) {
            continue;
        }
        const double f = fmax(m);
        if (f >= opt.pli_low_hz && f <= opt.pli_high_hz) {
            m = iir::apply_zero_phase(iir::design_notch(f, opt.pli_q, m.fs()), m);
            detail::log(log, set, i, Action::Filter, "notch " + detail::fmt(f) + " Hz Q" + detail::fmt(opt.pli_q),
                        Contaminant::PLI, "pli.notch");
        }
    }
    return set;
}

/// Low-frequency ECG estimate of the noisy waveform: x - HPF40(x).
inline SampleBuffer ecg_template(const SampleBuffer& noisy, double cutoff_hz = 40.0) {
    return subtract(noisy, iir::apply_zero_phase(iir::highpass4(cutoff_hz, noisy.fs()), noisy));
}

/// The (up to) five candidates most correlated with the ECG template are high-passed at 30 Hz.
/// Candidates with undefined correlation (zero variance) are never selected.
inline decomp::ImfSet rule_ecg(decomp::ImfSet set, const SampleBuffer& noisy, DecisionLog* log = nullptr,
                               const RuleOptions& opt = {}) {
    require(!set.imfs.empty(), Errc::TooFewModes, "ECG rule needs at least one mode");
    const SampleBuffer tmpl = ecg_template(noisy, opt.ecg_template_hz);
    struct Ranked {
        std::size_t index;
        double score;
    };
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < detail::candidate_count(set); ++i) {
        const auto& m = detail::candidate(set, i);
        if (stddev(m.samples()) <= 0.0) {
            continue;
        }
        ranked.push_back({i, std::abs(pearson(m.samples(), tmpl.samples()))});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
    ranked.resize(std::min(ranked.size(), opt.ecg_modes));
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.index < b.index; });
    const auto hp = iir::highpass4(opt.ecg_mode_hp_hz, noisy.fs());
    for (const auto& r : ranked) {
        SampleBuffer& m = detail::candidate(set, r.index);
        m = iir::apply_zero_phase(hp, m);
        detail::log(log, set, r.index, Action::Filter,
                    "|r|=" + detail::fmt(r.score) + " highpass4 " + detail::fmt(opt.ecg_mode_hp_hz) + " Hz",
                    Contaminant::ECG, "ecg.correlation");
    }
    return set;
}

/// Modes with f_max below 20 Hz are removed; the others are high-passed at 20 Hz.
inline decomp::ImfSet rule_moa(decomp::ImfSet set, DecisionLog* log = nullptr, const RuleOptions& opt = {}) {
    require(!set.imfs.empty(), Errc::TooFewModes, "MOA rule needs at least one mode");
    const auto hp = iir::highpass4(opt.moa_fmax_hz, set.residue.fs());
    for (std::size_t i = 0; i < detail::candidate_count(set); ++i) {
        SampleBuffer& m = detail::candidate(set, i);
        if (detail::is_silent(m)) {
            continue;
        }
        if (fmax(m) < opt.moa_fmax_hz) {
            m = zeros_like(m);
            detail::log(log, set, i, Action::Drop, "fmax<" + detail::fmt(opt.moa_fmax_hz), Contaminant::MOA,
                        "moa.gate");
        } else {
            m = iir::apply_zero_phase(hp, m);
            detail::log(log, set, i, Action::Filter, "highpass4 " + detail::fmt(opt.moa_fmax_hz) + " Hz",
                        Contaminant::MOA, "moa.highpass");
        }
    }
    return set;
}

/// Drops the first mode. The noise level is the MAD estimate of the second mode's
/// finest wavelet details; each later mode is dropped when its standard
/// deviation does not exceed that level, and sym8-soft-thresholded otherwise.
inline decomp::ImfSet rule_wgn_emd(decomp::ImfSet set, DecisionLog* log = nullptr, const RuleOptions& opt = {}) {
    require(set.imfs.size() >= 2, Errc::TooFewModes, "WGN rule needs at least two modes");
    set.imfs[0] = zeros_like(set.imfs[0]);
    detail::log(log, set, 0, Action::Drop, "first mode", Contaminant::WGN, "wgn.first_mode");
    const double sigma = wavelet::mad_sigma(set.imfs[1].samples());
    const double n = static_cast<double>(set.imfs[1].size());
    const double threshold = sigma * std::sqrt(2.0 * std::log(n));
    for (std::size_t i = 1; i < set.imfs.size(); ++i) {
        SampleBuffer& m = set.imfs[i];
        if (stddev(m.samples()) > opt.wgn_std_factor * sigma) {
            m = SampleBuffer(wavelet::denoise(m.samples(), opt.wavelet_levels, threshold), m.fs());
            detail::log(log, set, i, Action::WaveletThreshold, "sym8 T=" + detail::fmt(threshold), Contaminant::WGN,
                        "wgn.wavelet");
        } else {
            m = zeros_like(m);
            detail::log(log, set, i, Action::Drop, "std<=" + detail::fmt(opt.wgn_std_factor * sigma),
                        Contaminant::WGN, "wgn.std_gate");
        }
    }
    return set;
}

/// Zero-crossing intervals, each scaled by max(0, 1 - t / |interval extremum|).
inline std::vector<double> interval_shrink(std::span<const double> x, double t) {
    std::vector<double> out(x.begin(), x.end());
    if (t <= 0.0) {
        return out;
    }
    std::size_t start = 0;
    const std::size_t n = x.size();
    for (std::size_t i = 1; i <= n; ++i) {
        if (i == n || ((x[i] >= 0.0) != (x[start] >= 0.0))) {
            double peak = 0.0;
            for (std::size_t j = start; j < i; ++j) {
                peak = std::max(peak, std::abs(x[j]));
            }
            const double factor = peak > 0.0 ? std::max(0.0, 1.0 - t / peak) : 0.0;
            for (std::size_t j = start; j < i; ++j) {
                out[j] *= factor;
            }
            start = i;
        }
    }
    return out;
}

/// Sample MAD noise estimate median(|x - median(x)|) / 0.6745.
inline double mad_samples(std::span<const double> x) {
    const double med = median(std::vector<double>(x.begin(), x.end()));
    std::vector<double> dev(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        dev[i] = std::abs(x[i] - med);
    }
    return median(std::move(dev)) / 0.6745;
}

/// Interval thresholds for modes ranked from highest frequency (rank 1):
/// T_r = sigma sqrt(2 ln N) rho^((r-1)/2) / divisor.
inline std::vector<double> interval_thresholds(double sigma, std::size_t n, std::size_t modes, const RuleOptions& opt) {
    std::vector<double> t(modes);
    const double base = sigma * std::sqrt(2.0 * std::log(static_cast<double>(n)));
    for (std::size_t r = 0; r < modes; ++r) {
        t[r] = base * std::pow(opt.interval_rho, static_cast<double>(r) / 2.0) / opt.interval_divisor;
    }
    return t;
}

/// Soft interval thresholding of every mode; the noise level comes from the
/// highest-frequency mode and is re-estimated once from what the first pass removed.
inline decomp::ImfSet rule_wgn_vmd(decomp::ImfSet set, DecisionLog* log = nullptr, const RuleOptions& opt = {}) {
    require(!set.imfs.empty(), Errc::TooFewModes, "interval thresholding needs at least one mode");
    const auto rank = set.by_descending_frequency();
    const std::size_t n = set.residue.size();
    const auto& top = set.imfs[rank[0]];
    double sigma = mad_samples(top.samples());
    auto thresholds = interval_thresholds(sigma, n, rank.size(), opt);
    if (opt.interval_reestimate) {
        const auto first = interval_shrink(top.samples(), thresholds[0]);
        std::vector<double> removed(n);
        for (std::size_t i = 0; i < n; ++i) {
            removed[i] = top[i] - first[i];
        }
        sigma = mad_samples(removed);
        thresholds = interval_thresholds(sigma, n, rank.size(), opt);
    }
    for (std::size_t r = 0; r < rank.size(); ++r) {
        SampleBuffer& m = set.imfs[rank[r]];
        m = SampleBuffer(interval_shrink(m.samples(), thresholds[r]), m.fs());
        detail::log(log, set, rank[r], Action::IntervalThreshold, "T=" + detail::fmt(thresholds[r]), Contaminant::WGN,
                    "wgn.interval");
    }
    return set;
}

struct DecompositionDenoiseOptions {
    decomp::EmdOptions emd;
    decomp::CeemdanOptions ceemdan;
    decomp::VmdOptions vmd;
    RuleOptions rules;
    bool apply_rules = true;
};

struct DecompositionDenoiseResult {
    SampleBuffer output;
    DecisionLog decisions;
    decomp::ImfSet modes; ///< as decomposed, before any rule
};

inline decomp::ImfSet decompose(const SampleBuffer& x, decomp::Method method, const DecompositionDenoiseOptions& opt) {
    switch (method) {
    case decomp::Method::EMD: return decomp::emd(x, opt.emd);
    case decomp::Method::CEEMDAN: return decomp::ceemdan(x, opt.ceemdan);
    case decomp::Method::VMD: return decomp::vmd(x, opt.vmd);
    }
    throw Error(Errc::InvalidArgument, "unknown decomposition method");
}

/// Decompose, apply the rules of each present label in BW, PLI, ECG, MOA, WGN
/// order, and sum the processed modes and residue. With VMD the ECG label is
/// handled by a 40 Hz high-pass of the reconstructed waveform.
inline DecompositionDenoiseResult decomposition_denoise(const SampleBuffer& noisy, const LabelSet& labels,
                                                        decomp::Method method,
                                                        const DecompositionDenoiseOptions& opt = {}) {
    require(!labels.empty(), Errc::InvalidArgument, "at least one contaminant label required");
    DecompositionDenoiseResult result;
    result.modes = decompose(noisy, method, opt);
    if (!opt.apply_rules) {
        result.output = result.modes.reconstruct();
        return result;
    }
    const bool vmd = method == decomp::Method::VMD;
    decomp::ImfSet work = result.modes;
    DecisionLog* log = &result.decisions;
    for (Contaminant c : kAllContaminants) {
        if (!labels.contains(c)) {
            continue;
        }
        switch (c) {
        case Contaminant::BW: work = rule_bw(std::move(work), log, opt.rules); break;
        case Contaminant::PLI: work = rule_pli(std::move(work), log, opt.rules); break;
        case Contaminant::ECG:
            if (!vmd) {
                work = rule_ecg(std::move(work), noisy, log, opt.rules);
            }
            break;
        case Contaminant::MOA: work = rule_moa(std::move(work), log, opt.rules); break;
        case Contaminant::WGN:
            work = vmd ? rule_wgn_vmd(std::move(work), log, opt.rules) : rule_wgn_emd(std::move(work), log, opt.rules);
            break;
        }
    }
    result.output = work.reconstruct();
    if (vmd && labels.contains(Contaminant::ECG)) {
        result.output = iir::apply_zero_phase(iir::highpass4(opt.rules.ecg_template_hz, noisy.fs()), result.output);
        result.decisions.push_back(
            {work.imfs.size(), false, Action::Filter, "waveform highpass4 40 Hz", Contaminant::ECG, "ecg.vmd_waveform"});
    }
    return result;
}

inline nlohmann::ordered_json to_json(const DecisionLog& log) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& d : log) {
        arr.push_back({{"mode_index", d.mode_index},
                       {"residue", d.residue},
                       {"action", to_string(d.action)},
                       {"detail", d.detail},
                       {"label", std::string(to_string(d.label))},
                       {"rule", d.rule}});
    }
    return arr;
}

} // namespace trustemg::rules
