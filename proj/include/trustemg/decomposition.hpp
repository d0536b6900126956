#pragma once

// Mode decompositions: EMD (cubic-spline sifting), CEEMDAN (noise-assisted
// sequential ensemble) and VMD (ADMM in the one-sided Fourier domain).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "trustemg/error.hpp"
#include "trustemg/fft.hpp"
#include "trustemg/signal.hpp"
#include "trustemg/synthesis.hpp"

namespace trustemg::decomp {

enum class Method { EMD, CEEMDAN, VMD };

inline std::string to_string(Method m) {
    switch (m) {
    case Method::EMD: return "emd";
    case Method::CEEMDAN: return "ceemdan";
    case Method::VMD: return "vmd";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    if (s == "emd") {
        return Method::EMD;
    }
    if (s == "ceemdan") {
        return Method::CEEMDAN;
    }
    require(s == "vmd", Errc::InvalidArgument, "unknown decomposition method '" + std::string(s) + "'");
    return Method::VMD;
}

struct VmdInfo {
    std::vector<double> center_hz; ///< per returned mode (ascending)
    std::vector<double> initial_center_hz;
    std::size_t iterations = 0;
    double final_change = 0.0;
    bool converged = false;
    std::vector<double> objective_history; ///< bandwidth penalty per iteration
};

/// Ordered modes plus residue. EMD/CEEMDAN: index 0 is the highest-frequency
/// mode. VMD: ascending center frequency.
struct ImfSet {
    std::vector<SampleBuffer> imfs;
    SampleBuffer residue;
    Method method = Method::EMD;
    std::optional<VmdInfo> vmd;

    /// Mode indices from highest to lowest frequency.
    [[nodiscard]] std::vector<std::size_t> by_descending_frequency() const {
        std::vector<std::size_t> idx(imfs.size());
        std::iota(idx.begin(), idx.end(), 0);
        if (method == Method::VMD) {
            std::reverse(idx.begin(), idx.end());
        }
        return idx;
    }

    [[nodiscard]] SampleBuffer reconstruct() const {
        std::vector<double> out(residue.vec());
        for (const auto& m : imfs) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] += m[i];
            }
        }
        return {std::move(out), residue.fs()};
    }
};

// ---------------------------------------------------------------------------
// EMD

struct Extrema {
    std::vector<std::size_t> maxima;
    std::vector<std::size_t> minima;

    [[nodiscard]] std::size_t count() const noexcept { return maxima.size() + minima.size(); }
};

/// Interior extrema; a plateau counts once, at its first sample.
inline Extrema find_extrema(std::span<const double> x) {
    Extrema e;
    const std::size_t n = x.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (x[i] > x[i - 1]) {
            std::size_t j = i;
            while (j + 1 < n && x[j + 1] == x[i]) {
                ++j;
            }
            if (j + 1 < n && x[j + 1] < x[i]) {
                e.maxima.push_back(i);
            }
        } else if (x[i] < x[i - 1]) {
            std::size_t j = i;
            while (j + 1 < n && x[j + 1] == x[i]) {
                ++j;
            }
            if (j + 1 < n && x[j + 1] > x[i]) {
                e.minima.push_back(i);
            }
        }
    }
    return e;
}

/// Natural cubic spline through (xs, ys), evaluated at 0..n-1. xs strictly increasing.
inline std::vector<double> natural_spline(const std::vector<double>& xs, const std::vector<double>& ys,
                                          std::size_t n) {
    const std::size_t m = xs.size();
    std::vector<double> out(n);
    if (m == 1) {
        std::fill(out.begin(), out.end(), ys[0]);
        return out;
    }
    // second derivatives via the tridiagonal system (Thomas algorithm)
    std::vector<double> c2(m, 0.0);
    if (m > 2) {
        std::vector<double> diag(m - 2);
        std::vector<double> rhs(m - 2);
        std::vector<double> upper(m - 2);
        for (std::size_t i = 1; i + 1 < m; ++i) {
            const double h0 = xs[i] - xs[i - 1];
            const double h1 = xs[i + 1] - xs[i];
            diag[i - 1] = 2.0 * (h0 + h1);
            upper[i - 1] = h1;
            rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        }
        for (std::size_t i = 1; i < m - 2; ++i) {
            const double lower = xs[i + 1] - xs[i]; // h_{i} couples row i-1 and i
            const double w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        c2[m - 2] = rhs[m - 3] / diag[m - 3];
        for (std::size_t i = m - 3; i >= 1; --i) {
            c2[i] = (rhs[i - 1] - upper[i - 1] * c2[i + 1]) / diag[i - 1];
        }
    }
    std::size_t seg = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const auto x = static_cast<double>(t);
        while (seg + 2 < m && x > xs[seg + 1]) {
            ++seg;
        }
        const double h = xs[seg + 1] - xs[seg];
        const double a = (xs[seg + 1] - x) / h;
        const double b = (x - xs[seg]) / h;
        out[t] = a * ys[seg] + b * ys[seg + 1] +
                 ((a * a * a - a) * c2[seg] + (b * b * b - b) * c2[seg + 1]) * h * h / 6.0;
    }
    return out;
}

/// Spline envelope through the given extrema, extended by mirroring up to
/// `mirror` extrema about each end sample.
inline std::vector<double> envelope(std::span<const double> x, const std::vector<std::size_t>& idx,
                                    std::size_t mirror) {
    const std::size_t n = x.size();
    std::vector<double> xs;
    std::vector<double> ys;
    std::vector<std::size_t> left;
    for (std::size_t i : idx) {
        if (i > 0 && left.size() < mirror) {
            left.push_back(i);
        }
    }
    for (auto it = left.rbegin(); it != left.rend(); ++it) {
        xs.push_back(-static_cast<double>(*it));
        ys.push_back(x[*it]);
    }
    for (std::size_t i : idx) {
        xs.push_back(static_cast<double>(i));
        ys.push_back(x[i]);
    }
    std::size_t added = 0;
    for (auto it = idx.rbegin(); it != idx.rend() && added < mirror; ++it) {
        if (*it + 1 < n) {
            xs.push_back(2.0 * static_cast<double>(n - 1) - static_cast<double>(*it));
            ys.push_back(x[*it]);
            ++added;
        }
    }
    return natural_spline(xs, ys, n);
}

struct EmdOptions {
    std::size_t max_imfs = 8;
    double sd_threshold = 0.2;
    int max_sifts = 100;
    std::size_t mirror_extrema = 2;
};

/// Mean of the upper and lower envelopes; empty when the signal lacks extrema.
inline std::optional<std::vector<double>> envelope_mean(std::span<const double> x, std::size_t mirror) {
    const Extrema e = find_extrema(x);
    if (e.maxima.empty() || e.minima.empty()) {
        return std::nullopt;
    }
    const auto upper = envelope(x, e.maxima, mirror);
    const auto lower = envelope(x, e.minima, mirror);
    std::vector<double> m(x.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = 0.5 * (upper[i] + lower[i]);
    }
    return m;
}

/// One intrinsic mode by sifting until the Cauchy SD drops below threshold.
inline std::vector<double> sift(std::vector<double> h, const EmdOptions& opt) {
    for (int it = 0; it < opt.max_sifts; ++it) {
        const auto m = envelope_mean(h, opt.mirror_extrema);
        if (!m) {
            break;
        }
        const double denom = power(h);
        for (std::size_t i = 0; i < h.size(); ++i) {
            h[i] -= (*m)[i];
        }
        if (denom <= 0.0 || power(*m) / denom < opt.sd_threshold) {
            break;
        }
    }
    return h;
}

inline ImfSet emd(const SampleBuffer& buf, const EmdOptions& opt = {}) {
    require(buf.size() >= 16, Errc::TooShort, "EMD needs at least 16 samples");
    require(opt.max_imfs >= 1, Errc::InvalidArgument, "max_imfs must be at least 1");
    ImfSet set;
    set.method = Method::EMD;
    std::vector<double> r(buf.vec());
    while (set.imfs.size() < opt.max_imfs && find_extrema(r).count() >= 3) {
        std::vector<double> imf = sift(r, opt);
        for (std::size_t i = 0; i < r.size(); ++i) {
            r[i] -= imf[i];
        }
        set.imfs.emplace_back(std::move(imf), buf.fs());
    }
    set.residue = SampleBuffer(std::move(r), buf.fs());
    return set;
}

// ---------------------------------------------------------------------------
// CEEMDAN

struct CeemdanOptions {
    std::size_t max_imfs = 8;
    double noise_scale = 0.005; ///< relative to the input's standard deviation
    std::size_t trials = 20;
    std::uint64_t seed = 0;
    EmdOptions emd;
};

/// Stage k adds noise_scale*std(x) times the k-th EMD mode of each white-noise
/// realization (the raw realization at the first stage) and averages the first
/// sifted mode across trials.
inline ImfSet ceemdan(const SampleBuffer& buf, const CeemdanOptions& opt = {}) {
    require(buf.size() >= 16, Errc::TooShort, "CEEMDAN needs at least 16 samples");
    require(opt.max_imfs >= 1 && opt.trials >= 1, Errc::InvalidArgument, "max_imfs and trials must be positive");
    const std::size_t n = buf.size();
    const double eps = opt.noise_scale * stddev(buf.samples());

    EmdOptions noise_opt = opt.emd;
    noise_opt.max_imfs = opt.max_imfs;
    std::vector<std::vector<double>> noise(opt.trials);
    std::vector<ImfSet> noise_modes(opt.trials);
    for (std::size_t t = 0; t < opt.trials; ++t) {
        noise[t] = synth::gaussian_noise(synth::derive_seed(opt.seed, t), n);
        if (eps > 0.0) {
            noise_modes[t] = emd(SampleBuffer(noise[t], buf.fs()), noise_opt);
        }
    }

    ImfSet set;
    set.method = Method::CEEMDAN;
    std::vector<double> r(buf.vec());
    std::vector<double> probe(n);
    while (set.imfs.size() < opt.max_imfs && find_extrema(r).count() >= 3) {
        const std::size_t stage = set.imfs.size();
        std::vector<double> acc(n, 0.0);
        for (std::size_t t = 0; t < opt.trials; ++t) {
            const std::vector<double>* w = nullptr;
            if (stage == 0) {
                w = &noise[t];
            } else if (eps > 0.0 && stage - 1 < noise_modes[t].imfs.size()) {
                w = &noise_modes[t].imfs[stage - 1].vec();
            }
            for (std::size_t i = 0; i < n; ++i) {
                probe[i] = w != nullptr ? r[i] + eps * (*w)[i] : r[i];
            }
            if (find_extrema(probe).count() < 3) {
                continue;
            }
            const auto mode = sift(probe, opt.emd);
            for (std::size_t i = 0; i < n; ++i) {
                acc[i] += mode[i];
            }
        }
        const auto trials = static_cast<double>(opt.trials);
        for (std::size_t i = 0; i < n; ++i) {
            acc[i] /= trials;
            r[i] -= acc[i];
        }
        set.imfs.emplace_back(std::move(acc), buf.fs());
    }
    set.residue = SampleBuffer(std::move(r), buf.fs());
    return set;
}

// ---------------------------------------------------------------------------
// VMD

struct VmdOptions {
    std::size_t k_modes = 10;
    double alpha = 1000.0;
    double tau = 0.0;
    double tol = 1e-3;
    std::size_t max_iterations = 500;
    bool jitter_init = false; ///< perturb the uniform grid by up to +-fs/(8K)
    std::uint64_t seed = 0;
};

/// ADMM state over the one-sided spectrum of the mirror-extended signal.
/// Frequencies are normalized (cycles per sample, in [-0.5, 0.5)).
struct VmdState {
    using cplx = std::complex<double>;

    std::vector<std::vector<cplx>> mode_spectra;
    std::vector<double> center_freqs;
    std::vector<cplx> lagrange;
    double alpha = 0.0;
    double tau = 0.0;
    std::size_t iteration = 0;

    std::vector<cplx> target; ///< one-sided spectrum of the extended signal
    std::vector<double> freqs;
    std::vector<cplx> mode_sum;

    /// One sweep over all modes; returns sum_k ||u_new - u_old||^2 / ||u_old||^2.
    double step() {
        const std::size_t len = target.size();
        const std::size_t half = len / 2;
        double change = 0.0;
        std::vector<cplx> updated(len);
        for (std::size_t k = 0; k < mode_spectra.size(); ++k) {
            auto& u = mode_spectra[k];
            const double w = center_freqs[k];
            for (std::size_t i = 0; i < len; ++i) {
                const cplx others = mode_sum[i] - u[i];
                const double d = freqs[i] - w;
                updated[i] = (target[i] - others + lagrange[i] / 2.0) / (1.0 + 2.0 * alpha * d * d);
            }
            double num = 0.0;
            double den = 0.0;
            double old_energy = 0.0;
            double diff = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                diff += std::norm(updated[i] - u[i]);
                old_energy += std::norm(u[i]);
                mode_sum[i] += updated[i] - u[i];
                u[i] = updated[i];
            }
            for (std::size_t i = half; i < len; ++i) {
                const double p = std::norm(u[i]);
                num += freqs[i] * p;
                den += p;
            }
            if (den > 0.0) {
                center_freqs[k] = num / den;
            }
            if (old_energy > 0.0) {
                change += diff / old_energy;
            } else if (diff > 0.0) {
                change = std::numeric_limits<double>::infinity();
            }
        }
        if (tau != 0.0) {
            for (std::size_t i = 0; i < len; ++i) {
                lagrange[i] += tau * (target[i] - mode_sum[i]);
            }
        }
        ++iteration;
        return change;
    }

    /// Bandwidth penalty sum_k alpha * sum_i (f_i - w_k)^2 |u_k,i|^2.
    [[nodiscard]] double objective() const {
        double total = 0.0;
        for (std::size_t k = 0; k < mode_spectra.size(); ++k) {
            for (std::size_t i = 0; i < target.size(); ++i) {
                const double d = freqs[i] - center_freqs[k];
                total += alpha * d * d * std::norm(mode_spectra[k][i]);
            }
        }
        return total;
    }
};

inline std::vector<double> vmd_initial_centers(std::size_t k_modes, bool jitter, std::uint64_t seed) {
    std::vector<double> w(k_modes);
    std::mt19937_64 rng(seed);
    const double span = 1.0 / (8.0 * static_cast<double>(k_modes));
    std::uniform_real_distribution<double> perturb(-span, span);
    for (std::size_t k = 0; k < k_modes; ++k) {
        w[k] = (static_cast<double>(k) + 0.5) / (2.0 * static_cast<double>(k_modes));
        if (jitter) {
            w[k] = std::clamp(w[k] + perturb(rng), 0.0, 0.5);
        }
    }
    return w;
}

inline VmdState vmd_init(std::span<const double> extended, const VmdOptions& opt) {
    using cplx = VmdState::cplx;
    const std::size_t len = extended.size();
    std::vector<cplx> in(extended.begin(), extended.end());
    const auto spec = fft::dft(in);
    VmdState st;
    st.alpha = opt.alpha;
    st.tau = opt.tau;
    st.target.assign(len, cplx(0.0, 0.0));
    st.freqs.resize(len);
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < len; ++i) {
        st.freqs[i] = static_cast<double>(i) / static_cast<double>(len) - 0.5;
        if (i >= half) {
            st.target[i] = spec[(i + half) % len]; // fftshift, non-negative half only
        }
    }
    st.mode_spectra.assign(opt.k_modes, std::vector<cplx>(len, cplx(0.0, 0.0)));
    st.center_freqs = vmd_initial_centers(opt.k_modes, opt.jitter_init, opt.seed);
    st.lagrange.assign(len, cplx(0.0, 0.0));
    st.mode_sum.assign(len, cplx(0.0, 0.0));
    return st;
}

inline ImfSet vmd(const SampleBuffer& buf, const VmdOptions& opt = {}) {
    require(buf.size() >= 64, Errc::TooShort, "VMD needs at least 64 samples");
    require(opt.k_modes >= 1, Errc::InvalidArgument, "VMD needs at least one mode");
    const std::size_t n = buf.size();
    const std::size_t left = n / 2;
    const std::size_t right = n - left;
    const auto& x = buf.vec();
    std::vector<double> ext;
    ext.reserve(2 * n);
    for (std::size_t i = left; i-- > 0;) {
        ext.push_back(x[i]);
    }
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 0; i < right; ++i) {
        ext.push_back(x[n - 1 - i]);
    }

    VmdState st = vmd_init(ext, opt);
    VmdInfo info;
    for (double w : st.center_freqs) {
        info.initial_center_hz.push_back(w * buf.fs());
    }
    double change = std::numeric_limits<double>::infinity();
    while (st.iteration < opt.max_iterations) {
        change = st.step();
        info.objective_history.push_back(st.objective());
        if (change < opt.tol) {
            info.converged = true;
            break;
        }
    }
    info.iterations = st.iteration;
    info.final_change = change;
    if (!info.converged && !(change <= 100.0 * opt.tol)) {
        throw Error(Errc::NoConvergence, "VMD hit the iteration cap with relative change " + std::to_string(change));
    }

    const std::size_t len = ext.size();
    const std::size_t half = len / 2;
    std::vector<std::size_t> order(opt.k_modes);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return st.center_freqs[a] < st.center_freqs[b]; });

    ImfSet set;
    set.method = Method::VMD;
    std::vector<double> residue(x);
    for (std::size_t k : order) {
        const auto& u = st.mode_spectra[k];
        std::vector<VmdState::cplx> full(len, VmdState::cplx(0.0, 0.0));
        for (std::size_t i = half; i < len; ++i) {
            full[i] = u[i];
        }
        for (std::size_t i = half + 1; i < len; ++i) {
            full[len - i] = std::conj(u[i]);
        }
        std::vector<VmdState::cplx> unshifted(len);
        for (std::size_t i = 0; i < len; ++i) {
            unshifted[i] = full[(i + half) % len];
        }
        const auto time = fft::dft(unshifted, true);
        std::vector<double> mode(n);
        for (std::size_t i = 0; i < n; ++i) {
            mode[i] = time[left + i].real();
            residue[i] -= mode[i];
        }
        set.imfs.emplace_back(std::move(mode), buf.fs());
        info.center_hz.push_back(st.center_freqs[k] * buf.fs());
    }
    set.residue = SampleBuffer(std::move(residue), buf.fs());
    set.vmd = std::move(info);
    return set;
}

} // namespace trustemg::decomp
