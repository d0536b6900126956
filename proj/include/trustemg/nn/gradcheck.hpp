#pragma once

// Finite-difference check of the analytic backward pass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "trustemg/nn/model.hpp"

namespace trustemg::nn {

struct GradcheckOptions {
    std::size_t batch = 2;
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor: gradients smaller than this are compared absolutely.
    double floor = 1e-5;
    /// Step reductions tried when a probe flips a ReLU.
    std::size_t kink_retries = 4;
    std::uint64_t seed = 0;
};

struct GradcheckEntry {
    std::string name;
    std::size_t checked = 0;
    std::size_t kink_retried = 0;   ///< elements whose step had to shrink
    std::size_t kink_unresolved = 0; ///< still flipping at the smallest step; excluded from max_rel
    double max_rel = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradcheckReport {
    Bottleneck bottleneck = Bottleneck::RM;
    std::vector<GradcheckEntry> tensors; ///< trainable tensors, then "input"
    std::size_t checked = 0;
    std::size_t kink_retried = 0;
    std::size_t kink_unresolved = 0;
    double max_rel = 0.0;
    bool pass = false;
};

/// Which ReLUs are active in a forward pass.
template <typename T>
std::vector<bool> relu_pattern(const ForwardCache<T>& c) {
    std::vector<bool> out;
    auto add = [&](const auto& values) {
        for (const auto& v : values) {
            out.push_back(v > T(0));
        }
    };
    for (const auto& e : c.encoder) {
        add(e.output.values());
    }
    for (const auto& it : c.items) {
        add(it.f1);
    }
    for (std::size_t j = 0; j < c.up.size(); ++j) {
        add(c.up[j].output.values());
        add(c.conv[j].output.values());
    }
    return out;
}

inline double relative_error(double a, double n, double floor) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Every trainable element and every input sample, double precision, train mode
/// with dropout off, loss = sum(r * y) for a fixed random r. A probe that flips
/// a ReLU is not measuring the derivative, so its step is cut by 10x and retried.
inline GradcheckReport gradcheck(ModelConfig cfg, const GradcheckOptions& opt = {}) {
    cfg.dropout = 0.0;
    ModelParams<double> params = init_params<double>(cfg);
    std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal;
    Tensor<double> x({opt.batch, 1, cfg.input_len});
    for (double& v : x.values()) {
        v = normal(rng);
    }
    Tensor<double> r({opt.batch, 1, cfg.input_len});
    for (double& v : r.values()) {
        v = normal(rng);
    }
    // perturb BN/LN affine terms away from 1/0 so their gradients are exercised generically
    for (auto& ref : params.refs()) {
        if (ref.trainable && ref.tensor->rank() == 1) {
            for (double& v : ref.tensor->values()) {
                v += 0.1 * normal(rng);
            }
        }
    }
    struct Probe {
        double loss;
        std::vector<bool> pattern;
    };
    auto probe = [&](const ModelParams<double>& p, const Tensor<double>& in) {
        const auto fw = forward(p, in, Mode::Train);
        double acc = 0.0;
        for (std::size_t i = 0; i < fw.y.size(); ++i) {
            acc += r[i] * fw.y[i];
        }
        return Probe{acc, relu_pattern(fw.cache)};
    };

    const auto fw = forward(params, x, Mode::Train);
    const auto base_pattern = relu_pattern(fw.cache);
    auto grads = backward(params, fw.cache, r);

    GradcheckReport rep;
    rep.bottleneck = cfg.bottleneck;
    auto check = [&](const std::string& name, Tensor<double>& target, const Tensor<double>& analytic,
                     const auto& eval) {
        GradcheckEntry e;
        e.name = name;
        for (std::size_t i = 0; i < target.size(); ++i) {
            const double saved = target[i];
            double h = opt.step;
            double numeric = 0.0;
            bool clean = false;
            for (std::size_t attempt = 0; attempt <= opt.kink_retries && !clean; ++attempt, h /= 10.0) {
                auto at = [&](double offset) {
                    target[i] = saved + offset;
                    auto pr = eval();
                    target[i] = saved;
                    return pr;
                };
                const auto p1 = at(h);
                const auto m1 = at(-h);
                const auto p2 = at(2.0 * h);
                const auto m2 = at(-2.0 * h);
                // fourth-order central stencil
                numeric = (8.0 * (p1.loss - m1.loss) - (p2.loss - m2.loss)) / (12.0 * h);
                clean = p1.pattern == base_pattern && m1.pattern == base_pattern && p2.pattern == base_pattern &&
                        m2.pattern == base_pattern;
                if (!clean && attempt == 0) {
                    ++e.kink_retried;
                }
            }
            ++e.checked;
            if (!clean) {
                ++e.kink_unresolved;
                continue;
            }
            const double rel = relative_error(analytic[i], numeric, opt.floor);
            if (rel >= e.max_rel) {
                e.max_rel = rel;
                e.worst_index = i;
                e.analytic = analytic[i];
                e.numeric = numeric;
            }
        }
        rep.checked += e.checked;
        rep.kink_retried += e.kink_retried;
        rep.kink_unresolved += e.kink_unresolved;
        rep.max_rel = std::max(rep.max_rel, e.max_rel);
        rep.tensors.push_back(std::move(e));
    };

    auto prefs = params.refs();
    auto grefs = grads.params.refs();
    for (std::size_t k = 0; k < prefs.size(); ++k) {
        if (!prefs[k].trainable) {
            continue;
        }
        check(prefs[k].name, *prefs[k].tensor, *grefs[k].tensor, [&] { return probe(params, x); });
    }
    check("input", x, grads.input, [&] { return probe(params, x); });
    rep.pass = rep.max_rel <= opt.tolerance;
    return rep;
}

} // namespace trustemg::nn
