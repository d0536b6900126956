#pragma once

// Adam, step learning-rate schedule, early stopping and the L1 training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "trustemg/error.hpp"
#include "trustemg/nn/model.hpp"

namespace trustemg::nn {

/// 0.01 for epochs 1-3, 0.001 through epoch 30, 0.0001 afterwards (epochs count from 1).
struct LrSchedule {
    struct Step {
        std::size_t last_epoch;
        double lr;
    };
    std::vector<Step> table{{3, 1e-2}, {30, 1e-3}};
    double tail = 1e-4;

    [[nodiscard]] double at(std::size_t epoch) const {
        for (const auto& s : table) {
            if (epoch <= s.last_epoch) {
                return s.lr;
            }
        }
        return tail;
    }
};

template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;

    /// One bias-corrected update of every trainable tensor.
    void update(ModelParams<T>& params, ModelParams<T>& grads, double lr) {
        auto p = params.refs();
        auto g = grads.refs();
        require(p.size() == g.size(), Errc::ShapeMismatch, "gradient layout does not match the parameters");
        if (m.empty()) {
            for (const auto& r : p) {
                m.emplace_back(r.tensor->shape());
                v.emplace_back(r.tensor->shape());
            }
        }
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!p[i].trainable) {
                continue;
            }
            Tensor<T>& w = *p[i].tensor;
            const Tensor<T>& gr = *g[i].tensor;
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double gk = static_cast<double>(gr[k]);
                const double mk = beta1 * static_cast<double>(m[i][k]) + (1.0 - beta1) * gk;
                const double vk = beta2 * static_cast<double>(v[i][k]) + (1.0 - beta2) * gk * gk;
                m[i][k] = static_cast<T>(mk);
                v[i][k] = static_cast<T>(vk);
                w[k] -= static_cast<T>(lr * (mk / c1) / (std::sqrt(vk / c2) + eps));
            }
        }
        params.touch();
    }
};

/// Stops once `patience` epochs pass without a strictly lower loss.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience = 15) : patience_(patience) {}

    /// Records one epoch; returns true when it is the new best.
    bool observe(double loss) {
        ++epoch_;
        if (loss < best_) {
            best_ = loss;
            best_epoch_ = epoch_;
            return true;
        }
        return false;
    }

    [[nodiscard]] bool should_stop() const { return epoch_ >= best_epoch_ + patience_ && epoch_ > 0; }
    [[nodiscard]] std::size_t best_epoch() const { return best_epoch_; }
    [[nodiscard]] double best_loss() const { return best_; }
    [[nodiscard]] std::size_t epoch() const { return epoch_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

/// Paired segments of length config.input_len.
struct Dataset {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> targets;

    [[nodiscard]] std::size_t size() const { return inputs.size(); }
};

struct TrainOptions {
    std::size_t max_epochs = 500;
    std::size_t batch_size = 8;
    std::size_t patience = 15;
    std::uint64_t seed = 0;
    LrSchedule schedule{};
};

struct TrainResult {
    ModelParams<float> params;       ///< lowest-monitored-loss parameters
    std::vector<double> train_loss;  ///< mean L1 per epoch, train mode
    std::vector<double> monitor_loss; ///< validation L1 (eval mode) if given, else train_loss
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
};

namespace detail {

inline Tensor<float> stack(const std::vector<std::vector<double>>& rows, std::span<const std::size_t> idx,
                           std::size_t len) {
    Tensor<float> t({idx.size(), 1, len});
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto& r = rows[idx[b]];
        require(r.size() == len, Errc::ShapeMismatch, "segment length differs from the model input length");
        std::transform(r.begin(), r.end(), &t.at(b, 0, 0), [](double v) { return static_cast<float>(v); });
    }
    return t;
}

} // namespace detail

/// Mean L1 of the model over a dataset in eval mode.
inline double evaluate_l1(const ModelParams<float>& params, const Dataset& data, std::size_t batch_size = 8) {
    require(data.size() > 0, Errc::EmptyDataset, "no segments to evaluate");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double acc = 0.0;
    const std::size_t d = params.config.input_len;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::span<const std::size_t> idx(order.data() + start, std::min(batch_size, order.size() - start));
        const auto x = detail::stack(data.inputs, idx, d);
        const auto t = detail::stack(data.targets, idx, d);
        acc += l1_loss(forward(params, x, Mode::Eval).y, t) * static_cast<double>(idx.size());
    }
    return acc / static_cast<double>(data.size());
}

/// Mini-batch Adam on L1 loss with early stopping on the monitored loss.
inline TrainResult train(const ModelConfig& cfg, const Dataset& data, const TrainOptions& opt = {},
                         const Dataset* validation = nullptr) {
    require(data.size() > 0 && data.targets.size() == data.size(), Errc::EmptyDataset,
            "training set is empty or unpaired");
    require(opt.batch_size > 0 && opt.max_epochs > 0, Errc::InvalidArgument, "batch size and epochs must be positive");
    TrainResult res;
    ModelParams<float> params = init_params<float>(cfg);
    res.params = params;
    AdamState<float> adam;
    EarlyStopper stopper(opt.patience);
    std::mt19937_64 rng(opt.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t d = cfg.input_len;

    for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = opt.schedule.at(epoch);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::span<const std::size_t> idx(order.data() + start,
                                                   std::min(opt.batch_size, order.size() - start));
            const auto x = detail::stack(data.inputs, idx, d);
            const auto t = detail::stack(data.targets, idx, d);
            auto fw = forward(params, x, Mode::Train, rng());
            total += l1_loss(fw.y, t) * static_cast<double>(idx.size());
            auto grads = backward(params, fw.cache, l1_grad(fw.y, t));
            commit_running_stats(params, fw.cache);
            adam.update(params, grads.params, lr);
        }
        const double train_l1 = total / static_cast<double>(data.size());
        const double monitored = validation != nullptr ? evaluate_l1(params, *validation) : train_l1;
        res.train_loss.push_back(train_l1);
        res.monitor_loss.push_back(monitored);
        res.epochs_run = epoch;
        if (stopper.observe(monitored)) {
            res.params = params;
            res.best_epoch = epoch;
        }
        if (stopper.should_stop()) {
            res.stopped_early = true;
            break;
        }
    }
    return res;
}

/// Runs a trained model over an arbitrary-length signal in windows of input_len; the tail is zero padded.
inline std::vector<double> denoise(const ModelParams<float>& params, std::span<const double> x) {
    const std::size_t d = params.config.input_len;
    const std::size_t windows = (x.size() + d - 1) / d;
    std::vector<double> out(x.size());
    if (windows == 0) {
        return out;
    }
    Tensor<float> batch({windows, 1, d});
    for (std::size_t i = 0; i < x.size(); ++i) {
        batch[i] = static_cast<float>(x[i]);
    }
    const auto y = forward(params, batch, Mode::Eval).y;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<double>(y[i]);
    }
    return out;
}

} // namespace trustemg::nn
