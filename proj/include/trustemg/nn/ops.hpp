#pragma once

// Layer primitives with hand-written backward passes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

#include "trustemg/nn/tensor.hpp"

namespace trustemg::nn {

// ---------------------------------------------------------------------------
// dense helpers on row-major matrices

/// C(m,n) += A(m,k) B(k,n)
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* brow = b + p * n;
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

/// C(k,n) += A(m,k)^T B(m,n)
template <typename T>
void gemm_at(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* brow = b + i * n;
            T* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

/// C(m,k) += A(m,n) B(k,n)^T
template <typename T>
void gemm_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            const T* arow = a + i * n;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                acc += arow[j] * brow[j];
            }
            c[i * k + p] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// convolution

struct ConvGeometry {
    std::size_t kernel = 8;
    std::size_t stride = 1;
    std::size_t before = 3; ///< zero padding (conv) or cropping (transposed conv) on the left
    std::size_t after = 4;
};

inline std::size_t conv_out_len(std::size_t len, const ConvGeometry& g) {
    return (len + g.before + g.after - g.kernel) / g.stride + 1;
}

inline std::size_t conv_transpose_out_len(std::size_t len, const ConvGeometry& g) {
    return (len - 1) * g.stride + g.kernel - g.before - g.after;
}

/// x (B, Cin, L), w (Cout, Cin, K) -> (B, Cout, Lout)
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, const ConvGeometry& g) {
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t len = x.dim(2);
    const std::size_t cout = w.dim(0);
    require(w.dim(1) == cin && w.dim(2) == g.kernel, Errc::ShapeMismatch, "conv weight does not match input");
    const std::size_t lout = conv_out_len(len, g);
    Tensor<T> y({batch, cout, lout});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            T* out = &y.at(b, co, 0);
            const T b0 = bias != nullptr ? (*bias)[co] : T(0);
            for (std::size_t o = 0; o < lout; ++o) {
                out[o] = b0;
            }
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T* in = &x.at(b, ci, 0);
                const T* wk = &w.at(co, ci, 0);
                for (std::size_t o = 0; o < lout; ++o) {
                    T acc = 0;
                    for (std::size_t k = 0; k < g.kernel; ++k) {
                        const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(o * g.stride + k) -
                                                   static_cast<std::ptrdiff_t>(g.before);
                        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(len)) {
                            acc += wk[k] * in[idx];
                        }
                    }
                    out[o] += acc;
                }
            }
        }
    }
    return y;
}

/// Accumulates dx, dw and (optionally) db for conv1d.
template <typename T>
void conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g, const Tensor<T>& dy,
                     Tensor<T>& dx, Tensor<T>& dw, Tensor<T>* db) {
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t len = x.dim(2);
    const std::size_t cout = w.dim(0);
    const std::size_t lout = dy.dim(2);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            const T* gout = &dy.at(b, co, 0);
            if (db != nullptr) {
                for (std::size_t o = 0; o < lout; ++o) {
                    (*db)[co] += gout[o];
                }
            }
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T* in = &x.at(b, ci, 0);
                T* gin = &dx.at(b, ci, 0);
                const T* wk = &w.at(co, ci, 0);
                T* gw = &dw.at(co, ci, 0);
                for (std::size_t o = 0; o < lout; ++o) {
                    for (std::size_t k = 0; k < g.kernel; ++k) {
                        const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(o * g.stride + k) -
                                                   static_cast<std::ptrdiff_t>(g.before);
                        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(len)) {
                            gin[idx] += wk[k] * gout[o];
                            gw[k] += in[idx] * gout[o];
                        }
                    }
                }
            }
        }
    }
}

/// x (B, Cin, L), w (Cin, Cout, K) -> (B, Cout, Lout); `before`/`after` crop the full output.
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, const ConvGeometry& g) {
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t len = x.dim(2);
    const std::size_t cout = w.dim(1);
    require(w.dim(0) == cin && w.dim(2) == g.kernel, Errc::ShapeMismatch,
            "transposed conv weight does not match input");
    const std::size_t lout = conv_transpose_out_len(len, g);
    Tensor<T> y({batch, cout, lout});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            T* out = &y.at(b, co, 0);
            const T b0 = bias != nullptr ? (*bias)[co] : T(0);
            for (std::size_t o = 0; o < lout; ++o) {
                out[o] = b0;
            }
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T* in = &x.at(b, ci, 0);
                const T* wk = &w.at(ci, co, 0);
                for (std::size_t i = 0; i < len; ++i) {
                    for (std::size_t k = 0; k < g.kernel; ++k) {
                        const std::ptrdiff_t o = static_cast<std::ptrdiff_t>(i * g.stride + k) -
                                                 static_cast<std::ptrdiff_t>(g.before);
                        if (o >= 0 && o < static_cast<std::ptrdiff_t>(lout)) {
                            out[o] += wk[k] * in[i];
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
void conv_transpose1d_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g, const Tensor<T>& dy,
                               Tensor<T>& dx, Tensor<T>& dw, Tensor<T>* db) {
    const std::size_t batch = x.dim(0);
    const std::size_t cin = x.dim(1);
    const std::size_t len = x.dim(2);
    const std::size_t cout = w.dim(1);
    const std::size_t lout = dy.dim(2);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t co = 0; co < cout; ++co) {
            const T* gout = &dy.at(b, co, 0);
            if (db != nullptr) {
                for (std::size_t o = 0; o < lout; ++o) {
                    (*db)[co] += gout[o];
                }
            }
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T* in = &x.at(b, ci, 0);
                T* gin = &dx.at(b, ci, 0);
                const T* wk = &w.at(ci, co, 0);
                T* gw = &dw.at(ci, co, 0);
                for (std::size_t i = 0; i < len; ++i) {
                    for (std::size_t k = 0; k < g.kernel; ++k) {
                        const std::ptrdiff_t o = static_cast<std::ptrdiff_t>(i * g.stride + k) -
                                                 static_cast<std::ptrdiff_t>(g.before);
                        if (o >= 0 && o < static_cast<std::ptrdiff_t>(lout)) {
                            gin[i] += wk[k] * gout[o];
                            gw[k] += in[i] * gout[o];
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// normalization and activations

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct BatchNormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
    bool batch_stats = true;
};

/// Per-channel normalization over (batch, length). With `batch_stats` the
/// updated running statistics are written to new_mean/new_var.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, const Tensor<T>& run_mean,
                     const Tensor<T>& run_var, bool batch_stats, BatchNormCache<T>& cache, Tensor<T>& new_mean,
                     Tensor<T>& new_var) {
    const std::size_t batch = x.dim(0);
    const std::size_t ch = x.dim(1);
    const std::size_t len = x.dim(2);
    const auto count = static_cast<double>(batch * len);
    cache.xhat = Tensor<T>(x.shape());
    cache.inv_std.assign(ch, T(0));
    cache.batch_stats = batch_stats;
    new_mean = run_mean;
    new_var = run_var;
    Tensor<T> y(x.shape());
    for (std::size_t c = 0; c < ch; ++c) {
        double mu = 0.0;
        double var = 0.0;
        if (batch_stats) {
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t l = 0; l < len; ++l) {
                    mu += static_cast<double>(x.at(b, c, l));
                }
            }
            mu /= count;
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t l = 0; l < len; ++l) {
                    const double d = static_cast<double>(x.at(b, c, l)) - mu;
                    var += d * d;
                }
            }
            var /= count;
            const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
            new_mean[c] = static_cast<T>((1.0 - kBatchNormMomentum) * static_cast<double>(run_mean[c]) +
                                         kBatchNormMomentum * mu);
            new_var[c] = static_cast<T>((1.0 - kBatchNormMomentum) * static_cast<double>(run_var[c]) +
                                        kBatchNormMomentum * unbiased);
        } else {
            mu = static_cast<double>(run_mean[c]);
            var = static_cast<double>(run_var[c]);
        }
        const T inv = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
        cache.inv_std[c] = inv;
        const T m = static_cast<T>(mu);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t l = 0; l < len; ++l) {
                const T xh = (x.at(b, c, l) - m) * inv;
                cache.xhat.at(b, c, l) = xh;
                y.at(b, c, l) = gamma[c] * xh + beta[c];
            }
        }
    }
    return y;
}

template <typename T>
void batch_norm_backward(const Tensor<T>& dy, const Tensor<T>& gamma, const BatchNormCache<T>& cache, Tensor<T>& dx,
                         Tensor<T>& dgamma, Tensor<T>& dbeta) {
    const std::size_t batch = dy.dim(0);
    const std::size_t ch = dy.dim(1);
    const std::size_t len = dy.dim(2);
    const auto count = static_cast<T>(batch * len);
    for (std::size_t c = 0; c < ch; ++c) {
        T sum_dy = 0;
        T sum_dy_xhat = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t l = 0; l < len; ++l) {
                sum_dy += dy.at(b, c, l);
                sum_dy_xhat += dy.at(b, c, l) * cache.xhat.at(b, c, l);
            }
        }
        dgamma[c] += sum_dy_xhat;
        dbeta[c] += sum_dy;
        const T scale = gamma[c] * cache.inv_std[c];
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t l = 0; l < len; ++l) {
                if (cache.batch_stats) {
                    dx.at(b, c, l) +=
                        scale * (dy.at(b, c, l) - sum_dy / count - cache.xhat.at(b, c, l) * sum_dy_xhat / count);
                } else {
                    dx.at(b, c, l) += scale * dy.at(b, c, l);
                }
            }
        }
    }
}

template <typename T>
Tensor<T> relu(Tensor<T> x) {
    for (T& v : x.values()) {
        v = v > T(0) ? v : T(0);
    }
    return x;
}

/// dx += dy where the ReLU output was positive.
template <typename T>
void relu_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] > T(0)) {
            dx[i] += dy[i];
        }
    }
}

template <typename T>
T sigmoid(T v) {
    return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
struct LayerNormCache {
    std::vector<T> xhat;
    std::vector<T> inv_std;
};

/// Normalizes each row of a (rows, cols) matrix.
template <typename T>
std::vector<T> layer_norm(const std::vector<T>& x, std::size_t rows, std::size_t cols, const Tensor<T>& gamma,
                          const Tensor<T>& beta, LayerNormCache<T>& cache) {
    std::vector<T> y(x.size());
    cache.xhat.assign(x.size(), T(0));
    cache.inv_std.assign(rows, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = x.data() + r * cols;
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            mu += static_cast<double>(row[c]);
        }
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = static_cast<double>(row[c]) - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + kLayerNormEps));
        cache.inv_std[r] = inv;
        for (std::size_t c = 0; c < cols; ++c) {
            const T xh = (row[c] - static_cast<T>(mu)) * inv;
            cache.xhat[r * cols + c] = xh;
            y[r * cols + c] = gamma[c] * xh + beta[c];
        }
    }
    return y;
}

template <typename T>
void layer_norm_backward(const std::vector<T>& dy, std::size_t rows, std::size_t cols, const Tensor<T>& gamma,
                         const LayerNormCache<T>& cache, std::vector<T>& dx, Tensor<T>& dgamma, Tensor<T>& dbeta) {
    std::vector<T> dxhat(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        T sum = 0;
        T sum_xhat = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            dgamma[c] += dy[i] * cache.xhat[i];
            dbeta[c] += dy[i];
            dxhat[c] = dy[i] * gamma[c];
            sum += dxhat[c];
            sum_xhat += dxhat[c] * cache.xhat[i];
        }
        const auto n = static_cast<T>(cols);
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            dx[i] += cache.inv_std[r] * (dxhat[c] - sum / n - cache.xhat[i] * sum_xhat / n);
        }
    }
}

/// Row-wise softmax in place.
template <typename T>
void softmax_rows(std::vector<T>& m, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = m.data() + r * cols;
        const T peak = *std::max_element(row, row + cols);
        T sum = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - peak);
            sum += row[c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] /= sum;
        }
    }
}

/// softmax(Q K^T / sqrt(d_h)) V for Q (s,d_h), K (t,d_h), V (t,d_v). Returns the output and the weights.
template <typename T>
std::vector<T> attention(const std::vector<T>& q, const std::vector<T>& k, const std::vector<T>& v, std::size_t s,
                         std::size_t t, std::size_t d_h, std::size_t d_v, std::vector<T>* weights = nullptr) {
    std::vector<T> scores(s * t, T(0));
    gemm_bt(q.data(), k.data(), scores.data(), s, d_h, t);
    const T scale = T(1) / std::sqrt(static_cast<T>(d_h));
    for (T& x : scores) {
        x *= scale;
    }
    softmax_rows(scores, s, t);
    std::vector<T> out(s * d_v, T(0));
    gemm(scores.data(), v.data(), out.data(), s, t, d_v);
    if (weights != nullptr) {
        *weights = std::move(scores);
    }
    return out;
}

/// Fixed sinusoidal positional encoding (rows = positions, cols = embedding), base 1e4.
template <typename T>
std::vector<T> positional_encoding(std::size_t rows, std::size_t cols) {
    std::vector<T> pe(rows * cols);
    for (std::size_t p = 0; p < rows; ++p) {
        for (std::size_t i = 0; i < cols; ++i) {
            const double rate = std::pow(1e4, -static_cast<double>(2 * (i / 2)) / static_cast<double>(cols));
            const double angle = static_cast<double>(p) * rate;
            pe[p * cols + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return pe;
}

/// Inverted-dropout mask (0 or 1/(1-p)); all ones when p == 0.
template <typename T>
std::vector<T> dropout_mask(std::size_t n, double p, std::mt19937_64& rng) {
    std::vector<T> mask(n, T(1));
    if (p <= 0.0) {
        return mask;
    }
    std::bernoulli_distribution keep(1.0 - p);
    const auto scale = static_cast<T>(1.0 / (1.0 - p));
    for (T& m : mask) {
        m = keep(rng) ? scale : T(0);
    }
    return mask;
}

} // namespace trustemg::nn
