#pragma once

// 1-D U-Net with a single transformer encoder layer in the bottleneck.
//
// Encoder: conv k8 s1 (pad 3/4), then four conv k8 s2 (pad 3/3); each conv is
// followed by batch norm and ReLU, widths base * {1,2,4,8,16}. The latent
// (embed = 16 * base channels, d/16 steps) gets a sinusoidal position code and
// goes through one post-norm transformer layer f. The bottleneck then emits
// sigmoid(f) * z (RM), f (DM) or z (identity). The decoder has four upsampling
// modules (transposed conv s2 + conv s1, both with BN + ReLU) that concatenate
// the matching encoder output, and a final transposed conv s1 to one channel.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustemg/error.hpp"
#include "trustemg/nn/ops.hpp"
#include "trustemg/nn/tensor.hpp"

namespace trustemg::nn {

enum class Bottleneck { RM, DM, Identity };

inline std::string to_string(Bottleneck b) {
    switch (b) {
    case Bottleneck::RM: return "rm";
    case Bottleneck::DM: return "dm";
    case Bottleneck::Identity: return "identity";
    }
    return "?";
}

inline Bottleneck parse_bottleneck(const std::string& s) {
    if (s == "rm" || s == "RM") return Bottleneck::RM;
    if (s == "dm" || s == "DM") return Bottleneck::DM;
    if (s == "identity" || s == "unet") return Bottleneck::Identity;
    throw Error(Errc::InvalidArgument, "unknown bottleneck mode '" + s + "'");
}

enum class Mode { Train, Eval };

inline constexpr std::size_t kEncoderDepth = 5;
inline constexpr std::size_t kDecoderDepth = 4;

struct ModelConfig {
    std::size_t input_len = 64;
    std::size_t base_width = 8;
    std::size_t kernel = 8;
    Bottleneck bottleneck = Bottleneck::RM;
    std::size_t heads = 2;
    std::size_t ff_dim = 256;
    double dropout = 0.1;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t embed_dim() const { return base_width * 16; }
    [[nodiscard]] std::size_t latent_len() const { return input_len / 16; }
    [[nodiscard]] std::size_t head_dim() const { return embed_dim() / heads; }
    /// Channels after encoder level `i` (0..4).
    [[nodiscard]] std::size_t width(std::size_t i) const { return base_width << i; }

    /// Full-size widths: embed 1024, 8 heads, feedforward 2048, dropout 0.1.
    static ModelConfig full(std::size_t d, Bottleneck b = Bottleneck::RM) {
        return {d, 64, 8, b, 8, 2048, 0.1, 0};
    }

    /// Scaled-down widths; feedforward is twice the embedding as in the full model.
    static ModelConfig tiny(std::size_t d, std::size_t base = 8, std::size_t heads = 2,
                            Bottleneck b = Bottleneck::RM) {
        return {d, base, 8, b, heads, base * 32, 0.1, 0};
    }

    void validate() const {
        require(input_len >= 16 && input_len % 16 == 0, Errc::InvalidConfig,
                "input length must be a positive multiple of 16");
        require(base_width > 0, Errc::InvalidConfig, "base width must be positive");
        require(kernel == 8, Errc::InvalidConfig, "only kernel size 8 is supported");
        require(heads > 0 && embed_dim() % heads == 0, Errc::InvalidConfig,
                "embedding dimension must be divisible by the head count");
        require(ff_dim > 0, Errc::InvalidConfig, "feedforward dimension must be positive");
        require(dropout >= 0.0 && dropout < 1.0, Errc::InvalidConfig, "dropout must be in [0, 1)");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
    return {{"input_len", c.input_len}, {"base_width", c.base_width}, {"kernel", c.kernel},
            {"bottleneck", to_string(c.bottleneck)}, {"heads", c.heads}, {"ff_dim", c.ff_dim},
            {"dropout", c.dropout}, {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
    ModelConfig c;
    c.input_len = j.value("input_len", c.input_len);
    c.base_width = j.value("base_width", c.base_width);
    c.kernel = j.value("kernel", c.kernel);
    c.bottleneck = parse_bottleneck(j.value("bottleneck", std::string("rm")));
    c.heads = j.value("heads", c.heads);
    c.ff_dim = j.value("ff_dim", c.base_width * 32);
    c.dropout = j.value("dropout", c.dropout);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// parameters

template <typename T>
struct ConvBlock {
    Tensor<T> weight; ///< conv (Cout, Cin, K); transposed conv (Cin, Cout, K)
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;
};

template <typename T>
struct AttentionHead {
    Tensor<T> W_Q, b_Q; ///< (E, d_h), (d_h)
    Tensor<T> W_K, b_K;
    Tensor<T> W_V, b_V;
};

template <typename T>
struct EncoderLayer {
    std::vector<AttentionHead<T>> heads;
    Tensor<T> W_O, b_O; ///< (E, E), (E)
    Tensor<T> W_1, b_1; ///< (E, ff), (ff)
    Tensor<T> W_2, b_2; ///< (ff, E), (E)
    Tensor<T> ln1_gamma, ln1_beta;
    Tensor<T> ln2_gamma, ln2_beta;
};

template <typename T>
struct UpModule {
    ConvBlock<T> up;   ///< transposed conv, stride 2
    ConvBlock<T> conv; ///< conv, stride 1, over [up, skip]
};

template <typename T>
struct ModelParams;

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg);

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor = nullptr;
    bool trainable = true;
};

template <typename T>
struct ModelParams {
    ModelConfig config;
    std::array<ConvBlock<T>, kEncoderDepth> encoder;
    EncoderLayer<T> transformer;
    std::array<UpModule<T>, kDecoderDepth> decoder;
    Tensor<T> out_weight; ///< (Cin, 1, K)
    Tensor<T> out_bias;
    std::uint64_t generation = 0; ///< bumped on every trainable-parameter update

    /// Every tensor in a fixed order; running statistics are non-trainable buffers.
    std::vector<ParamRef<T>> refs() {
        std::vector<ParamRef<T>> out;
        auto block = [&](const std::string& prefix, ConvBlock<T>& b) {
            out.push_back({prefix + ".weight", &b.weight, true});
            out.push_back({prefix + ".bn.gamma", &b.gamma, true});
            out.push_back({prefix + ".bn.beta", &b.beta, true});
            out.push_back({prefix + ".bn.running_mean", &b.running_mean, false});
            out.push_back({prefix + ".bn.running_var", &b.running_var, false});
        };
        for (std::size_t i = 0; i < encoder.size(); ++i) {
            block("enc" + std::to_string(i) + ".conv", encoder[i]);
        }
        auto& t = transformer;
        for (std::size_t h = 0; h < t.heads.size(); ++h) {
            const std::string p = "transformer.head" + std::to_string(h) + ".";
            auto& hd = t.heads[h];
            out.push_back({p + "W_Q", &hd.W_Q, true});
            out.push_back({p + "b_Q", &hd.b_Q, true});
            out.push_back({p + "W_K", &hd.W_K, true});
            out.push_back({p + "b_K", &hd.b_K, true});
            out.push_back({p + "W_V", &hd.W_V, true});
            out.push_back({p + "b_V", &hd.b_V, true});
        }
        out.push_back({"transformer.W_O", &t.W_O, true});
        out.push_back({"transformer.b_O", &t.b_O, true});
        out.push_back({"transformer.ff1.weight", &t.W_1, true});
        out.push_back({"transformer.ff1.bias", &t.b_1, true});
        out.push_back({"transformer.ff2.weight", &t.W_2, true});
        out.push_back({"transformer.ff2.bias", &t.b_2, true});
        out.push_back({"transformer.ln1.gamma", &t.ln1_gamma, true});
        out.push_back({"transformer.ln1.beta", &t.ln1_beta, true});
        out.push_back({"transformer.ln2.gamma", &t.ln2_gamma, true});
        out.push_back({"transformer.ln2.beta", &t.ln2_beta, true});
        for (std::size_t j = 0; j < decoder.size(); ++j) {
            block("dec" + std::to_string(j) + ".up", decoder[j].up);
            block("dec" + std::to_string(j) + ".conv", decoder[j].conv);
        }
        out.push_back({"out.weight", &out_weight, true});
        out.push_back({"out.bias", &out_bias, true});
        return out;
    }

    [[nodiscard]] std::size_t trainable_count() {
        std::size_t n = 0;
        for (const auto& r : refs()) {
            n += r.trainable ? r.tensor->size() : 0;
        }
        return n;
    }

    void touch() noexcept { ++generation; }

    template <typename U>
    [[nodiscard]] ModelParams<U> cast() const {
        ModelParams<U> out = init_params<U>(config);
        out.generation = generation;
        auto src = const_cast<ModelParams*>(this)->refs();
        auto dst = out.refs();
        for (std::size_t i = 0; i < src.size(); ++i) {
            *dst[i].tensor = src[i].tensor->template cast<U>();
        }
        return out;
    }
};

namespace detail {

template <typename T>
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Tensor<T> uniform(std::vector<std::size_t> shape, std::size_t fan_in) {
        Tensor<T> t(std::move(shape));
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (T& v : t.values()) {
            v = static_cast<T>(dist(rng_));
        }
        return t;
    }

    ConvBlock<T> block(std::vector<std::size_t> wshape, std::size_t fan_in, std::size_t channels) {
        ConvBlock<T> b;
        b.weight = uniform(std::move(wshape), fan_in);
        b.gamma = Tensor<T>({channels}, T(1));
        b.beta = Tensor<T>({channels}, T(0));
        b.running_mean = Tensor<T>({channels}, T(0));
        b.running_var = Tensor<T>({channels}, T(1));
        return b;
    }

private:
    std::mt19937_64 rng_;
};

} // namespace detail

/// Fresh parameters: weights uniform in +-sqrt(1/fan_in), BN gamma 1 / beta 0, LN gamma 1 / beta 0.
/// Convolutions followed by batch norm carry no bias (beta plays that role).
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg) {
    cfg.validate();
    detail::Initializer<T> init(cfg.seed);
    ModelParams<T> p;
    p.config = cfg;
    const std::size_t k = cfg.kernel;
    for (std::size_t i = 0; i < kEncoderDepth; ++i) {
        const std::size_t cin = i == 0 ? 1 : cfg.width(i - 1);
        const std::size_t cout = cfg.width(i);
        p.encoder[i] = init.block({cout, cin, k}, cin * k, cout);
    }
    const std::size_t e = cfg.embed_dim();
    const std::size_t dh = cfg.head_dim();
    auto& t = p.transformer;
    t.heads.resize(cfg.heads);
    for (auto& h : t.heads) {
        h.W_Q = init.uniform({e, dh}, e);
        h.b_Q = init.uniform({dh}, e);
        h.W_K = init.uniform({e, dh}, e);
        h.b_K = init.uniform({dh}, e);
        h.W_V = init.uniform({e, dh}, e);
        h.b_V = init.uniform({dh}, e);
    }
    t.W_O = init.uniform({e, e}, e);
    t.b_O = init.uniform({e}, e);
    t.W_1 = init.uniform({e, cfg.ff_dim}, e);
    t.b_1 = init.uniform({cfg.ff_dim}, e);
    t.W_2 = init.uniform({cfg.ff_dim, e}, cfg.ff_dim);
    t.b_2 = init.uniform({e}, cfg.ff_dim);
    t.ln1_gamma = Tensor<T>({e}, T(1));
    t.ln1_beta = Tensor<T>({e}, T(0));
    t.ln2_gamma = Tensor<T>({e}, T(1));
    t.ln2_beta = Tensor<T>({e}, T(0));
    for (std::size_t j = 0; j < kDecoderDepth; ++j) {
        const std::size_t cin = cfg.width(kEncoderDepth - 1 - j);
        const std::size_t cout = cfg.width(kEncoderDepth - 2 - j);
        // transposed conv weights are (Cin, Cout, K); fan-in follows the (Cout * K) convention
        p.decoder[j].up = init.block({cin, cout, k}, cout * k, cout);
        p.decoder[j].conv = init.block({cout, 2 * cout, k}, 2 * cout * k, cout);
    }
    p.out_weight = init.uniform({cfg.base_width, 1, k}, k);
    p.out_bias = init.uniform({1}, k);
    return p;
}

/// Gradient buffer shaped like `p`, all zeros.
template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
    ModelParams<T> g = p;
    for (auto& r : g.refs()) {
        r.tensor->fill(T(0));
    }
    return g;
}

/// Drives the transformer output to a constant by zeroing the second layer-norm gain.
template <typename T>
void force_transformer_output(ModelParams<T>& p, T value) {
    p.transformer.ln2_gamma.fill(T(0));
    p.transformer.ln2_beta.fill(value);
    p.touch();
}

// ---------------------------------------------------------------------------
// forward

inline ConvGeometry encoder_geometry(std::size_t level) {
    return level == 0 ? ConvGeometry{8, 1, 3, 4} : ConvGeometry{8, 2, 3, 3};
}

inline constexpr ConvGeometry kUpGeometry{8, 2, 3, 3};
inline constexpr ConvGeometry kSameGeometry{8, 1, 3, 4};

template <typename T>
struct ConvBlockCache {
    Tensor<T> input;
    BatchNormCache<T> bn;
    Tensor<T> output; ///< after ReLU
    Tensor<T> new_mean;
    Tensor<T> new_var;
};

template <typename T>
struct HeadCache {
    std::vector<T> q, k, v; ///< (S, d_h)
    std::vector<T> p;       ///< softmax weights (S, S)
    std::vector<T> mask;    ///< dropout on p; empty means none
    std::vector<T> pd;      ///< p after dropout
};

template <typename T>
struct TransformerCache {
    std::vector<T> x0; ///< latent plus position code (S, E)
    std::vector<HeadCache<T>> heads;
    std::vector<T> h;  ///< concatenated head outputs (S, E)
    std::vector<T> a;  ///< output projection (S, E)
    std::vector<T> mask_attn, mask_ff, mask_out;
    LayerNormCache<T> ln1;
    std::vector<T> y1;
    std::vector<T> f1; ///< ReLU output (S, ff)
    std::vector<T> f1d;
    LayerNormCache<T> ln2;
};

template <typename T>
struct ForwardCache {
    bool valid = false;
    std::uint64_t generation = 0;
    ModelConfig config;
    Mode mode = Mode::Eval;
    Tensor<T> input;
    std::array<ConvBlockCache<T>, kEncoderDepth> encoder;
    Tensor<T> z;          ///< encoder output (B, E, S)
    Tensor<T> f;          ///< transformer output (B, E, S); empty for identity
    Tensor<T> bottleneck; ///< what the decoder sees
    std::vector<TransformerCache<T>> items;
    std::array<ConvBlockCache<T>, kDecoderDepth> up;
    std::array<ConvBlockCache<T>, kDecoderDepth> conv;
};

template <typename T>
struct ForwardResult {
    Tensor<T> y;
    ForwardCache<T> cache;
};

namespace detail {

template <typename T>
Tensor<T> conv_block_forward(const ConvBlock<T>& p, const Tensor<T>& x, const ConvGeometry& g, bool transpose,
                             bool batch_stats, ConvBlockCache<T>& c) {
    c.input = x;
    Tensor<T> pre = transpose ? conv_transpose1d(x, p.weight, static_cast<const Tensor<T>*>(nullptr), g)
                              : conv1d(x, p.weight, static_cast<const Tensor<T>*>(nullptr), g);
    Tensor<T> bn =
        batch_norm(pre, p.gamma, p.beta, p.running_mean, p.running_var, batch_stats, c.bn, c.new_mean, c.new_var);
    c.output = relu(std::move(bn));
    return c.output;
}

/// Returns d(input); accumulates into `grad`.
template <typename T>
Tensor<T> conv_block_backward(const ConvBlock<T>& p, const ConvGeometry& g, bool transpose,
                              const ConvBlockCache<T>& c, const Tensor<T>& dout, ConvBlock<T>& grad) {
    Tensor<T> dbn(dout.shape());
    relu_backward(c.output, dout, dbn);
    Tensor<T> dpre(dout.shape());
    batch_norm_backward(dbn, p.gamma, c.bn, dpre, grad.gamma, grad.beta);
    Tensor<T> dx(c.input.shape());
    if (transpose) {
        conv_transpose1d_backward(c.input, p.weight, g, dpre, dx, grad.weight, static_cast<Tensor<T>*>(nullptr));
    } else {
        conv1d_backward(c.input, p.weight, g, dpre, dx, grad.weight, static_cast<Tensor<T>*>(nullptr));
    }
    return dx;
}

/// rows x (in) times (in, out) plus bias.
template <typename T>
std::vector<T> affine(const std::vector<T>& x, std::size_t rows, const Tensor<T>& w, const Tensor<T>& b) {
    const std::size_t in = w.dim(0);
    const std::size_t out = w.dim(1);
    std::vector<T> y(rows * out);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < out; ++c) {
            y[r * out + c] = b[c];
        }
    }
    gemm(x.data(), w.data(), y.data(), rows, in, out);
    return y;
}

/// Accumulates dW, db and dx for `affine`.
template <typename T>
void affine_backward(const std::vector<T>& x, std::size_t rows, const Tensor<T>& w, const std::vector<T>& dy,
                     Tensor<T>& dw, Tensor<T>& db, std::vector<T>& dx) {
    const std::size_t in = w.dim(0);
    const std::size_t out = w.dim(1);
    gemm_at(x.data(), dy.data(), dw.data(), rows, in, out);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < out; ++c) {
            db[c] += dy[r * out + c];
        }
    }
    gemm_bt(dy.data(), w.data(), dx.data(), rows, out, in);
}

template <typename T>
void apply_mask(std::vector<T>& x, const std::vector<T>& mask) {
    if (!mask.empty()) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] *= mask[i];
        }
    }
}

/// One post-norm encoder layer on a single item (S, E).
template <typename T>
std::vector<T> transformer_forward(const EncoderLayer<T>& p, const ModelConfig& cfg, std::vector<T> x0,
                                   bool dropout_on, std::mt19937_64& rng, TransformerCache<T>& c) {
    const std::size_t s = cfg.latent_len();
    const std::size_t e = cfg.embed_dim();
    const std::size_t dh = cfg.head_dim();
    const double rate = dropout_on ? cfg.dropout : 0.0;
    auto mask = [&](std::size_t n) { return rate > 0.0 ? dropout_mask<T>(n, rate, rng) : std::vector<T>{}; };

    c.x0 = std::move(x0);
    c.heads.assign(p.heads.size(), {});
    c.h.assign(s * e, T(0));
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
        const auto& hp = p.heads[i];
        auto& hc = c.heads[i];
        hc.q = affine(c.x0, s, hp.W_Q, hp.b_Q);
        hc.k = affine(c.x0, s, hp.W_K, hp.b_K);
        hc.v = affine(c.x0, s, hp.W_V, hp.b_V);
        hc.p.assign(s * s, T(0));
        gemm_bt(hc.q.data(), hc.k.data(), hc.p.data(), s, dh, s);
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        for (T& v : hc.p) {
            v *= scale;
        }
        softmax_rows(hc.p, s, s);
        hc.mask = mask(s * s);
        hc.pd = hc.p;
        apply_mask(hc.pd, hc.mask);
        std::vector<T> o(s * dh, T(0));
        gemm(hc.pd.data(), hc.v.data(), o.data(), s, s, dh);
        for (std::size_t r = 0; r < s; ++r) {
            std::copy_n(o.begin() + static_cast<std::ptrdiff_t>(r * dh), dh,
                        c.h.begin() + static_cast<std::ptrdiff_t>(r * e + i * dh));
        }
    }
    c.a = affine(c.h, s, p.W_O, p.b_O);
    c.mask_attn = mask(s * e);
    std::vector<T> r1 = c.a;
    apply_mask(r1, c.mask_attn);
    for (std::size_t i = 0; i < r1.size(); ++i) {
        r1[i] += c.x0[i];
    }
    c.y1 = layer_norm(r1, s, e, p.ln1_gamma, p.ln1_beta, c.ln1);
    c.f1 = affine(c.y1, s, p.W_1, p.b_1);
    for (T& v : c.f1) {
        v = v > T(0) ? v : T(0);
    }
    c.mask_ff = mask(c.f1.size());
    c.f1d = c.f1;
    apply_mask(c.f1d, c.mask_ff);
    std::vector<T> r2 = affine(c.f1d, s, p.W_2, p.b_2);
    c.mask_out = mask(r2.size());
    apply_mask(r2, c.mask_out);
    for (std::size_t i = 0; i < r2.size(); ++i) {
        r2[i] += c.y1[i];
    }
    return layer_norm(r2, s, e, p.ln2_gamma, p.ln2_beta, c.ln2);
}

/// Returns d(x0) for one item; accumulates parameter gradients.
template <typename T>
std::vector<T> transformer_backward(const EncoderLayer<T>& p, const ModelConfig& cfg, const TransformerCache<T>& c,
                                    const std::vector<T>& dout, EncoderLayer<T>& g) {
    const std::size_t s = cfg.latent_len();
    const std::size_t e = cfg.embed_dim();
    const std::size_t dh = cfg.head_dim();
    const std::size_t ff = cfg.ff_dim;

    std::vector<T> dr2(s * e, T(0));
    layer_norm_backward(dout, s, e, p.ln2_gamma, c.ln2, dr2, g.ln2_gamma, g.ln2_beta);
    std::vector<T> dy1 = dr2;
    std::vector<T> df2 = dr2;
    apply_mask(df2, c.mask_out);
    std::vector<T> df1d(s * ff, T(0));
    affine_backward(c.f1d, s, p.W_2, df2, g.W_2, g.b_2, df1d);
    apply_mask(df1d, c.mask_ff);
    for (std::size_t i = 0; i < df1d.size(); ++i) {
        if (c.f1[i] <= T(0)) {
            df1d[i] = T(0);
        }
    }
    affine_backward(c.y1, s, p.W_1, df1d, g.W_1, g.b_1, dy1);

    std::vector<T> dr1(s * e, T(0));
    layer_norm_backward(dy1, s, e, p.ln1_gamma, c.ln1, dr1, g.ln1_gamma, g.ln1_beta);
    std::vector<T> dx0 = dr1;
    std::vector<T> da = dr1;
    apply_mask(da, c.mask_attn);
    std::vector<T> dh_all(s * e, T(0));
    affine_backward(c.h, s, p.W_O, da, g.W_O, g.b_O, dh_all);

    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
        const auto& hp = p.heads[i];
        const auto& hc = c.heads[i];
        auto& hg = g.heads[i];
        std::vector<T> dout_h(s * dh);
        for (std::size_t r = 0; r < s; ++r) {
            std::copy_n(dh_all.begin() + static_cast<std::ptrdiff_t>(r * e + i * dh), dh,
                        dout_h.begin() + static_cast<std::ptrdiff_t>(r * dh));
        }
        std::vector<T> dpd(s * s, T(0));
        gemm_bt(dout_h.data(), hc.v.data(), dpd.data(), s, dh, s);
        std::vector<T> dv(s * dh, T(0));
        gemm_at(hc.pd.data(), dout_h.data(), dv.data(), s, s, dh);
        apply_mask(dpd, hc.mask);
        // softmax backward, then the 1/sqrt(d_h) scale
        std::vector<T> dscore(s * s);
        for (std::size_t r = 0; r < s; ++r) {
            T dot = 0;
            for (std::size_t j = 0; j < s; ++j) {
                dot += dpd[r * s + j] * hc.p[r * s + j];
            }
            for (std::size_t j = 0; j < s; ++j) {
                dscore[r * s + j] = hc.p[r * s + j] * (dpd[r * s + j] - dot) * scale;
            }
        }
        std::vector<T> dq(s * dh, T(0));
        gemm(dscore.data(), hc.k.data(), dq.data(), s, s, dh);
        std::vector<T> dk(s * dh, T(0));
        gemm_at(dscore.data(), hc.q.data(), dk.data(), s, s, dh);
        affine_backward(c.x0, s, hp.W_Q, dq, hg.W_Q, hg.b_Q, dx0);
        affine_backward(c.x0, s, hp.W_K, dk, hg.W_K, hg.b_K, dx0);
        affine_backward(c.x0, s, hp.W_V, dv, hg.W_V, hg.b_V, dx0);
    }
    return dx0;
}

} // namespace detail

/// Shape of the per-item latent sequence: (d/16, embed).
inline std::array<std::size_t, 2> latent_shape(const ModelConfig& cfg) {
    return {cfg.latent_len(), cfg.embed_dim()};
}

/// x is (B, 1, d). Train mode uses batch statistics and dropout drawn from `dropout_seed`.
template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const Tensor<T>& x, Mode mode,
                         std::uint64_t dropout_seed = 0) {
    const ModelConfig& cfg = params.config;
    require(x.rank() == 3 && x.dim(0) >= 1 && x.dim(1) == 1 && x.dim(2) == cfg.input_len, Errc::ShapeMismatch,
            "model input must be (batch, 1, " + std::to_string(cfg.input_len) + "), got " + shape_string(x.shape()));
    const bool train = mode == Mode::Train;
    const std::size_t batch = x.dim(0);
    ForwardResult<T> res;
    auto& c = res.cache;
    c.config = cfg;
    c.mode = mode;
    c.generation = params.generation;
    c.input = x;

    Tensor<T> h = x;
    for (std::size_t i = 0; i < kEncoderDepth; ++i) {
        h = detail::conv_block_forward(params.encoder[i], h, encoder_geometry(i), false, train, c.encoder[i]);
    }
    c.z = h;

    const std::size_t s = cfg.latent_len();
    const std::size_t e = cfg.embed_dim();
    if (cfg.bottleneck == Bottleneck::Identity) {
        c.bottleneck = c.z;
    } else {
        std::mt19937_64 rng(dropout_seed);
        const auto pe = positional_encoding<T>(s, e);
        c.f = Tensor<T>(c.z.shape());
        c.items.resize(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            std::vector<T> x0(s * e);
            for (std::size_t t = 0; t < s; ++t) {
                for (std::size_t ch = 0; ch < e; ++ch) {
                    x0[t * e + ch] = c.z.at(b, ch, t) + pe[t * e + ch];
                }
            }
            const auto out = detail::transformer_forward(params.transformer, cfg, std::move(x0), train, rng, c.items[b]);
            for (std::size_t t = 0; t < s; ++t) {
                for (std::size_t ch = 0; ch < e; ++ch) {
                    c.f.at(b, ch, t) = out[t * e + ch];
                }
            }
        }
        if (cfg.bottleneck == Bottleneck::DM) {
            c.bottleneck = c.f;
        } else {
            c.bottleneck = Tensor<T>(c.z.shape());
            for (std::size_t i = 0; i < c.z.size(); ++i) {
                c.bottleneck[i] = sigmoid(c.f[i]) * c.z[i];
            }
        }
    }

    h = c.bottleneck;
    for (std::size_t j = 0; j < kDecoderDepth; ++j) {
        const auto& mod = params.decoder[j];
        Tensor<T> up = detail::conv_block_forward(mod.up, h, kUpGeometry, true, train, c.up[j]);
        const Tensor<T>& skip = c.encoder[kEncoderDepth - 2 - j].output;
        const std::size_t cu = up.dim(1);
        const std::size_t len = up.dim(2);
        Tensor<T> cat({batch, cu + skip.dim(1), len});
        for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(&up.at(b, 0, 0), cu * len, &cat.at(b, 0, 0));
            std::copy_n(&skip.at(b, 0, 0), skip.dim(1) * len, &cat.at(b, cu, 0));
        }
        h = detail::conv_block_forward(mod.conv, cat, kSameGeometry, false, train, c.conv[j]);
    }
    res.y = conv_transpose1d(h, params.out_weight, &params.out_bias, kSameGeometry);
    c.valid = true;
    return res;
}

template <typename T>
struct Gradients {
    ModelParams<T> params;
    Tensor<T> input;
};

/// Analytic gradients of sum(dy * y) with respect to every trainable tensor and the input.
template <typename T>
Gradients<T> backward(const ModelParams<T>& params, const ForwardCache<T>& c, const Tensor<T>& dy) {
    require(c.valid, Errc::StaleCache, "backward called without a forward pass");
    require(c.generation == params.generation && c.config == params.config, Errc::StaleCache,
            "parameters changed since the forward pass");
    const ModelConfig& cfg = params.config;
    const std::size_t batch = c.input.dim(0);
    require(dy.shape() == std::vector<std::size_t>{batch, 1, cfg.input_len}, Errc::ShapeMismatch,
            "upstream gradient shape does not match the output");

    Gradients<T> g{zeros_like(params), Tensor<T>(c.input.shape())};
    auto& gp = g.params;
    const Tensor<T>& last = c.conv[kDecoderDepth - 1].output;
    Tensor<T> dh(last.shape());
    conv_transpose1d_backward(last, params.out_weight, kSameGeometry, dy, dh, gp.out_weight, &gp.out_bias);

    std::array<Tensor<T>, kEncoderDepth> denc;
    for (std::size_t i = 0; i < kEncoderDepth; ++i) {
        denc[i] = Tensor<T>(c.encoder[i].output.shape());
    }
    for (std::size_t jj = kDecoderDepth; jj-- > 0;) {
        const auto& mod = params.decoder[jj];
        Tensor<T> dcat = detail::conv_block_backward(mod.conv, kSameGeometry, false, c.conv[jj], dh, gp.decoder[jj].conv);
        const std::size_t cu = c.up[jj].output.dim(1);
        const std::size_t len = c.up[jj].output.dim(2);
        Tensor<T> dup(c.up[jj].output.shape());
        Tensor<T>& dskip = denc[kEncoderDepth - 2 - jj];
        for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(&dcat.at(b, 0, 0), cu * len, &dup.at(b, 0, 0));
            for (std::size_t i = 0; i < dskip.dim(1) * len; ++i) {
                (&dskip.at(b, 0, 0))[i] += (&dcat.at(b, cu, 0))[i];
            }
        }
        dh = detail::conv_block_backward(mod.up, kUpGeometry, true, c.up[jj], dup, gp.decoder[jj].up);
    }

    // bottleneck
    Tensor<T>& dz = denc[kEncoderDepth - 1];
    Tensor<T> df;
    switch (cfg.bottleneck) {
    case Bottleneck::Identity:
        for (std::size_t i = 0; i < dz.size(); ++i) {
            dz[i] += dh[i];
        }
        break;
    case Bottleneck::DM:
        df = dh;
        break;
    case Bottleneck::RM:
        df = Tensor<T>(dh.shape());
        for (std::size_t i = 0; i < dz.size(); ++i) {
            const T sg = sigmoid(c.f[i]);
            dz[i] += dh[i] * sg;
            df[i] = dh[i] * c.z[i] * sg * (T(1) - sg);
        }
        break;
    }
    if (cfg.bottleneck != Bottleneck::Identity) {
        const std::size_t s = cfg.latent_len();
        const std::size_t e = cfg.embed_dim();
        for (std::size_t b = 0; b < batch; ++b) {
            std::vector<T> dout(s * e);
            for (std::size_t t = 0; t < s; ++t) {
                for (std::size_t ch = 0; ch < e; ++ch) {
                    dout[t * e + ch] = df.at(b, ch, t);
                }
            }
            const auto dx0 = detail::transformer_backward(params.transformer, cfg, c.items[b], dout, gp.transformer);
            for (std::size_t t = 0; t < s; ++t) {
                for (std::size_t ch = 0; ch < e; ++ch) {
                    dz.at(b, ch, t) += dx0[t * e + ch];
                }
            }
        }
    }

    for (std::size_t i = kEncoderDepth; i-- > 0;) {
        Tensor<T> din = detail::conv_block_backward(params.encoder[i], encoder_geometry(i), false, c.encoder[i],
                                                    denc[i], gp.encoder[i]);
        Tensor<T>& target = i == 0 ? g.input : denc[i - 1];
        for (std::size_t k = 0; k < din.size(); ++k) {
            target[k] += din[k];
        }
    }
    return g;
}

/// Copies the batch-norm running statistics produced by a train-mode forward pass.
template <typename T>
void commit_running_stats(ModelParams<T>& p, const ForwardCache<T>& c) {
    if (c.mode != Mode::Train) {
        return;
    }
    auto commit = [](ConvBlock<T>& b, const ConvBlockCache<T>& bc) {
        b.running_mean = bc.new_mean;
        b.running_var = bc.new_var;
    };
    for (std::size_t i = 0; i < kEncoderDepth; ++i) {
        commit(p.encoder[i], c.encoder[i]);
    }
    for (std::size_t j = 0; j < kDecoderDepth; ++j) {
        commit(p.decoder[j].up, c.up[j]);
        commit(p.decoder[j].conv, c.conv[j]);
    }
}

/// Mean absolute error.
template <typename T>
double l1_loss(const Tensor<T>& y, const Tensor<T>& target) {
    require(y.shape() == target.shape(), Errc::ShapeMismatch, "prediction and target shapes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        acc += std::abs(static_cast<double>(y[i]) - static_cast<double>(target[i]));
    }
    return acc / static_cast<double>(y.size());
}

/// sign(y - t) / count.
template <typename T>
Tensor<T> l1_grad(const Tensor<T>& y, const Tensor<T>& target) {
    require(y.shape() == target.shape(), Errc::ShapeMismatch, "prediction and target shapes differ");
    Tensor<T> g(y.shape());
    const auto n = static_cast<T>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const T d = y[i] - target[i];
        g[i] = d > T(0) ? T(1) / n : (d < T(0) ? T(-1) / n : T(0));
    }
    return g;
}

} // namespace trustemg::nn
