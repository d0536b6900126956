#pragma once

// Weights file: "TEMGNET\0", u32 version, u32 config length + config JSON,
// u32 tensor count, then per tensor: u32 name length + name, u8 dtype
// (0 = f32, 1 = f64), u32 rank, u64 dims, little-endian payload.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "trustemg/error.hpp"
#include "trustemg/nn/model.hpp"

namespace trustemg::nn {

static_assert(std::endian::native == std::endian::little, "weights files are written in host byte order");

inline constexpr char kWeightsMagic[8] = {'T', 'E', 'M', 'G', 'N', 'E', 'T', '\0'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

template <typename U>
void put(std::ostream& os, U v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& is) {
    U v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(U));
    require(static_cast<std::size_t>(is.gcount()) == sizeof(U), Errc::BadMagic, "weights file is truncated");
    return v;
}

inline std::string get_bytes(std::istream& is, std::size_t n) {
    require(n < (std::size_t{1} << 32), Errc::BadMagic, "weights file has an implausible length field");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    require(static_cast<std::size_t>(is.gcount()) == n, Errc::BadMagic, "weights file is truncated");
    return s;
}

template <typename T>
constexpr std::uint8_t dtype_code() {
    return std::is_same_v<T, double> ? 1 : 0;
}

} // namespace detail

template <typename T>
void write_params(std::ostream& os, ModelParams<T>& p) {
    os.write(kWeightsMagic, sizeof(kWeightsMagic));
    detail::put<std::uint32_t>(os, kWeightsVersion);
    const std::string cfg = to_json(p.config).dump();
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const auto refs = p.refs();
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(refs.size()));
    for (const auto& r : refs) {
        detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
        os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        detail::put<std::uint8_t>(os, detail::dtype_code<T>());
        detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(r.tensor->rank()));
        for (std::size_t d : r.tensor->shape()) {
            detail::put<std::uint64_t>(os, d);
        }
        os.write(reinterpret_cast<const char*>(r.tensor->data()),
                 static_cast<std::streamsize>(r.tensor->size() * sizeof(T)));
    }
}

/// Reads a weights stream. With `expected`, a different architecture is a ShapeMismatch.
template <typename T>
ModelParams<T> read_params(std::istream& is, const ModelConfig* expected = nullptr) {
    char magic[sizeof(kWeightsMagic)] = {};
    is.read(magic, sizeof(magic));
    require(is.gcount() == sizeof(magic) && std::memcmp(magic, kWeightsMagic, sizeof(magic)) == 0, Errc::BadMagic,
            "not a weights file");
    const auto version = detail::get<std::uint32_t>(is);
    require(version == kWeightsVersion, Errc::BadMagic, "unsupported weights version " + std::to_string(version));
    const auto cfg_text = detail::get_bytes(is, detail::get<std::uint32_t>(is));
    ModelConfig cfg;
    try {
        cfg = model_config_from_json(nlohmann::ordered_json::parse(cfg_text));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::BadMagic, std::string("weights header is corrupt: ") + e.what());
    }
    if (expected != nullptr) {
        auto arch = [](ModelConfig c) {
            c.seed = 0;
            c.dropout = 0.0;
            c.bottleneck = Bottleneck::RM;
            return c;
        };
        require(arch(cfg) == arch(*expected), Errc::ShapeMismatch,
                "weights were saved for a different architecture: " + to_json(cfg).dump());
        require(cfg.bottleneck == expected->bottleneck, Errc::ShapeMismatch, "weights were saved for a different bottleneck");
    }
    ModelParams<T> p = init_params<T>(cfg);
    auto refs = p.refs();
    const auto count = detail::get<std::uint32_t>(is);
    require(count == refs.size(), Errc::ShapeMismatch, "weights file has the wrong number of tensors");
    for (auto& r : refs) {
        const auto name = detail::get_bytes(is, detail::get<std::uint32_t>(is));
        require(name == r.name, Errc::ShapeMismatch, "expected tensor '" + r.name + "', found '" + name + "'");
        const auto dtype = detail::get<std::uint8_t>(is);
        require(dtype <= 1, Errc::BadMagic, "unknown dtype in weights file");
        const auto rank = detail::get<std::uint32_t>(is);
        require(rank <= 8, Errc::BadMagic, "implausible tensor rank");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            d = detail::get<std::uint64_t>(is);
        }
        require(shape == r.tensor->shape(), Errc::ShapeMismatch,
                "tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                    shape_string(r.tensor->shape()));
        const std::size_t n = r.tensor->size();
        if (dtype == 1) {
            const auto raw = detail::get_bytes(is, n * sizeof(double));
            std::vector<double> vals(n);
            std::memcpy(vals.data(), raw.data(), raw.size());
            for (std::size_t i = 0; i < n; ++i) {
                (*r.tensor)[i] = static_cast<T>(vals[i]);
            }
        } else {
            const auto raw = detail::get_bytes(is, n * sizeof(float));
            std::vector<float> vals(n);
            std::memcpy(vals.data(), raw.data(), raw.size());
            for (std::size_t i = 0; i < n; ++i) {
                (*r.tensor)[i] = static_cast<T>(vals[i]);
            }
        }
    }
    return p;
}

template <typename T>
void save_params(const std::filesystem::path& path, ModelParams<T>& p) {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), Errc::Io, "cannot write " + path.string());
    write_params(os, p);
    require(static_cast<bool>(os), Errc::Io, "write failed for " + path.string());
}

template <typename T>
ModelParams<T> load_params(const std::filesystem::path& path, const ModelConfig* expected = nullptr) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), Errc::Io, "cannot open " + path.string());
    return read_params<T>(is, expected);
}

} // namespace trustemg::nn
