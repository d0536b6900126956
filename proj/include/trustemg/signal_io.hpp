#pragma once

// Signal files: raw little-endian float32 payload (`*.f32`) plus a JSON sidecar
// `{ "fs": <Hz>, "n": <count> }` at the same stem with `.json`. CSV input (one
// sample per line) is also accepted.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustemg/error.hpp"
#include "trustemg/signal.hpp"

namespace trustemg::io {

namespace fs = std::filesystem;

inline fs::path sidecar_path(const fs::path& payload) {
    fs::path p = payload;
    p.replace_extension(".json");
    return p;
}

inline std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xFFU) << 24U) | ((v & 0xFF00U) << 8U) | ((v >> 8U) & 0xFF00U) | (v >> 24U);
    }
    return v;
}

inline void write_signal(const fs::path& payload, const SampleBuffer& buf) {
    if (payload.has_parent_path()) {
        fs::create_directories(payload.parent_path());
    }
    std::ofstream out(payload, std::ios::binary);
    require(out.good(), Errc::Io, "cannot open " + payload.string());
    for (double v : buf.samples()) {
        const auto f = static_cast<float>(v);
        const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(f));
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    require(out.good(), Errc::Io, "write failed: " + payload.string());

    nlohmann::ordered_json meta;
    meta["fs"] = buf.fs();
    meta["n"] = buf.size();
    std::ofstream side(sidecar_path(payload));
    require(side.good(), Errc::Io, "cannot open sidecar for " + payload.string());
    side << meta.dump() << '\n';
}

inline SampleBuffer read_csv(const fs::path& path, double fs) {
    std::ifstream in(path);
    require(in.good(), Errc::Io, "cannot open " + path.string());
    std::vector<double> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        try {
            samples.push_back(std::stod(line));
        } catch (const std::exception&) {
            throw Error(Errc::Io, "bad CSV line in " + path.string() + ": " + line);
        }
    }
    return {std::move(samples), fs};
}

/// Reads a `.f32` file (sidecar required) or a CSV file (`fs_hint` supplies the rate).
inline SampleBuffer read_signal(const fs::path& path, double fs_hint = 1000.0) {
    if (path.extension() == ".csv") {
        return read_csv(path, fs_hint);
    }
    std::ifstream side(sidecar_path(path));
    require(side.good(), Errc::Io, "missing sidecar for " + path.string());
    nlohmann::json meta;
    try {
        side >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Io, "bad sidecar for " + path.string() + ": " + e.what());
    }
    const double fs = meta.at("fs").get<double>();
    const auto n = meta.at("n").get<std::size_t>();

    std::ifstream in(path, std::ios::binary);
    require(in.good(), Errc::Io, "cannot open " + path.string());
    std::vector<double> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        in.read(reinterpret_cast<char*>(&bits), sizeof bits);
        require(in.gcount() == sizeof bits, Errc::Io, "truncated signal file " + path.string());
        samples[i] = static_cast<double>(std::bit_cast<float>(to_little_endian(bits)));
    }
    return {std::move(samples), fs};
}

} // namespace trustemg::io
