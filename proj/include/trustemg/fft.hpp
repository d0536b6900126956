#pragma once

// Thin RAII wrapper over FFTW3. Planning is serialized (FFTW's planner is not
// thread-safe); execution runs on private buffers and is reentrant.

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "trustemg/error.hpp"

namespace trustemg::fft {

using cplx = std::complex<double>;

namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <typename T>
using fftw_buffer = std::unique_ptr<T, FftwFree>;

template <typename T>
fftw_buffer<T> allocate(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)));
    if (p == nullptr) {
        throw std::bad_alloc();
    }
    return fftw_buffer<T>(p);
}

class Plan {
public:
    explicit Plan(fftw_plan plan) : plan_(plan) {}
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_;
};

} // namespace detail

/// Unnormalized complex DFT (forward: e^{-j...}); the inverse is scaled by 1/n.
inline std::vector<cplx> dft(std::span<const cplx> input, bool inverse = false) {
    const std::size_t n = input.size();
    if (n == 0) {
        return {};
    }
    auto in = detail::allocate<fftw_complex>(n);
    auto out = detail::allocate<fftw_complex>(n);
    fftw_plan raw = nullptr;
    {
        std::lock_guard lock(detail::planner_mutex());
        raw = fftw_plan_dft_1d(static_cast<int>(n), in.get(), out.get(),
                               inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    require(raw != nullptr, Errc::InvalidArgument, "FFTW planning failed");
    detail::Plan plan(raw);
    for (std::size_t i = 0; i < n; ++i) {
        in.get()[i][0] = input[i].real();
        in.get()[i][1] = input[i].imag();
    }
    plan.execute();
    std::vector<cplx> result(n);
    const double scale = inverse ? 1.0 / static_cast<double>(n) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        result[i] = cplx(out.get()[i][0] * scale, out.get()[i][1] * scale);
    }
    return result;
}

/// Real-input DFT zero-padded to `padded_len` (>= input size). Returns bins 0..padded_len/2.
inline std::vector<cplx> rfft(std::span<const double> input, std::size_t padded_len = 0) {
    const std::size_t n = padded_len == 0 ? input.size() : padded_len;
    require(n >= input.size(), Errc::InvalidArgument, "padded length shorter than input");
    if (n == 0) {
        return {};
    }
    auto in = detail::allocate<double>(n);
    auto out = detail::allocate<fftw_complex>(n / 2 + 1);
    fftw_plan raw = nullptr;
    {
        std::lock_guard lock(detail::planner_mutex());
        raw = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
    }
    require(raw != nullptr, Errc::InvalidArgument, "FFTW planning failed");
    detail::Plan plan(raw);
    std::fill_n(in.get(), n, 0.0);
    std::copy(input.begin(), input.end(), in.get());
    plan.execute();
    std::vector<cplx> result(n / 2 + 1);
    for (std::size_t i = 0; i < result.size(); ++i) {
        result[i] = cplx(out.get()[i][0], out.get()[i][1]);
    }
    return result;
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) {
        p <<= 1U;
    }
    return p;
}

} // namespace trustemg::fft
