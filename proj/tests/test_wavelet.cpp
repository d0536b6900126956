#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "trustemg/wavelet.hpp"

using namespace trustemg;
using namespace trustemg::wavelet;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<double> probe() {
    std::vector<double> x(202);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(i);
        x[i] = std::sin(0.05 * n) + 0.3 * std::cos(0.9 * n) + 0.01 * n;
    }
    return x;
}

} // namespace

TEST_CASE("sym8 filter bank is orthonormal") {
    double lo = 0.0;
    double hi = 0.0;
    double cross = 0.0;
    for (std::size_t k = 0; k < 16; ++k) {
        lo += kSym8Lo[k] * kSym8Lo[k];
        hi += kSym8Hi[k] * kSym8Hi[k];
        cross += kSym8Lo[k] * kSym8Hi[k];
    }
    CHECK_THAT(lo, WithinAbs(1.0, 1e-12));
    CHECK_THAT(hi, WithinAbs(1.0, 1e-12));
    CHECK_THAT(cross, WithinAbs(0.0, 1e-12));
    double sum = 0.0;
    for (double v : kSym8Lo) {
        sum += v;
    }
    CHECK_THAT(sum, WithinAbs(std::sqrt(2.0), 1e-12));
}

// Reference coefficients: PyWavelets wavedec(x, "sym8", mode="periodization", level=3).
TEST_CASE("three-level decomposition matches the reference coefficients") {
    const auto dec = wavedec(probe(), 3);
    REQUIRE(dec.approximation.size() == 26);
    REQUIRE(dec.details.size() == 3);
    CHECK(dec.details[2].size() == 26);
    CHECK(dec.details[1].size() == 51);
    CHECK(dec.details[0].size() == 101);

    auto check = [](const std::vector<double>& got, std::array<double, 4> want) {
        CHECK_THAT(got[0], WithinAbs(want[0], 1e-12));
        CHECK_THAT(got[1], WithinAbs(want[1], 1e-12));
        CHECK_THAT(got[2], WithinAbs(want[2], 1e-12));
        CHECK_THAT(got.back(), WithinAbs(want[3], 1e-12));
    };
    check(dec.approximation, {0.9600266272845432, 2.258008056969624, 3.1124210847980347, 2.0555105727924454});
    check(dec.details[2], {1.1089053911408249, 0.07975063532688431, -0.017352020823824792, 0.29026469800171545});
    check(dec.details[1], {0.4530099274326478, -0.13857538475190054, 0.27519514795107636, -0.012494925444475714});
    check(dec.details[0], {0.5372418357140648, -0.1515421113093898, 0.056502944771501966, 0.023457006756950637});
}

TEST_CASE("perfect reconstruction") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (std::size_t n : {64u, 202u, 2000u, 1999u, 37u}) {
        std::vector<double> x(n);
        for (double& v : x) {
            v = g(rng);
        }
        const auto y = waverec(wavedec(x, 5 > n / 8 ? 2 : 5));
        REQUIRE(y.size() == n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK_THAT(y[i], WithinAbs(x[i], 1e-10));
        }
    }
}

TEST_CASE("soft threshold") {
    std::vector<double> c{-3.0, -0.5, 0.0, 0.2, 1.0, 4.5};
    soft_threshold(c, 1.0);
    const std::vector<double> want{-2.0, 0.0, 0.0, 0.0, 0.0, 3.5};
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c[i] == want[i]);
    }
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        const double v = g(rng);
        const double out = soft_threshold(v, 1.3);
        CHECK_THAT(std::abs(out), WithinAbs(std::max(0.0, std::abs(v) - 1.3), 1e-15));
        CHECK((out == 0.0 || std::signbit(out) == std::signbit(v)));
    }
}

TEST_CASE("noise estimate and denoising") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    std::vector<double> w(4096);
    for (double& v : w) {
        v = g(rng);
    }
    CHECK_THAT(mad_sigma(w), WithinAbs(1.0, 0.05));
    const double t = mad_sigma(w) * std::sqrt(2.0 * std::log(4096.0));
    const auto y = denoise(w, 5, t);
    double ein = 0.0;
    double eout = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        ein += w[i] * w[i];
        eout += y[i] * y[i];
    }
    CHECK(eout < 0.2 * ein);
    const std::vector<double> zero(512, 0.0);
    for (double v : denoise(zero, 5, 1.0)) {
        CHECK(v == 0.0);
    }
}
