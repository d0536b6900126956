#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "trustemg/metrics.hpp"
#include "trustemg/synthesis.hpp"

using namespace trustemg;
using namespace trustemg::metrics;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SampleBuffer tone(double f, double amp = 1.0, std::size_t n = 2000) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / 1000.0);
    }
    return {std::move(x), 1000.0};
}

template <typename Fn>
Errc code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::InvalidArgument;
}

} // namespace

TEST_CASE("snr") {
    const auto x = tone(50.0);
    CHECK(code_of([&] { snr_out(x, x); }) == Errc::PerfectMatch);
    CHECK(code_of([&] { snr_out(zeros_like(x), x); }) == Errc::ZeroReference);
    CHECK(snr_out(x, zeros_like(x)) == 0.0);
    const auto seg = synth::mix(synth::gen_clean(2, 1000.0, 2.0), {-6.0, parse_label_set("WGN"), 1, synth::Split::Test});
    CHECK_THAT(snr_in(seg.clean, seg.noisy), WithinAbs(-6.0, 0.01));
}

TEST_CASE("rmse and prd") {
    const auto x = tone(50.0);
    CHECK(rmse(x.samples(), x.samples()) == 0.0);
    std::vector<double> shifted(x.vec());
    for (double& v : shifted) {
        v += 0.25;
    }
    CHECK_THAT(rmse(x.samples(), shifted), WithinAbs(0.25, 1e-12));
    CHECK_THAT(rmse(std::vector<double>(1000, 0.0), tone(7.0, 1.0, 1000).samples()), WithinAbs(std::sqrt(0.5), 1e-3));

    CHECK(prd(x.samples(), zeros_like(x).samples()) == 100.0);
    CHECK(prd(x.samples(), x.samples()) == 0.0);
    CHECK(code_of([&] { prd(zeros_like(x).samples(), x.samples()); }) == Errc::ZeroReference);

    const auto seg = synth::mix(synth::gen_clean(4, 1000.0, 2.0), {-2.0, parse_label_set("BW,PLI,WGN"), 3, synth::Split::Test});
    const double p = prd(seg.clean.samples(), seg.noisy.samples());
    const double r = rmse(seg.clean.samples(), seg.noisy.samples());
    const double norm = std::sqrt(power(seg.clean));
    CHECK_THAT(p, WithinRel(100.0 * r * std::sqrt(2000.0) / norm, 1e-9));
    CHECK_THAT(p, WithinRel(100.0 * std::pow(10.0, 2.0 / 20.0), 1e-3));
}

TEST_CASE("scale invariance") {
    const auto seg = synth::mix(synth::gen_clean(5, 1000.0, 2.0), {-10.0, parse_label_set("PLI"), 3, synth::Split::Test});
    const auto c = scale(seg.clean, -3.5);
    const auto n = scale(seg.noisy, -3.5);
    CHECK_THAT(prd(c.samples(), n.samples()), WithinRel(prd(seg.clean.samples(), seg.noisy.samples()), 1e-12));
    CHECK_THAT(snr_in(c, n), WithinAbs(snr_in(seg.clean, seg.noisy), 1e-10));
}

TEST_CASE("arv") {
    const auto c = SampleBuffer(std::vector<double>(2000, -0.3), 1000.0);
    const auto a = arv_vector(c);
    REQUIRE(a.values.size() == 10);
    for (double v : a.values) {
        CHECK_THAT(v, WithinAbs(0.3, 1e-12));
    }
    for (double v : arv_vector(tone(50.0)).values) {
        CHECK_THAT(v, WithinAbs(2.0 / std::numbers::pi, 0.01));
    }
}

TEST_CASE("mean frequency") {
    for (double v : mf_vector(tone(100.0)).values) {
        CHECK_THAT(v, WithinAbs(100.0, 1.0));
    }
    for (double v : mf_vector(add(tone(100.0), tone(300.0))).values) {
        CHECK_THAT(v, WithinAbs(200.0, 2.0));
    }
    std::vector<double> half(2000, 0.0);
    const auto t = tone(100.0);
    for (std::size_t i = 0; i < 1000; ++i) {
        half[i] = t[i];
    }
    const auto mf = mf_vector(SampleBuffer(half, 1000.0));
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(mf.mask[i] == (i < 5));
    }
    CHECK(mf.degenerate == 0);

    // active in the reference but silent in the estimate
    const auto silent = mf_vector(zeros_like(t), t);
    CHECK(silent.degenerate == 10);
}

TEST_CASE("feature rmse") {
    FeatureVector a{{1, 2, 3}, 200, {}, 0};
    FeatureVector b{{1.5, 2.5, 3.5}, 200, {}, 0};
    CHECK(feature_rmse(a, a) == 0.0);
    CHECK_THAT(feature_rmse(a, b), WithinAbs(0.5, 1e-12));
    FeatureVector m1{{1, 2, 3}, 200, {true, false, false}, 0};
    FeatureVector m2{{1, 2, 3}, 200, {false, true, false}, 0};
    CHECK(code_of([&] { feature_rmse(m1, m2); }) == Errc::NoComparableFrames);
}

TEST_CASE("segment report") {
    const auto seg = synth::mix(synth::gen_clean(9, 1000.0, 2.0), {-6.0, parse_label_set("ECG"), 2, synth::Split::Test});
    const auto identity = evaluate(seg.clean, seg.noisy, seg.noisy);
    CHECK(identity.snr_imp == 0.0);
    CHECK(identity.undefined.empty());
    const auto oracle = evaluate(seg.clean, seg.noisy, seg.clean);
    CHECK(oracle.rmse == 0.0);
    CHECK(oracle.prd == 0.0);
    CHECK(oracle.rmse_arv == 0.0);
    CHECK(oracle.rmse_mf == 0.0);
    CHECK_FALSE(oracle.defined("snr_out"));
    CHECK_FALSE(oracle.defined("snr_imp"));
}

TEST_CASE("summaries use the sample standard deviation") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto s = summarize(v);
    CHECK(s.mean == 2.5);
    CHECK_THAT(s.stddev, WithinAbs(std::sqrt(5.0 / 3.0), 1e-12));
    CHECK(s.count == 4);
    CHECK(summarize(std::vector<double>{7.0}).stddev == 0.0);
    CHECK(summarize(std::vector<double>{1.0, NAN, 3.0}).count == 2);
}
