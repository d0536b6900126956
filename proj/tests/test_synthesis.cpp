#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "trustemg/synthesis.hpp"

using namespace trustemg;
using namespace trustemg::synth;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("clean surrogate") {
    auto a = gen_clean(7, 1000.0, 2.0);
    CHECK(a.size() == 2000);
    CHECK(max_abs(a.samples()) == 1.0);
    CHECK(a == gen_clean(7, 1000.0, 2.0));
    CHECK_FALSE(a == gen_clean(8, 1000.0, 2.0));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double f = fmax(gen_clean(seed, 1000.0, 2.0));
        CHECK(f >= 20.0);
        CHECK(f <= 500.0);
    }
    CHECK_THROWS_AS(gen_clean(1, 1000.0, 1.5), Error);
    Envelope off;
    off.gain = 0.0;
    try {
        gen_clean(1, 1000.0, 2.0, off);
        FAIL("expected AllZero");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::AllZero);
    }
}

TEST_CASE("pli grids") {
    auto train = pli_grid(Split::Train);
    auto test = pli_grid(Split::Test);
    REQUIRE(train.size() == 16);
    CHECK(train.front() == 58.4);
    CHECK_THAT(train.back(), WithinAbs(61.4, 1e-12));
    REQUIRE(test.size() == 8);
    CHECK(test.front() == 58.8);
    CHECK_THAT(test.back(), WithinAbs(61.425, 1e-12));
    // the grids share only 58.8 Hz
    std::size_t shared = 0;
    for (double a : train) {
        for (double b : test) {
            shared += std::abs(a - b) < 1e-9 ? 1 : 0;
        }
    }
    CHECK(shared == 1);

    std::set<double> seen;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const double f = draw_pli(s, Split::Train).frequency;
        CHECK(std::find(train.begin(), train.end(), f) != train.end());
        seen.insert(f);
    }
    CHECK(seen.size() == train.size());
}

TEST_CASE("contaminant generators") {
    for (auto c : kAllContaminants) {
        auto x = gen_contaminant(c, 11, 1000.0, 2.0, Split::Test);
        CHECK(x.size() == 2000);
        CHECK(power(x) > 0.0);
        CHECK(x == gen_contaminant(c, 11, 1000.0, 2.0, Split::Test));
        CHECK_THROWS_AS(gen_contaminant(c, 11, 1000.0, 1.0, Split::Test), Error);
    }
    for (std::uint64_t s = 0; s < 10; ++s) {
        CHECK(fmax(gen_contaminant(Contaminant::BW, s, 1000.0, 2.0, Split::Train)) < 10.0);
        CHECK(fmax(gen_contaminant(Contaminant::MOA, s, 1000.0, 2.0, Split::Train)) < 20.0);
        const double pli = fmax(gen_contaminant(Contaminant::PLI, s, 1000.0, 2.0, Split::Test));
        CHECK(pli >= 58.0);
        CHECK(pli <= 62.0);
    }
    auto w = gaussian_noise(5, 1'000'000);
    CHECK_THAT(mean(w), WithinAbs(0.0, 0.005));

    auto ecg = gen_ecg(3, 1000.0, 4.0);
    REQUIRE(ecg.r_peaks.size() >= 3);
    for (std::size_t i = 1; i < ecg.r_peaks.size(); ++i) {
        const double rr = static_cast<double>(ecg.r_peaks[i] - ecg.r_peaks[i - 1]) / 1000.0;
        CHECK(rr >= 0.6 * 0.95 - 1e-3);
        CHECK(rr <= 1.0 * 1.05 + 1e-3);
    }
}

TEST_CASE("recorded motion artifact is smoothed with 51 points") {
    std::vector<double> spike(200, 0.0);
    spike[100] = 51.0;
    auto y = prepare_recorded(SampleBuffer(spike, 1000.0), Contaminant::MOA);
    CHECK_THAT(y[100], WithinAbs(1.0, 1e-12));
    CHECK_THAT(y[75], WithinAbs(1.0, 1e-12));
    CHECK(y[74] == 0.0);
    auto pli = SampleBuffer(spike, 1000.0);
    CHECK(prepare_recorded(pli, Contaminant::PLI) == pli);
}

TEST_CASE("mixing contract") {
    const auto clean = gen_clean(1, 1000.0, 2.0);
    const double p = power(clean);
    SECTION("single component energies") {
        for (double snr : {0.0, -20.0, 7.5}) {
            MixSpec spec{snr, parse_label_set("WGN"), 9, Split::Test};
            auto seg = mix(clean, spec);
            CHECK_THAT(power(seg.noise), WithinRel(p * std::pow(10.0, -snr / 10.0), 1e-12));
        }
    }
    SECTION("compound components share energy") {
        MixSpec spec{-6.0, parse_label_set("BW,PLI,WGN"), 4, Split::Test};
        auto seg = mix(clean, spec);
        REQUIRE(seg.components.size() == 3);
        const double e0 = power(seg.components[0]);
        for (const auto& c : seg.components) {
            CHECK_THAT(power(c), WithinRel(e0, 1e-9));
        }
        CHECK_THAT(e0 / p, WithinRel(std::pow(10.0, 0.6) / 3.0, 0.05));
        CHECK_THAT(measured_snr_db(clean, seg.noise), WithinAbs(-6.0, 0.01));
        for (std::size_t i = 0; i < clean.size(); ++i) {
            REQUIRE(seg.noisy[i] == clean[i] + seg.noise[i]);
        }
    }
    SECTION("validation") {
        CHECK_THROWS_AS(mix(clean, MixSpec{NAN, parse_label_set("WGN"), 1, Split::Test}), Error);
        CHECK_THROWS_AS(mix(clean, MixSpec{0.0, parse_label_set("WGN,BW"), 1, Split::Test}), Error);
        CHECK_THROWS_AS(mix(clean, MixSpec{0.0, LabelSet{}, 1, Split::Test}), Error);
        try {
            mix_components(clean, {zeros_like(clean)}, MixSpec{0.0, parse_label_set("MOA"), 1, Split::Test});
            FAIL("expected ZeroNoise");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::ZeroNoise);
        }
    }
    SECTION("determinism") {
        MixSpec spec{-14.0, parse_label_set("BW,PLI,ECG,MOA,WGN"), 77, Split::Train};
        auto a = mix(clean, spec);
        auto b = mix(clean, spec);
        CHECK(a.noisy == b.noisy);
        CHECK_THAT(measured_snr_db(clean, a.noise), WithinAbs(-14.0, 0.01));
    }
}
