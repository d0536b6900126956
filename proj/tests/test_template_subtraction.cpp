#include <catch_amalgamated.hpp>

#include <numbers>

#include "trustemg/iir.hpp"
#include "trustemg/metrics.hpp"
#include "trustemg/synthesis.hpp"
#include "trustemg/template_subtraction.hpp"

using namespace trustemg;
using namespace trustemg::ts;

TEST_CASE("detector on silence and noise") {
    CHECK(detect_ecg(SampleBuffer(std::vector<double>(2000, 0.0), 1000.0)).empty());
    for (std::uint64_t s = 0; s < 5; ++s) {
        SampleBuffer w(synth::gaussian_noise(s, 2000), 1000.0);
        for (const auto& r : detect_ecg(w)) {
            CHECK(r.length() > 140);
            CHECK(r.end <= 2000);
        }
    }
}

TEST_CASE("detector finds ECG beats") {
    std::size_t beats = 0;
    std::size_t hit = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto clean = synth::gen_clean(s, 1000.0, 2.0);
        const auto ecg = synth::gen_ecg(100 + s, 1000.0, 2.0);
        const auto seg = synth::mix_components(clean, {ecg.signal},
                                               {-6.0, parse_label_set("ECG"), s, synth::Split::Test});
        const auto regions = detect_ecg(seg.noisy);
        for (const auto& r : regions) {
            CHECK(r.length() > 140);
        }
        for (std::size_t peak : ecg.r_peaks) {
            ++beats;
            // a beat spans roughly 100 ms before its R peak to the end of the T wave
            const std::size_t lo = peak >= 100 ? peak - 100 : 0;
            const std::size_t hi = peak + 400;
            for (const auto& r : regions) {
                if (r.start < hi && r.end > lo) {
                    ++hit;
                    break;
                }
            }
        }
    }
    REQUIRE(beats > 0);
    CHECK(static_cast<double>(hit) >= 0.8 * static_cast<double>(beats));
}

TEST_CASE("template subtraction compositions") {
    const auto clean = synth::gen_clean(2, 1000.0, 2.0);
    const auto seg = synth::mix(clean, {-2.0, parse_label_set("ECG"), 5, synth::Split::Test});
    const auto hp40 = iir::highpass4(40.0, 1000.0);
    const auto hp50 = iir::highpass4(50.0, 1000.0);
    CHECK(ts_denoise(seg.noisy, {}) == iir::apply_zero_phase(hp40, seg.noisy));
    CHECK(ts_denoise(seg.noisy, {{0, seg.noisy.size()}}) ==
          iir::apply_zero_phase(hp40, iir::apply_zero_phase(hp50, seg.noisy)));
    CHECK_THROWS_AS(ts_denoise(seg.noisy, {{10, 5000}}), Error);

    const auto out = ts_iir_denoise(seg.noisy, parse_label_set("ECG"));
    CHECK(out.output == ts_denoise(seg.noisy, out.regions));
    CHECK(metrics::snr_out(clean, out.output) - metrics::snr_in(clean, seg.noisy) > 0.0);

    CHECK(ts_iir_denoise(seg.noisy, parse_label_set("PLI")).output == iir::iir_denoise(seg.noisy, parse_label_set("PLI")));
    CHECK_THROWS_AS(ts_iir_denoise(seg.noisy, LabelSet{}), Error);

    auto all = ts_iir_denoise(seg.noisy, parse_label_set("ECG,PLI,WGN"));
    auto manual = ts_denoise(seg.noisy, detect_ecg(seg.noisy));
    manual = iir::apply_zero_phase(iir::filter_for(Contaminant::PLI, 1000.0), manual);
    manual = iir::apply_zero_phase(iir::filter_for(Contaminant::WGN, 1000.0), manual);
    CHECK(all.output == manual);
}

// Butterworth stages are not projections, so idempotence only holds for
// content well above the transition bands.
TEST_CASE("second pass leaves high-band region interiors unchanged") {
    std::vector<double> x(2000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = static_cast<double>(i) / 1000.0;
        x[i] = std::sin(2.0 * std::numbers::pi * 150.0 * t) + 0.5 * std::sin(2.0 * std::numbers::pi * 310.0 * t + 1.0);
    }
    const SampleBuffer buf(std::move(x), 1000.0);
    const std::vector<EcgRegion> regions{{300, 900}, {1200, 1700}};
    const auto once = ts_denoise(buf, regions);
    const auto twice = ts_denoise(once, regions);
    double num = 0.0;
    double den = 0.0;
    for (const auto& r : regions) {
        for (std::size_t i = r.start + 100; i < r.end - 100; ++i) {
            num += (once[i] - twice[i]) * (once[i] - twice[i]);
            den += once[i] * once[i];
        }
    }
    INFO("relative change " << std::sqrt(num / den));
    CHECK(std::sqrt(num / den) < 1e-3);
    CHECK(to_json(regions, 1000.0).size() == 2);
}
