#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "trustemg/harness.hpp"

using namespace trustemg;
using namespace trustemg::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("trustemg_harness_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_config(const fs::path& out) {
    ExperimentConfig c;
    c.dataset.count = 10;
    c.dataset.seed = 3;
    c.methods = {MethodSpec{"iir", std::nullopt, ""}};
    c.output_dir = out.string();
    return c;
}

} // namespace

TEST_CASE("validate reports each problem") {
    ExperimentConfig good = small_config(scratch("unused"));
    CHECK(validate(good).empty());

    auto c = good;
    c.methods.clear();
    CHECK(validate(c).size() == 1);

    c = good;
    c.dataset.snr_db = {2.0, std::nan("")};
    const auto nan_diag = validate(c);
    REQUIRE(nan_diag.size() == 1);
    CHECK(nan_diag[0].find("snr_db[1]") != std::string::npos);

    c = good;
    c.methods.push_back(MethodSpec{"trustemg", nn::Bottleneck::RM, "/nonexistent/weights.bin"});
    c.methods.push_back(MethodSpec{"trustemg", nn::Bottleneck::DM, ""});
    c.methods.push_back(MethodSpec{"wiener", std::nullopt, ""});
    CHECK(validate(c).size() == 3);

    c = good;
    c.dataset.contaminants = {"BW+PLI", "XYZ"};
    c.dataset.fs = 500.0;
    CHECK(validate(c).size() == 3);

    CHECK_THROWS_AS(run(c), Error);
}

TEST_CASE("config parsing") {
    const auto j = json::parse(R"({
        "dataset": {"count": 4, "snr_db": [0, "nan"], "contaminants": ["BW+PLI+ECG"], "seed": 9, "split": "train"},
        "methods": ["iir", {"name": "trustemg", "mode": "dm", "weights": "w.bin"}],
        "metrics": {"window": 250},
        "threads": 2
    })");
    const auto c = parse_config(j);
    CHECK(c.dataset.count == 4);
    CHECK(std::isnan(c.dataset.snr_db[1]));
    CHECK(c.dataset.split == synth::Split::Train);
    REQUIRE(c.methods.size() == 2);
    CHECK(c.methods[1].label() == "trustemg-dm");
    CHECK(c.feature_window == 250);
    CHECK(c.threads == 2);
    CHECK_THROWS_AS(parse_config(json::parse(R"({"methods": [3]})")), Error);
    CHECK_THROWS_AS(parse_config(json::parse(R"({"dataset": {"count": "many"}})")), Error);
}

TEST_CASE("manifest cycles SNRs then sets") {
    DatasetSpec d;
    d.count = 12;
    d.snr_db = {0.0, -5.0};
    d.contaminants = {"BW", "PLI", "ECG"};
    const auto m = manifest(d);
    CHECK(m[0].mix.snr_db == 0.0);
    CHECK(m[1].mix.snr_db == -5.0);
    CHECK(m[2].mix.components.key() == "PLI");
    CHECK(m[6].mix.components.key() == "BW");
    CHECK(m[3].clean_seed != m[4].clean_seed);
    CHECK(manifest(d)[7].mix.seed == m[7].mix.seed);
}

TEST_CASE("run writes one row and one file per segment") {
    const auto dir = scratch("run");
    const auto cfg = small_config(dir);
    const auto res = run(cfg, 1);
    REQUIRE(res.ok());
    CHECK(res.rows.size() == 10);

    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "signals" / "iir")) {
        files += e.path().extension() == ".f32" ? 1 : 0;
    }
    CHECK(files == 10);

    std::ifstream csv(res.csv_path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(csv, line)) {
        ++lines;
    }
    CHECK(lines == 11);

    const auto agg = json::parse(slurp(res.json_path));
    CHECK(agg.at("segments") == 10);
    std::size_t counted = 0;
    for (const auto& g : agg.at("groups")) {
        counted += g.at("count").get<std::size_t>();
        CHECK(g.at("metrics").contains("rmse_mf"));
    }
    CHECK(counted == 10);
    CHECK(crosscheck(res.csv_path, res.json_path).empty());
    fs::remove_all(dir);
}

TEST_CASE("thread count does not change the outputs") {
    const auto a = scratch("serial");
    const auto b = scratch("parallel");
    auto ca = small_config(a);
    auto cb = small_config(b);
    ca.methods.push_back(MethodSpec{"ts-iir", std::nullopt, ""});
    cb.methods = ca.methods;
    run(ca, 1);
    run(cb, 4);
    CHECK(slurp(a / "segments.csv") == slurp(b / "segments.csv"));
    CHECK(slurp(a / "aggregate.json") == slurp(b / "aggregate.json"));
    CHECK(slurp(a / "signals" / "ts-iir" / "seg_00007.f32") == slurp(b / "signals" / "ts-iir" / "seg_00007.f32"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("crosscheck catches an edited aggregate") {
    const auto dir = scratch("tamper");
    const auto res = run(small_config(dir), 1);
    auto agg = json::parse(slurp(res.json_path));
    auto& mean = agg["groups"][0]["metrics"]["rmse"]["mean"];
    mean = mean.get<double>() * 1.001;
    std::ofstream(res.json_path) << agg.dump(2);
    CHECK(crosscheck(res.csv_path, res.json_path).size() == 1);
    fs::remove_all(dir);
}

TEST_CASE("file-based evaluation matches the in-process run") {
    const auto data = scratch("data");
    const auto out = scratch("files");
    const auto direct = scratch("direct");
    auto cfg = small_config(direct);
    cfg.dataset.count = 5;
    write_dataset(cfg.dataset, data);
    const auto res = run(cfg, 1);
    const auto files = evaluate_files(data / "manifest.json", direct / "signals" / "iir", "iir", out);
    REQUIRE(files.ok());
    REQUIRE(files.rows.size() == res.rows.size());
    for (std::size_t i = 0; i < files.rows.size(); ++i) {
        // enhanced files are float32, so the metrics agree to single precision
        CHECK_THAT(files.rows[i].metrics.rmse, Catch::Matchers::WithinRel(res.rows[i].metrics.rmse, 1e-5));
        CHECK(files.rows[i].contaminants == res.rows[i].contaminants);
    }
    CHECK(crosscheck(files.csv_path, files.json_path).empty());

    fs::remove(direct / "signals" / "iir" / "seg_00002.f32");
    const auto partial = evaluate_files(data / "manifest.json", direct / "signals" / "iir", "iir", out);
    CHECK(partial.errors.size() == 1);
    CHECK(partial.rows.size() == 4);
    for (const auto& p : {data, out, direct}) {
        fs::remove_all(p);
    }
}

TEST_CASE("number formatting round-trips") {
    CHECK(format_number(std::nan("")) == "nan");
    const double v = 0.1 + 0.2;
    CHECK(std::strtod(format_number(v).c_str(), nullptr) == v);
}
