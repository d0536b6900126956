#pragma once

// Experiment runner: JSON config -> synthesized segments -> denoisers -> metrics,
// per-segment CSV and aggregate JSON written in manifest order.
//
// Config:
// {
//   "dataset": {"count": 10, "fs": 1000, "duration": 2.0, "snr_db": [2, -2, -6],
//               "contaminants": ["PLI", "BW+ECG+WGN"], "seed": 7, "split": "test"},
//   "methods": ["iir", "ts-iir", "emd", "ceemdan", "vmd",
//               {"name": "trustemg", "mode": "rm", "weights": "w.bin"}],
//   "metrics": {"window": 200},
//   "output_dir": "out",
//   "threads": 0,            // 0: $TRUSTEMG_THREADS, else 1
//   "write_signals": true
// }
// Segment i uses SNR snr_db[i % S] and contaminant set contaminants[(i / S) % C].

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trustemg/error.hpp"
#include "trustemg/iir.hpp"
#include "trustemg/labels.hpp"
#include "trustemg/metrics.hpp"
#include "trustemg/mode_rules.hpp"
#include "trustemg/nn/serialize.hpp"
#include "trustemg/nn/train.hpp"
#include "trustemg/signal_io.hpp"
#include "trustemg/synthesis.hpp"
#include "trustemg/template_subtraction.hpp"

namespace trustemg::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr const char* kThreadsEnv = "TRUSTEMG_THREADS";

struct DatasetSpec {
    std::size_t count = 10;
    double fs = 1000.0;
    double duration = 2.0;
    std::vector<double> snr_db{2.0, -2.0, -6.0, -10.0, -14.0};
    std::vector<std::string> contaminants{"BW", "PLI", "ECG", "MOA", "WGN"};
    std::uint64_t seed = 0;
    synth::Split split = synth::Split::Test;
};

struct MethodSpec {
    std::string name; ///< iir, ts-iir, emd, ceemdan, vmd, trustemg
    std::optional<nn::Bottleneck> mode;
    std::string weights;

    /// Column value in reports.
    [[nodiscard]] std::string label() const {
        if (name == "trustemg" && mode) {
            return name + "-" + nn::to_string(*mode);
        }
        return name;
    }
};

struct ExperimentConfig {
    DatasetSpec dataset;
    std::vector<MethodSpec> methods;
    std::size_t feature_window = metrics::kFeatureWindow;
    std::string output_dir = "out";
    std::size_t threads = 0;
    bool write_signals = true;
};

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> names{"iir", "ts-iir", "emd", "ceemdan", "vmd", "trustemg"};
    return names;
}

namespace detail {

inline double snr_value(const json& v) {
    if (v.is_number()) {
        return v.get<double>();
    }
    if (v.is_string()) {
        // JSON has no NaN literal; accept "nan"/"inf" spelled as strings so validate() can reject them
        const auto s = v.get<std::string>();
        char* end = nullptr;
        const double d = std::strtod(s.c_str(), &end);
        if (end != s.c_str() && *end == '\0') {
            return d;
        }
    }
    if (v.is_null()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    throw Error(Errc::InvalidConfig, "SNR entries must be numbers, got " + v.dump());
}

template <typename V>
V field(const json& j, const char* key, V fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
        throw Error(Errc::InvalidConfig, std::string("field '") + key + "' has the wrong type");
    }
}

} // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    require(j.is_object(), Errc::InvalidConfig, "config must be a JSON object");
    ExperimentConfig c;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        require(d.is_object(), Errc::InvalidConfig, "dataset must be an object");
        c.dataset.count = detail::field(d, "count", c.dataset.count);
        c.dataset.fs = detail::field(d, "fs", c.dataset.fs);
        c.dataset.duration = detail::field(d, "duration", c.dataset.duration);
        c.dataset.seed = detail::field(d, "seed", c.dataset.seed);
        if (d.contains("snr_db")) {
            require(d.at("snr_db").is_array(), Errc::InvalidConfig, "snr_db must be an array");
            c.dataset.snr_db.clear();
            for (const auto& v : d.at("snr_db")) {
                c.dataset.snr_db.push_back(detail::snr_value(v));
            }
        }
        c.dataset.contaminants = detail::field(d, "contaminants", c.dataset.contaminants);
        c.dataset.split = synth::parse_split(detail::field(d, "split", std::string("test")));
    }
    if (j.contains("methods")) {
        require(j.at("methods").is_array(), Errc::InvalidConfig, "methods must be an array");
        for (const auto& m : j.at("methods")) {
            MethodSpec s;
            if (m.is_string()) {
                s.name = m.get<std::string>();
            } else if (m.is_object()) {
                s.name = detail::field(m, "name", std::string());
                if (m.contains("mode")) {
                    s.mode = nn::parse_bottleneck(detail::field(m, "mode", std::string()));
                }
                s.weights = detail::field(m, "weights", std::string());
            } else {
                throw Error(Errc::InvalidConfig, "method entries are names or objects");
            }
            c.methods.push_back(std::move(s));
        }
    }
    if (j.contains("metrics")) {
        c.feature_window = detail::field(j.at("metrics"), "window", c.feature_window);
    }
    c.output_dir = detail::field(j, "output_dir", c.output_dir);
    c.threads = detail::field(j, "threads", c.threads);
    c.write_signals = detail::field(j, "write_signals", c.write_signals);
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::Io, "cannot open config " + path.string());
    try {
        return parse_config(json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
    }
}

/// Every problem with the config; empty when it can run.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
    std::vector<std::string> out;
    const auto& d = c.dataset;
    if (c.methods.empty()) {
        out.emplace_back("methods: list is empty");
    }
    if (d.count == 0) {
        out.emplace_back("dataset.count: must be positive");
    }
    if (d.fs != 1000.0) {
        out.emplace_back("dataset.fs: only 1000 Hz is supported");
    }
    if (!(d.duration >= 2.0)) {
        out.emplace_back("dataset.duration: must be at least 2 s");
    }
    if (d.snr_db.empty()) {
        out.emplace_back("dataset.snr_db: list is empty");
    }
    for (std::size_t i = 0; i < d.snr_db.size(); ++i) {
        if (!std::isfinite(d.snr_db[i])) {
            out.push_back("dataset.snr_db[" + std::to_string(i) + "]: not a finite number");
        }
    }
    if (d.contaminants.empty()) {
        out.emplace_back("dataset.contaminants: list is empty");
    }
    for (const auto& s : d.contaminants) {
        try {
            const auto set = parse_label_set(s);
            if (set.size() != 1 && set.size() != 3 && set.size() != 5) {
                out.push_back("dataset.contaminants: '" + s + "' must name 1, 3 or 5 kinds");
            }
        } catch (const Error& e) {
            out.push_back("dataset.contaminants: " + std::string(e.what()));
        }
    }
    const auto n = synth::sample_count(d.fs, d.duration);
    if (c.feature_window == 0 || c.feature_window > n) {
        out.emplace_back("metrics.window: must be between 1 and the segment length");
    }
    for (const auto& m : c.methods) {
        const auto& known = known_methods();
        if (std::find(known.begin(), known.end(), m.name) == known.end()) {
            out.push_back("methods: unknown method '" + m.name + "'");
            continue;
        }
        if (m.name == "trustemg") {
            if (m.weights.empty()) {
                out.emplace_back("methods: trustemg needs a weights file");
            } else if (!fs::exists(m.weights)) {
                out.push_back("methods: weights file '" + m.weights + "' does not exist");
            }
        }
    }
    return out;
}

inline std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv(kThreadsEnv); env != nullptr) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) {
            return static_cast<std::size_t>(v);
        }
    }
    return 1;
}

// ---------------------------------------------------------------------------
// dataset

struct SegmentSpec {
    std::size_t index = 0;
    std::uint64_t clean_seed = 0;
    synth::MixSpec mix;
};

inline std::vector<SegmentSpec> manifest(const DatasetSpec& d) {
    require(!d.snr_db.empty() && !d.contaminants.empty(), Errc::InvalidConfig, "dataset has no SNRs or sets");
    std::vector<LabelSet> sets;
    for (const auto& s : d.contaminants) {
        sets.push_back(parse_label_set(s));
    }
    std::vector<SegmentSpec> out(d.count);
    for (std::size_t i = 0; i < d.count; ++i) {
        auto& s = out[i];
        s.index = i;
        s.clean_seed = synth::derive_seed(d.seed, 2 * i);
        s.mix.snr_db = d.snr_db[i % d.snr_db.size()];
        s.mix.components = sets[(i / d.snr_db.size()) % sets.size()];
        s.mix.seed = synth::derive_seed(d.seed, 2 * i + 1);
        s.mix.split = d.split;
    }
    return out;
}

inline synth::ContaminatedSegment make_segment(const DatasetSpec& d, const SegmentSpec& s) {
    return synth::mix(synth::gen_clean(s.clean_seed, d.fs, d.duration), s.mix);
}

/// Non-overlapping length-d windows of (noisy, clean) for training.
inline nn::Dataset training_windows(const DatasetSpec& d, std::size_t window) {
    nn::Dataset out;
    for (const auto& s : manifest(d)) {
        const auto seg = make_segment(d, s);
        for (std::size_t start = 0; start + window <= seg.clean.size(); start += window) {
            const auto noisy = seg.noisy.samples().subspan(start, window);
            const auto clean = seg.clean.samples().subspan(start, window);
            out.inputs.emplace_back(noisy.begin(), noisy.end());
            out.targets.emplace_back(clean.begin(), clean.end());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// methods

/// A ready-to-call denoiser; NN weights are loaded once and shared read-only.
class Denoiser {
public:
    explicit Denoiser(MethodSpec spec) : spec_(std::move(spec)) {
        if (spec_.name == "trustemg") {
            model_ = std::make_shared<nn::ModelParams<float>>(nn::load_params<float>(spec_.weights));
            if (spec_.mode && *spec_.mode != model_->config.bottleneck) {
                throw Error(Errc::InvalidConfig, "weights '" + spec_.weights + "' were trained with bottleneck " +
                                                     nn::to_string(model_->config.bottleneck));
            }
            spec_.mode = model_->config.bottleneck;
        } else {
            const auto& known = known_methods();
            require(std::find(known.begin(), known.end(), spec_.name) != known.end(), Errc::InvalidConfig,
                    "unknown method '" + spec_.name + "'");
        }
    }

    [[nodiscard]] const MethodSpec& spec() const { return spec_; }

    [[nodiscard]] SampleBuffer operator()(const SampleBuffer& noisy, const LabelSet& labels) const {
        const auto& n = spec_.name;
        if (n == "iir") {
            return iir::iir_denoise(noisy, labels);
        }
        if (n == "ts-iir") {
            return ts::ts_iir_denoise(noisy, labels).output;
        }
        if (n == "trustemg") {
            return {nn::denoise(*model_, noisy.samples()), noisy.fs()};
        }
        return rules::decomposition_denoise(noisy, labels, decomp::parse_method(n)).output;
    }

private:
    MethodSpec spec_;
    std::shared_ptr<const nn::ModelParams<float>> model_;
};

// ---------------------------------------------------------------------------
// reports

struct SegmentRow {
    std::size_t segment = 0;
    std::string method;
    double snr_db = 0.0;
    std::string contaminants;
    metrics::MetricReport metrics;
};

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"snr_in", "snr_out", "snr_imp", "rmse", "prd", "rmse_arv", "rmse_mf"};
    return names;
}

inline double metric_value(const metrics::MetricReport& r, const std::string& name) {
    if (name == "snr_in") return r.snr_in;
    if (name == "snr_out") return r.snr_out;
    if (name == "snr_imp") return r.snr_imp;
    if (name == "rmse") return r.rmse;
    if (name == "prd") return r.prd;
    if (name == "rmse_arv") return r.rmse_arv;
    if (name == "rmse_mf") return r.rmse_mf;
    throw Error(Errc::InvalidArgument, "unknown metric " + name);
}

inline std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_header() {
    std::string h = "segment,method,snr_db,contaminants";
    for (const auto& m : metric_names()) {
        h += "," + m;
    }
    return h;
}

inline std::string csv_line(const SegmentRow& r) {
    std::string s = std::to_string(r.segment) + "," + r.method + "," + format_number(r.snr_db) + "," + r.contaminants;
    for (const auto& m : metric_names()) {
        s += "," + format_number(metric_value(r.metrics, m));
    }
    return s;
}

/// Groups with mean and sample std per method x SNR x contaminant set, in config order.
inline json aggregate(const std::vector<SegmentRow>& rows, const std::vector<std::string>& methods,
                      const std::vector<double>& snrs, const std::vector<std::string>& sets) {
    json groups = json::array();
    for (const auto& method : methods) {
        for (double snr : snrs) {
            for (const auto& set : sets) {
                std::map<std::string, std::vector<double>> values;
                std::size_t count = 0;
                for (const auto& r : rows) {
                    if (r.method == method && r.snr_db == snr && r.contaminants == set) {
                        ++count;
                        for (const auto& m : metric_names()) {
                            values[m].push_back(metric_value(r.metrics, m));
                        }
                    }
                }
                if (count == 0) {
                    continue;
                }
                json g = {{"method", method}, {"snr_db", snr}, {"contaminants", set}, {"count", count}};
                json ms = json::object();
                for (const auto& m : metric_names()) {
                    const auto s = metrics::summarize(values[m]);
                    ms[m] = {{"mean", s.mean}, {"std", s.stddev}, {"n", s.count}};
                }
                g["metrics"] = std::move(ms);
                groups.push_back(std::move(g));
            }
        }
    }
    return groups;
}

struct RunResult {
    std::vector<SegmentRow> rows;
    json aggregate;
    std::vector<std::string> errors; ///< per-segment failures; their rows are absent
    fs::path csv_path;
    fs::path json_path;

    [[nodiscard]] bool ok() const { return errors.empty(); }
};

namespace detail {

struct SegmentOutcome {
    std::vector<SegmentRow> rows;
    std::vector<SampleBuffer> enhanced;
    std::string error;
};

inline SegmentOutcome process(const ExperimentConfig& cfg, const std::vector<Denoiser>& methods,
                              const SegmentSpec& spec) {
    SegmentOutcome out;
    try {
        const auto seg = make_segment(cfg.dataset, spec);
        for (const auto& m : methods) {
            auto enhanced = m(seg.noisy, spec.mix.components);
            SegmentRow row;
            row.segment = spec.index;
            row.method = m.spec().label();
            row.snr_db = spec.mix.snr_db;
            row.contaminants = spec.mix.components.key();
            row.metrics = metrics::evaluate(seg.clean, seg.noisy, enhanced, cfg.feature_window);
            out.rows.push_back(std::move(row));
            out.enhanced.push_back(std::move(enhanced));
        }
    } catch (const std::exception& e) {
        out.rows.clear();
        out.enhanced.clear();
        out.error = "segment " + std::to_string(spec.index) + ": " + e.what();
    }
    return out;
}

inline std::string segment_file(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seg_%05zu.f32", index);
    return buf;
}

} // namespace detail

/// Runs the experiment. Work is spread over threads; one writer emits results in
/// manifest order, so the outputs do not depend on the thread count.
inline RunResult run(const ExperimentConfig& cfg, std::optional<std::size_t> threads = std::nullopt) {
    const auto problems = validate(cfg);
    if (!problems.empty()) {
        std::string msg = "invalid config:";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw Error(Errc::InvalidConfig, msg);
    }
    std::vector<Denoiser> methods;
    for (const auto& m : cfg.methods) {
        methods.emplace_back(m);
    }
    const auto specs = manifest(cfg.dataset);
    const std::size_t workers = std::min(resolve_threads(threads.value_or(cfg.threads)), specs.size());

    RunResult res;
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    res.csv_path = dir / "segments.csv";
    res.json_path = dir / "aggregate.json";
    std::ofstream csv(res.csv_path, std::ios::binary);
    require(csv.good(), Errc::Io, "cannot write " + res.csv_path.string());
    csv << csv_header() << '\n';

    std::vector<std::optional<detail::SegmentOutcome>> slots(specs.size());
    std::mutex mu;
    std::condition_variable ready;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
            auto outcome = detail::process(cfg, methods, specs[i]);
            {
                std::lock_guard lock(mu);
                slots[i] = std::move(outcome);
            }
            ready.notify_all();
        }
    };
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back(worker);
    }

    for (std::size_t i = 0; i < specs.size(); ++i) {
        detail::SegmentOutcome outcome;
        {
            std::unique_lock lock(mu);
            ready.wait(lock, [&] { return slots[i].has_value(); });
            outcome = std::move(*slots[i]);
            slots[i].reset();
        }
        if (!outcome.error.empty()) {
            res.errors.push_back(outcome.error);
            continue;
        }
        for (std::size_t m = 0; m < outcome.rows.size(); ++m) {
            csv << csv_line(outcome.rows[m]) << '\n';
            if (cfg.write_signals) {
                io::write_signal(dir / "signals" / outcome.rows[m].method / detail::segment_file(i), outcome.enhanced[m]);
            }
            res.rows.push_back(std::move(outcome.rows[m]));
        }
        csv.flush();
    }
    pool.clear();

    std::vector<std::string> labels;
    for (const auto& m : methods) {
        labels.push_back(m.spec().label());
    }
    std::vector<std::string> sets;
    for (const auto& s : cfg.dataset.contaminants) {
        sets.push_back(parse_label_set(s).key());
    }
    res.aggregate = {{"segments", specs.size()}, {"groups", aggregate(res.rows, labels, cfg.dataset.snr_db, sets)}};
    if (!res.errors.empty()) {
        res.aggregate["errors"] = res.errors;
    }
    std::ofstream js(res.json_path, std::ios::binary);
    require(js.good(), Errc::Io, "cannot write " + res.json_path.string());
    js << res.aggregate.dump(2) << '\n';
    return res;
}

// ---------------------------------------------------------------------------
// datasets on disk

inline json to_json(const DatasetSpec& d) {
    return {{"count", d.count},   {"fs", d.fs},
            {"duration", d.duration}, {"snr_db", d.snr_db},
            {"contaminants", d.contaminants}, {"seed", d.seed},
            {"split", std::string(synth::to_string(d.split))}};
}

/// Writes clean, noisy and noise files for every segment plus manifest.json.
inline json write_dataset(const DatasetSpec& d, const fs::path& dir) {
    fs::create_directories(dir);
    json segs = json::array();
    for (const auto& s : manifest(d)) {
        const auto seg = make_segment(d, s);
        const std::string stem = detail::segment_file(s.index).substr(0, 9);
        io::write_signal(dir / (stem + "_clean.f32"), seg.clean);
        io::write_signal(dir / (stem + "_noisy.f32"), seg.noisy);
        io::write_signal(dir / (stem + "_noise.f32"), seg.noise);
        segs.push_back({{"index", s.index},
                        {"snr_db", s.mix.snr_db},
                        {"contaminants", s.mix.components.key()},
                        {"clean_seed", s.clean_seed},
                        {"mix_seed", s.mix.seed},
                        {"measured_snr_db", synth::measured_snr_db(seg.clean, seg.noise)},
                        {"clean", stem + "_clean.f32"},
                        {"noisy", stem + "_noisy.f32"},
                        {"noise", stem + "_noise.f32"}});
    }
    json m = {{"dataset", to_json(d)}, {"segments", std::move(segs)}};
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    require(out.good(), Errc::Io, "cannot write " + (dir / "manifest.json").string());
    out << m.dump(2) << '\n';
    return m;
}

inline json read_manifest(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::Io, "cannot open manifest " + path.string());
    try {
        return json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Io, "manifest is not valid JSON: " + std::string(e.what()));
    }
}

/// Scores enhanced files (seg_NNNNN.f32 in `enhanced_dir`) against a written
/// dataset and writes segments.csv / aggregate.json to `out_dir`.
inline RunResult evaluate_files(const fs::path& manifest_path, const fs::path& enhanced_dir,
                                const std::string& method, const fs::path& out_dir,
                                std::size_t window = metrics::kFeatureWindow) {
    const json m = read_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    RunResult res;
    fs::create_directories(out_dir);
    res.csv_path = out_dir / "segments.csv";
    res.json_path = out_dir / "aggregate.json";
    std::ofstream csv(res.csv_path, std::ios::binary);
    require(csv.good(), Errc::Io, "cannot write " + res.csv_path.string());
    csv << csv_header() << '\n';
    std::vector<double> snrs;
    std::vector<std::string> sets;
    for (const auto& s : m.at("segments")) {
        const auto index = s.at("index").get<std::size_t>();
        try {
            const auto clean = io::read_signal(base / s.at("clean").get<std::string>());
            const auto noisy = io::read_signal(base / s.at("noisy").get<std::string>());
            const auto enhanced = io::read_signal(enhanced_dir / detail::segment_file(index));
            SegmentRow row{index, method, s.at("snr_db").get<double>(), s.at("contaminants").get<std::string>(),
                           metrics::evaluate(clean, noisy, enhanced, window)};
            if (std::find(snrs.begin(), snrs.end(), row.snr_db) == snrs.end()) {
                snrs.push_back(row.snr_db);
            }
            if (std::find(sets.begin(), sets.end(), row.contaminants) == sets.end()) {
                sets.push_back(row.contaminants);
            }
            csv << csv_line(row) << '\n';
            res.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            res.errors.push_back("segment " + std::to_string(index) + ": " + e.what());
        }
    }
    res.aggregate = {{"segments", m.at("segments").size()}, {"groups", aggregate(res.rows, {method}, snrs, sets)}};
    if (!res.errors.empty()) {
        res.aggregate["errors"] = res.errors;
    }
    std::ofstream js(res.json_path, std::ios::binary);
    require(js.good(), Errc::Io, "cannot write " + res.json_path.string());
    js << res.aggregate.dump(2) << '\n';
    return res;
}

// ---------------------------------------------------------------------------
// cross-check

inline std::vector<SegmentRow> read_csv_rows(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::Io, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    require(line == csv_header(), Errc::Io, "unexpected CSV header in " + path.string());
    std::vector<SegmentRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        require(cells.size() == 4 + metric_names().size(), Errc::Io, "bad CSV row: " + line);
        SegmentRow r;
        r.segment = std::stoul(cells[0]);
        r.method = cells[1];
        r.snr_db = std::strtod(cells[2].c_str(), nullptr);
        r.contaminants = cells[3];
        double* fields[] = {&r.metrics.snr_in, &r.metrics.snr_out, &r.metrics.snr_imp, &r.metrics.rmse,
                            &r.metrics.prd,    &r.metrics.rmse_arv, &r.metrics.rmse_mf};
        for (std::size_t k = 0; k < metric_names().size(); ++k) {
            *fields[k] = std::strtod(cells[4 + k].c_str(), nullptr);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Recomputes every aggregate entry from the CSV; returns the mismatches.
inline std::vector<std::string> crosscheck(const fs::path& csv_path, const fs::path& json_path, double rel_tol = 1e-12) {
    const auto rows = read_csv_rows(csv_path);
    std::ifstream in(json_path);
    require(in.good(), Errc::Io, "cannot open " + json_path.string());
    const json agg = json::parse(in);
    std::vector<std::string> out;
    for (const auto& g : agg.at("groups")) {
        const auto method = g.at("method").get<std::string>();
        const auto snr = g.at("snr_db").get<double>();
        const auto set = g.at("contaminants").get<std::string>();
        const std::string key = method + " @ " + format_number(snr) + " dB / " + set;
        std::map<std::string, std::vector<double>> values;
        std::size_t count = 0;
        for (const auto& r : rows) {
            if (r.method == method && r.snr_db == snr && r.contaminants == set) {
                ++count;
                for (const auto& m : metric_names()) {
                    values[m].push_back(metric_value(r.metrics, m));
                }
            }
        }
        if (count != g.at("count").get<std::size_t>()) {
            out.push_back(key + ": count " + std::to_string(count) + " in CSV vs " + g.at("count").dump());
            continue;
        }
        for (const auto& m : metric_names()) {
            const auto s = metrics::summarize(values[m]);
            const auto& entry = g.at("metrics").at(m);
            auto close = [&](double a, const json& b) {
                if (b.is_null()) {
                    return std::isnan(a);
                }
                const double bv = b.get<double>();
                return std::abs(a - bv) <= rel_tol * std::max(1.0, std::abs(bv));
            };
            if (!close(s.mean, entry.at("mean")) || !close(s.stddev, entry.at("std")) ||
                s.count != entry.at("n").get<std::size_t>()) {
                out.push_back(key + ": " + m + " differs (CSV mean " + format_number(s.mean) + ", JSON " +
                              entry.at("mean").dump() + ")");
            }
        }
    }
    return out;
}

} // namespace trustemg::harness
