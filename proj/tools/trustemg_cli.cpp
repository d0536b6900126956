// trustemg command-line front end.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trustemg/decomposition.hpp"
#include "trustemg/harness.hpp"
#include "trustemg/iir.hpp"
#include "trustemg/metrics.hpp"
#include "trustemg/mode_rules.hpp"
#include "trustemg/nn/gradcheck.hpp"
#include "trustemg/nn/serialize.hpp"
#include "trustemg/nn/train.hpp"
#include "trustemg/signal_io.hpp"
#include "trustemg/synthesis.hpp"
#include "trustemg/template_subtraction.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace trustemg;

namespace {

struct Common {
    std::uint64_t seed = 0;
    bool json_out = false;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* app, Common& c) {
    c.seed_opt = app->add_option("--seed", c.seed, "random seed");
    app->add_flag("--json", c.json_out, "print a machine-readable summary");
}

void emit(const Common& c, const json& j, const std::string& text) {
    if (c.json_out) {
        std::cout << j.dump(2) << '\n';
    } else if (!text.empty()) {
        std::cout << text << '\n';
    }
}

void write_json_file(const fs::path& path, const json& j) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    require(out.good(), Errc::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}


// ---------------------------------------------------------------------------

struct SynthArgs {
    Common common;
    harness::DatasetSpec dataset;
    std::string out = "data";
    std::string split = "test";
};

int cmd_synth(SynthArgs& a) {
    a.dataset.seed = a.common.seed;
    a.dataset.split = synth::parse_split(a.split);
    harness::ExperimentConfig probe;
    probe.dataset = a.dataset;
    probe.methods.push_back({"iir", {}, {}});
    const auto problems = harness::validate(probe);
    if (!problems.empty()) {
        for (const auto& p : problems) {
            std::cerr << "error: " << p << '\n';
        }
        return 2;
    }
    const auto m = harness::write_dataset(a.dataset, a.out);
    emit(a.common, {{"manifest", (fs::path(a.out) / "manifest.json").string()}, {"segments", m.at("segments").size()}},
         "wrote " + std::to_string(m.at("segments").size()) + " segments to " + a.out);
    return 0;
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
    Common common;
    std::string input;
    std::string method = "emd";
    std::string out = "modes";
    std::size_t k = 10;
    double alpha = 1000.0;
    std::size_t trials = 20;
};

int cmd_decompose(DecomposeArgs& a) {
    const auto x = io::read_signal(a.input);
    const auto method = decomp::parse_method(a.method);
    rules::DecompositionDenoiseOptions opt;
    opt.ceemdan.seed = a.common.seed;
    opt.ceemdan.trials = a.trials;
    opt.vmd.k_modes = a.k;
    opt.vmd.alpha = a.alpha;
    opt.vmd.seed = a.common.seed;
    const auto set = rules::decompose(x, method, opt);
    fs::create_directories(a.out);
    json modes = json::array();
    for (std::size_t i = 0; i < set.imfs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "mode_%02zu.f32", i);
        io::write_signal(fs::path(a.out) / name, set.imfs[i]);
        json m = {{"index", i}, {"file", name}, {"fmax_hz", fmax(set.imfs[i])}};
        if (set.vmd) {
            m["center_hz"] = set.vmd->center_hz[i];
        }
        modes.push_back(std::move(m));
    }
    io::write_signal(fs::path(a.out) / "residue.f32", set.residue);
    json params;
    switch (method) {
    case decomp::Method::EMD: params = {{"max_imfs", opt.emd.max_imfs}, {"sd_threshold", opt.emd.sd_threshold}}; break;
    case decomp::Method::CEEMDAN:
        params = {{"trials", opt.ceemdan.trials}, {"noise_scale", opt.ceemdan.noise_scale}, {"seed", opt.ceemdan.seed}};
        break;
    case decomp::Method::VMD:
        params = {{"k", opt.vmd.k_modes}, {"alpha", opt.vmd.alpha}, {"tau", opt.vmd.tau}, {"tol", opt.vmd.tol}};
        break;
    }
    json manifest = {{"method", decomp::to_string(method)}, {"input", a.input}, {"parameters", params},
                     {"modes", modes}, {"residue", "residue.f32"}};
    if (set.vmd) {
        manifest["iterations"] = set.vmd->iterations;
        manifest["converged"] = set.vmd->converged;
    }
    write_json_file(fs::path(a.out) / "manifest.json", manifest);
    emit(a.common, manifest, std::to_string(set.imfs.size()) + " modes written to " + a.out);
    return 0;
}

// ---------------------------------------------------------------------------

struct DenoiseArgs {
    Common common;
    std::string input;
    std::string manifest;
    std::string labels;
    std::string method = "iir";
    std::string weights;
    std::string out;
    std::string dump_regions;
    std::string dump_decisions;
    std::string dump_filters;
};

/// One signal through the chosen method, with optional inspection dumps.
SampleBuffer denoise_one(const DenoiseArgs& a, const SampleBuffer& noisy, const LabelSet& labels, json& report,
                         const harness::Denoiser* nn_model) {
    if (a.method == "iir") {
        if (!a.dump_filters.empty()) {
            json filters = json::array();
            for (Contaminant c : labels.members()) {
                json f = iir::to_json(iir::filter_for(c, noisy.fs()));
                f["label"] = std::string(to_string(c));
                filters.push_back(std::move(f));
            }
            write_json_file(a.dump_filters, filters);
        }
        return iir::iir_denoise(noisy, labels);
    }
    if (a.method == "ts-iir") {
        auto r = ts::ts_iir_denoise(noisy, labels);
        report["ecg_regions"] = r.regions.size();
        if (!a.dump_regions.empty()) {
            write_json_file(a.dump_regions, ts::to_json(r.regions, noisy.fs()));
        }
        return std::move(r.output);
    }
    if (a.method == "trustemg") {
        return (*nn_model)(noisy, labels);
    }
    rules::DecompositionDenoiseOptions opt;
    opt.ceemdan.seed = a.common.seed;
    opt.vmd.seed = a.common.seed;
    auto r = rules::decomposition_denoise(noisy, labels, decomp::parse_method(a.method), opt);
    report["modes"] = r.modes.imfs.size();
    if (!a.dump_decisions.empty()) {
        write_json_file(a.dump_decisions, rules::to_json(r.decisions));
    }
    return std::move(r.output);
}

int cmd_denoise(DenoiseArgs& a) {
    std::unique_ptr<harness::Denoiser> model;
    if (a.method == "trustemg") {
        if (a.weights.empty()) {
            std::cerr << "error: --method trustemg needs --weights\n";
            return 2;
        }
        model = std::make_unique<harness::Denoiser>(harness::MethodSpec{"trustemg", {}, a.weights});
    } else {
        const auto& known = harness::known_methods();
        if (std::find(known.begin(), known.end(), a.method) == known.end()) {
            std::cerr << "error: unknown method '" << a.method << "'\n";
            return 2;
        }
    }
    if (!a.manifest.empty()) {
        const auto m = harness::read_manifest(a.manifest);
        const fs::path base = fs::path(a.manifest).parent_path();
        const fs::path out = a.out.empty() ? fs::path("enhanced") : fs::path(a.out);
        std::size_t n = 0;
        for (const auto& s : m.at("segments")) {
            const auto noisy = io::read_signal(base / s.at("noisy").get<std::string>());
            const auto labels = parse_label_set(s.at("contaminants").get<std::string>());
            json unused;
            char name[32];
            std::snprintf(name, sizeof name, "seg_%05zu.f32", s.at("index").get<std::size_t>());
            io::write_signal(out / name, denoise_one(a, noisy, labels, unused, model.get()));
            ++n;
        }
        emit(a.common, {{"method", a.method}, {"segments", n}, {"out", out.string()}},
             "denoised " + std::to_string(n) + " segments into " + out.string());
        return 0;
    }
    if (a.input.empty() || a.out.empty()) {
        std::cerr << "error: give --input and --out, or --manifest\n";
        return 2;
    }
    if (a.labels.empty() && a.method != "trustemg") {
        std::cerr << "error: --labels is required for " << a.method << '\n';
        return 2;
    }
    const auto noisy = io::read_signal(a.input);
    const auto labels = a.labels.empty() ? LabelSet{} : parse_label_set(a.labels);
    json report = {{"method", a.method}, {"input", a.input}, {"labels", labels.key()}};
    const auto out = denoise_one(a, noisy, labels, report, model.get());
    io::write_signal(a.out, out);
    report["out"] = a.out;
    emit(a.common, report, "wrote " + a.out);
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    Common common;
    std::string clean;
    std::string noisy;
    std::string enhanced;
    std::string manifest;
    std::string enhanced_dir;
    std::string method = "enhanced";
    std::string out = "eval";
    std::size_t window = metrics::kFeatureWindow;
};

json report_json(const metrics::MetricReport& r) {
    json j = {{"snr_in", r.snr_in}, {"snr_out", r.snr_out}, {"snr_imp", r.snr_imp}, {"rmse", r.rmse},
              {"prd", r.prd},       {"rmse_arv", r.rmse_arv}, {"rmse_mf", r.rmse_mf}};
    if (!r.undefined.empty()) {
        j["undefined"] = r.undefined;
    }
    return j;
}

int cmd_eval(EvalArgs& a) {
    if (!a.manifest.empty()) {
        const auto res = harness::evaluate_files(a.manifest, a.enhanced_dir, a.method, a.out, a.window);
        for (const auto& e : res.errors) {
            std::cerr << "error: " << e << '\n';
        }
        emit(a.common, res.aggregate,
             "scored " + std::to_string(res.rows.size()) + " segments; wrote " + res.csv_path.string() + " and " +
                 res.json_path.string());
        return res.ok() ? 0 : 1;
    }
    if (a.clean.empty() || a.noisy.empty() || a.enhanced.empty()) {
        std::cerr << "error: give --clean, --noisy and --enhanced, or --manifest with --enhanced-dir\n";
        return 2;
    }
    const auto r = metrics::evaluate(io::read_signal(a.clean), io::read_signal(a.noisy), io::read_signal(a.enhanced),
                                     a.window);
    char text[256];
    std::snprintf(text, sizeof text, "SNR_in %.3f dB  SNR_out %.3f dB  SNR_imp %.3f dB  RMSE %.5f  PRD %.2f%%",
                  r.snr_in, r.snr_out, r.snr_imp, r.rmse, r.prd);
    emit(a.common, report_json(r), text);
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::string config;
    std::string out = "tiny.bin";
    std::size_t segments = 8;
    std::size_t input_len = 64;
    std::size_t base = 8;
    std::size_t heads = 2;
    std::string mode = "rm";
    double dropout = 0.1;
    std::size_t epochs = 500;
    std::size_t batch = 8;
    std::size_t patience = 15;
};

int cmd_train(TrainArgs& a) {
    harness::DatasetSpec data;
    data.count = a.segments;
    data.snr_db = {-6.0};
    data.contaminants = {"WGN"};
    data.split = synth::Split::Train;
    nn::ModelConfig cfg = nn::ModelConfig::tiny(a.input_len, a.base, a.heads, nn::parse_bottleneck(a.mode));
    cfg.dropout = a.dropout;
    nn::TrainOptions opt;
    opt.max_epochs = a.epochs;
    opt.batch_size = a.batch;
    opt.patience = a.patience;
    std::size_t max_windows = a.segments;
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        require(in.good(), Errc::Io, "cannot open " + a.config);
        const json j = json::parse(in);
        data = harness::parse_config(j).dataset;
        if (j.contains("model")) {
            cfg = nn::model_config_from_json(j.at("model"));
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            opt.max_epochs = t.value("epochs", opt.max_epochs);
            opt.batch_size = t.value("batch_size", opt.batch_size);
            opt.patience = t.value("patience", opt.patience);
            max_windows = t.value("max_windows", std::size_t{0});
        } else {
            max_windows = 0;
        }
    }
    if (a.config.empty() || a.common.seed_opt->count() > 0) {
        data.seed = a.common.seed;
    }
    cfg.seed = a.common.seed;
    opt.seed = a.common.seed;
    cfg.validate();

    auto all = harness::training_windows(data, cfg.input_len);
    nn::Dataset ds;
    if (max_windows == 0) {
        ds = std::move(all);
    } else {
        // one window from the middle of each segment, where the contraction is active
        const std::size_t per_segment = all.size() / data.count;
        for (std::size_t s = 0; s < data.count && ds.size() < max_windows; ++s) {
            ds.inputs.push_back(all.inputs[s * per_segment + per_segment / 2]);
            ds.targets.push_back(all.targets[s * per_segment + per_segment / 2]);
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = nn::train(cfg, ds, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto params = res.params;
    nn::save_params(a.out, params);
    json j = {{"weights", a.out},          {"config", nn::to_json(cfg)},
              {"windows", ds.size()},      {"epochs_run", res.epochs_run},
              {"best_epoch", res.best_epoch}, {"stopped_early", res.stopped_early},
              {"first_loss", res.train_loss.front()}, {"final_loss", res.train_loss.back()},
              {"seconds", secs},           {"train_loss", res.train_loss}};
    char text[256];
    std::snprintf(text, sizeof text, "%zu epochs (best %zu): L1 %.4f -> %.4f; saved %s", res.epochs_run,
                  res.best_epoch, res.train_loss.front(), res.train_loss.back(), a.out.c_str());
    emit(a.common, j, text);
    return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
    Common common;
    std::string mode = "all";
    std::size_t input_len = 32;
    std::size_t base = 2;
    std::size_t heads = 2;
    double tolerance = 1e-4;
};

int cmd_gradcheck(GradcheckArgs& a) {
    std::vector<nn::Bottleneck> modes;
    if (a.mode == "all") {
        modes = {nn::Bottleneck::RM, nn::Bottleneck::DM, nn::Bottleneck::Identity};
    } else {
        modes = {nn::parse_bottleneck(a.mode)};
    }
    json out = json::array();
    bool pass = true;
    std::string text;
    for (auto b : modes) {
        auto cfg = nn::ModelConfig::tiny(a.input_len, a.base, a.heads, b);
        cfg.seed = a.common.seed;
        nn::GradcheckOptions opt;
        opt.seed = a.common.seed;
        opt.tolerance = a.tolerance;
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = nn::gradcheck(cfg, opt);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        pass = pass && r.pass;
        json tensors = json::array();
        for (const auto& e : r.tensors) {
            tensors.push_back({{"name", e.name}, {"checked", e.checked}, {"max_rel", e.max_rel},
                               {"kink_retried", e.kink_retried}, {"kink_unresolved", e.kink_unresolved}});
        }
        out.push_back({{"bottleneck", nn::to_string(b)}, {"checked", r.checked}, {"max_rel", r.max_rel},
                       {"kink_retried", r.kink_retried}, {"kink_unresolved", r.kink_unresolved},
                       {"pass", r.pass}, {"seconds", secs}, {"tensors", tensors}});
        char line[160];
        std::snprintf(line, sizeof line, "%-8s %6zu elements  max rel %.2e  %s\n", nn::to_string(b).c_str(),
                      r.checked, r.max_rel, r.pass ? "ok" : "FAIL");
        text += line;
    }
    if (!text.empty()) {
        text.pop_back();
    }
    emit(a.common, out, text);
    return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct RunArgs {
    Common common;
    std::string config;
    std::size_t threads = 0;
    std::string output_dir;
};

int cmd_run(RunArgs& a) {
    auto cfg = harness::load_config(a.config);
    if (!a.output_dir.empty()) {
        cfg.output_dir = a.output_dir;
    }
    if (a.common.seed_opt->count() > 0) {
        cfg.dataset.seed = a.common.seed;
    }
    const auto problems = harness::validate(cfg);
    if (!problems.empty()) {
        for (const auto& p : problems) {
            std::cerr << "error: " << p << '\n';
        }
        return 2;
    }
    const auto res = harness::run(cfg, a.threads == 0 ? std::nullopt : std::optional<std::size_t>(a.threads));
    for (const auto& e : res.errors) {
        std::cerr << "error: " << e << '\n';
    }
    emit(a.common, res.aggregate,
         std::to_string(res.rows.size()) + " rows; wrote " + res.csv_path.string() + " and " + res.json_path.string());
    return res.ok() ? 0 : 1;
}

struct CrosscheckArgs {
    Common common;
    std::string dir;
};

int cmd_crosscheck(CrosscheckArgs& a) {
    const auto issues = harness::crosscheck(fs::path(a.dir) / "segments.csv", fs::path(a.dir) / "aggregate.json");
    std::string text = issues.empty() ? "aggregate matches the per-segment CSV" : "";
    for (const auto& i : issues) {
        text += (text.empty() ? "" : "\n") + i;
    }
    emit(a.common, {{"ok", issues.empty()}, {"mismatches", issues}}, text);
    return issues.empty() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sEMG contaminant removal toolkit"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "synthesize contaminated segments");
    add_common(synth_cmd, synth_args.common);
    synth_cmd->add_option("--count", synth_args.dataset.count, "number of segments");
    synth_cmd->add_option("--fs", synth_args.dataset.fs, "sampling rate (Hz)");
    synth_cmd->add_option("--duration", synth_args.dataset.duration, "segment length (s)");
    synth_cmd->add_option("--snr", synth_args.dataset.snr_db, "SNR list (dB)")->delimiter(',')->allow_extra_args(false);
    synth_cmd->add_option("--contaminants", synth_args.dataset.contaminants, "contaminant sets, e.g. PLI,BW+ECG+WGN")
        ->delimiter(',');
    synth_cmd->add_option("--split", synth_args.split, "train or test");
    synth_cmd->add_option("--out", synth_args.out, "output directory");

    DecomposeArgs dec_args;
    auto* dec_cmd = app.add_subcommand("decompose", "split a signal into modes");
    add_common(dec_cmd, dec_args.common);
    dec_cmd->add_option("--input", dec_args.input, "signal file")->required();
    dec_cmd->add_option("--method", dec_args.method, "emd, ceemdan or vmd");
    dec_cmd->add_option("--out", dec_args.out, "output directory");
    dec_cmd->add_option("-k,--modes", dec_args.k, "VMD mode count");
    dec_cmd->add_option("--alpha", dec_args.alpha, "VMD bandwidth penalty");
    dec_cmd->add_option("--trials", dec_args.trials, "CEEMDAN ensemble size");

    DenoiseArgs den_args;
    auto* den_cmd = app.add_subcommand("denoise", "remove contaminants");
    add_common(den_cmd, den_args.common);
    den_cmd->add_option("--input", den_args.input, "noisy signal file");
    den_cmd->add_option("--manifest", den_args.manifest, "dataset manifest from synth (denoise every segment)");
    den_cmd->add_option("--labels", den_args.labels, "contaminant labels, e.g. BW+PLI");
    den_cmd->add_option("--method", den_args.method, "iir, ts-iir, emd, ceemdan, vmd or trustemg");
    den_cmd->add_option("--weights", den_args.weights, "weights file for trustemg");
    den_cmd->add_option("--out", den_args.out, "output signal file (or directory with --manifest)");
    den_cmd->add_option("--dump-regions", den_args.dump_regions, "write detected ECG regions as JSON");
    den_cmd->add_option("--dump-decisions", den_args.dump_decisions, "write the mode decision log as JSON");
    den_cmd->add_option("--dump-filters", den_args.dump_filters, "write the IIR filter designs as JSON");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score enhanced signals");
    add_common(eval_cmd, eval_args.common);
    eval_cmd->add_option("--clean", eval_args.clean, "clean reference");
    eval_cmd->add_option("--noisy", eval_args.noisy, "noisy input");
    eval_cmd->add_option("--enhanced", eval_args.enhanced, "denoised output");
    eval_cmd->add_option("--manifest", eval_args.manifest, "dataset manifest from synth");
    eval_cmd->add_option("--enhanced-dir", eval_args.enhanced_dir, "directory of seg_NNNNN.f32 outputs");
    eval_cmd->add_option("--method", eval_args.method, "method label for the report");
    eval_cmd->add_option("--out", eval_args.out, "report directory");
    eval_cmd->add_option("--window", eval_args.window, "feature window (samples)");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train-tiny", "train a small model on synthetic data");
    add_common(train_cmd, train_args.common);
    train_cmd->add_option("--config", train_args.config, "harness config with optional model/train sections");
    train_cmd->add_option("--out", train_args.out, "weights file");
    train_cmd->add_option("--segments", train_args.segments, "training segments (one window each)");
    train_cmd->add_option("--input-len", train_args.input_len, "model input length (multiple of 16)");
    train_cmd->add_option("--base", train_args.base, "base channel width");
    train_cmd->add_option("--heads", train_args.heads, "attention heads");
    train_cmd->add_option("--mode", train_args.mode, "rm, dm or identity");
    train_cmd->add_option("--dropout", train_args.dropout, "dropout rate");
    train_cmd->add_option("--epochs", train_args.epochs, "maximum epochs");
    train_cmd->add_option("--batch", train_args.batch, "batch size");
    train_cmd->add_option("--patience", train_args.patience, "early-stopping patience");

    GradcheckArgs gc_args;
    auto* gc_cmd = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
    add_common(gc_cmd, gc_args.common);
    gc_cmd->add_option("--mode", gc_args.mode, "rm, dm, identity or all");
    gc_cmd->add_option("--input-len", gc_args.input_len, "input length");
    gc_cmd->add_option("--base", gc_args.base, "base channel width");
    gc_cmd->add_option("--heads", gc_args.heads, "attention heads");
    gc_cmd->add_option("--tolerance", gc_args.tolerance, "max relative error");

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "full pipeline from a JSON config");
    add_common(run_cmd, run_args.common);
    run_cmd->add_option("--config", run_args.config, "experiment config")->required();
    run_cmd->add_option("--threads", run_args.threads, "worker threads (default: config, then $TRUSTEMG_THREADS)");
    run_cmd->add_option("--output-dir", run_args.output_dir, "override output_dir");

    CrosscheckArgs cc_args;
    auto* cc_cmd = app.add_subcommand("crosscheck", "recompute aggregates from the per-segment CSV");
    add_common(cc_cmd, cc_args.common);
    cc_cmd->add_option("--dir", cc_args.dir, "run output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) return cmd_synth(synth_args);
        if (*dec_cmd) return cmd_decompose(dec_args);
        if (*den_cmd) return cmd_denoise(den_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*train_cmd) return cmd_train(train_args);
        if (*gc_cmd) return cmd_gradcheck(gc_args);
        if (*run_cmd) return cmd_run(run_args);
        if (*cc_cmd) return cmd_crosscheck(cc_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code() == Errc::InvalidConfig || e.code() == Errc::InvalidArgument ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
