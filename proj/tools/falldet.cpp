// Command-line entry point for the full workflow: synthetic data generation,
// preprocessing, training, evaluation, ablations, robustness, latency
// benchmarking, the streaming gateway and node replay.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error. Every subcommand
// accepts --config FILE (key=value, command-line flags win) and echoes its
// fully resolved configuration next to its outputs.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "falldet/checkpoint.hpp"
#include "falldet/gateway.hpp"
#include "falldet/metrics.hpp"
#include "falldet/recordio.hpp"
#include "falldet/trainer.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using namespace falldet;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "falldet 1.0.0";

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

// Full resolved configuration (defaults plus overrides) next to the outputs.
void echo_config(const CLI::App& sub, const fs::path& target) {
    write_text(target, sub.config_to_str(true, false));
}

// "host:port" -> pair; the host part may be omitted ("7474" or ":7474").
std::pair<std::string, uint16_t> parse_endpoint(const std::string& s) {
    auto colon = s.rfind(':');
    std::string host = colon == std::string::npos ? "" : s.substr(0, colon);
    std::string port = colon == std::string::npos ? s : s.substr(colon + 1);
    if (host.empty()) host = "127.0.0.1";
    int p = 0;
    try {
        p = std::stoi(port);
    } catch (const std::exception&) {
        throw IoError("bad endpoint " + s);
    }
    if (p <= 0 || p > 65535) throw IoError("bad port in " + s);
    return {host, uint16_t(p)};
}

// Subject index encoded in the session id prefix "sNN_"; 0 when absent.
uint16_t subject_from_id(const std::string& session_id) {
    if (session_id.size() < 3 || session_id[0] != 's') return 0;
    int v = 0;
    size_t i = 1;
    for (; i < session_id.size() && session_id[i] >= '0' && session_id[i] <= '9'; ++i)
        v = v * 10 + (session_id[i] - '0');
    if (i == 1 || i >= session_id.size() || session_id[i] != '_') return 0;
    return uint16_t(v);
}

std::vector<ds::WindowRecord> windows_from_recordings(const std::string& in) {
    std::vector<std::string> dirs;
    if (fs::exists(fs::path(in) / "meta.json"))
        dirs.push_back(in);
    else
        dirs = recordio::list_recordings(in);
    if (dirs.empty()) throw IoError("no recordings under " + in);

    std::vector<ds::WindowRecord> wins;
    for (const auto& d : dirs) {
        synth::Recording rec = recordio::read_recording(d);
        ds::PipelineConfig pcfg;
        ds::AlignedStreams st = ds::preprocess(rec.vib, rec.radar, pcfg);
        auto w = ds::slice_windows(st.vib, st.radar, rec.labels, st.gamma,
                                   uint8_t(rec.scenario), subject_from_id(rec.session_id));
        wins.insert(wins.end(), w.begin(), w.end());
        std::fprintf(stderr, "%s: %zu windows\n", d.c_str(), w.size());
    }
    return wins;
}

struct LoadedModel {
    nn::FallModel model;
    ds::NormStats stats;
};

LoadedModel load_checkpoint(const std::string& path) {
    LoadedModel lm;
    ckpt::BlobMap extra = ckpt::load_model(path, lm.model);
    lm.stats = ds::stats_from_blobs(extra);
    return lm;
}

void write_report_files(const ev::MetricsReport& rep, const std::string& report_path) {
    fs::path p(report_path);
    fs::path stem = p.parent_path() / p.stem();
    write_text(p, ev::report_to_json(rep) + "\n");
    write_text(stem.string() + ".csv", ev::report_to_csv(rep));
    write_text(stem.string() + "_curves.csv", ev::curve_to_csv(rep));
}

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
    return Rng(seed).child(a + 1).child(b + 1).seed();
}

nn::AblationToggles toggles_for(const std::string& name) {
    nn::AblationToggles t;
    if (name == "full") return t;
    if (name == "early_concat") {
        t.fusion = nn::FusionMode::early_concat;
    } else if (name == "late_average") {
        t.fusion = nn::FusionMode::late_average;
    } else if (name == "no_cross_condition") {
        t.cross_condition = false;
    } else if (name == "radar_only") {
        t.modality = nn::Modality::radar_only;
    } else if (name == "vibration_only") {
        t.modality = nn::Modality::vibration_only;
    } else if (name == "no_lsk") {
        t.lsk = false;
    } else if (name == "no_temporal_mixer") {
        t.temporal_mixer = false;
    } else if (name == "no_stream_moe") {
        t.stream_moe = false;
    } else if (name == "no_reweight") {
        t.reweight = false;
    } else if (name == "no_mlb") {
        t.mlb = false;
    } else if (name == "no_fusion_moe") {
        t.fusion_moe = false;
    } else {
        throw SpecError("unknown ablation variant: " + name);
    }
    return t;
}

// ---- subcommand configs ------------------------------------------------

struct SynthArgs {
    std::string scenario = "all";
    std::string out;
    int subject = 1;
    int count = 1;
    double duration = 72.0;
    uint64_t seed = 7;
};

struct PreprocArgs {
    std::string in, out;
};

struct SplitArgs {
    double val_frac = 0.15, test_frac = 0.15;
    uint64_t split_seed = 42;
};

struct TrainArgs : SplitArgs {
    std::string data, out;
    tr::TrainConfig cfg;
    std::string modality = "both";
    std::string fusion = "full";
    std::vector<std::string> disable;
    bool no_augment = false;
};

struct EvalArgs {
    std::string checkpoint, data, report;
};

struct AblateArgs : SplitArgs {
    std::string data, out;
    tr::TrainConfig cfg;
    std::vector<std::string> variants = {"full",  "early_concat",       "late_average",
                                         "no_cross_condition", "radar_only", "vibration_only"};
    std::vector<uint64_t> seeds = {1, 2, 3};
};

struct RobustArgs {
    std::string checkpoint, data, report;
    uint64_t seed = 7;
};

struct BenchArgs {
    std::string checkpoint, report;
    int windows = 64;
    uint64_t seed = 99;
};

struct ServeArgs {
    std::string checkpoint;
    std::string listen = "127.0.0.1:7474";
    std::string log = "detections.jsonl";
    double pair_tolerance = 0.2;
    double fallback_timeout = 5.0;
};

struct ReplayArgs {
    std::string recording, target;
    std::string node = "both";
    uint16_t node_id = 0;
    bool realtime = false;
};

// ---- subcommand bodies ---------------------------------------------------

void run_synth(const SynthArgs& a, const CLI::App& sub) {
    std::vector<synth::Scenario> scens;
    if (a.scenario == "all") {
        for (int i = 0; i < synth::kScenarioCount; ++i) scens.push_back(synth::Scenario(i));
    } else if (a.scenario == "fall") {
        // convenience alias: a walking session, which scripts fall episodes
        scens.push_back(synth::Scenario::normal_walking);
    } else {
        scens.push_back(synth::parse_scenario(a.scenario));
    }
    fs::create_directories(a.out);
    for (synth::Scenario sc : scens) {
        for (int c = 0; c < a.count; ++c) {
            uint64_t s = mix_seed(a.seed, uint64_t(sc), uint64_t(c));
            auto script = synth::make_script(sc, a.subject, s, a.duration);
            auto rec = synth::generate_scenario(script, mix_seed(s, 1, 0));
            std::string dir =
                (fs::path(a.out) / (rec.session_id + "_r" + std::to_string(c))).string();
            recordio::write_recording(dir, rec);
            std::printf("%s\n", dir.c_str());
        }
    }
    echo_config(sub, fs::path(a.out) / "synth.config");
}

void run_preprocess(const PreprocArgs& a, const CLI::App& sub) {
    auto wins = windows_from_recordings(a.in);
    ds::save_windows(a.out, wins);
    std::printf("%zu windows -> %s\n", wins.size(), a.out.c_str());
    echo_config(sub, a.out + ".config");
}

void apply_toggles(tr::TrainConfig&, nn::AblationToggles& t, const std::string& modality,
                   const std::string& fusion, const std::vector<std::string>& disable) {
    if (modality == "radar_only")
        t.modality = nn::Modality::radar_only;
    else if (modality == "vibration_only")
        t.modality = nn::Modality::vibration_only;
    else if (modality != "both")
        throw SpecError("unknown modality: " + modality);
    if (fusion == "early_concat")
        t.fusion = nn::FusionMode::early_concat;
    else if (fusion == "late_average")
        t.fusion = nn::FusionMode::late_average;
    else if (fusion != "full")
        throw SpecError("unknown fusion mode: " + fusion);
    for (const auto& d : disable) {
        nn::AblationToggles one = toggles_for("no_" + d);
        t.lsk &= one.lsk;
        t.temporal_mixer &= one.temporal_mixer;
        t.stream_moe &= one.stream_moe;
        t.reweight &= one.reweight;
        t.cross_condition &= one.cross_condition;
        t.mlb &= one.mlb;
        t.fusion_moe &= one.fusion_moe;
    }
    t.validate();
}

void run_train(TrainArgs& a, const CLI::App& sub) {
    auto wins = ds::load_windows(a.data);
    double train_frac = 1.0 - a.val_frac - a.test_frac;
    auto split = ds::split_subjects(wins, train_frac, a.val_frac, a.test_frac, a.split_seed);
    auto trn = ds::filter_split(wins, split.train);
    auto val = ds::filter_split(wins, split.val);
    auto tst = ds::filter_split(wins, split.test);
    ds::NormStats stats = ds::compute_stats(trn);

    nn::FallModel model;
    apply_toggles(a.cfg, model.cfg.toggles, a.modality, a.fusion, a.disable);
    model.build(a.cfg.seed);
    a.cfg.augment = !a.no_augment;
    tr::TrainResult res = tr::train(model, trn, val, stats, a.cfg);

    fs::create_directories(a.out);
    ckpt::BlobMap extra;
    ds::stats_to_blobs(stats, extra);
    ckpt::save_model((fs::path(a.out) / "checkpoint.fmdl").string(), model, a.cfg.seed, extra);

    std::string hist = "epoch,lr,train_loss,val_loss\n";
    char line[128];
    for (const auto& h : res.history) {
        std::snprintf(line, sizeof(line), "%d,%.8g,%.8g,%.8g\n", h.epoch, h.lr, h.train_loss,
                      h.val_loss);
        hist += line;
    }
    write_text(fs::path(a.out) / "history.csv", hist);

    if (!tst.empty()) {
        ev::MetricsReport rep = tr::evaluate(model, tst, stats);
        write_report_files(rep, (fs::path(a.out) / "report.json").string());
        std::printf("test: accuracy=%.2f macro_f1=%.2f fall_recall=%.2f\n", rep.accuracy,
                    rep.macro_f1, rep.fall.recall);
    }
    std::printf("checkpoint: %s (best epoch %d, val loss %.6g)\n",
                (fs::path(a.out) / "checkpoint.fmdl").c_str(), res.best_epoch,
                res.best_val_loss);
    echo_config(sub, fs::path(a.out) / "train.config");
}

void run_eval(const EvalArgs& a, const CLI::App& sub) {
    LoadedModel lm = load_checkpoint(a.checkpoint);
    auto wins = ds::load_windows(a.data);
    ev::MetricsReport rep = tr::evaluate(lm.model, wins, lm.stats);
    write_report_files(rep, a.report);
    std::printf("%zu windows: accuracy=%.2f macro_f1=%.2f fall_recall=%.2f\n", wins.size(),
                rep.accuracy, rep.macro_f1, rep.fall.recall);
    echo_config(sub, a.report + ".config");
}

void run_ablate(AblateArgs& a, const CLI::App& sub) {
    auto wins = ds::load_windows(a.data);
    double train_frac = 1.0 - a.val_frac - a.test_frac;
    auto split = ds::split_subjects(wins, train_frac, a.val_frac, a.test_frac, a.split_seed);
    auto trn = ds::filter_split(wins, split.train);
    auto val = ds::filter_split(wins, split.val);
    auto tst = ds::filter_split(wins, split.test);

    fs::create_directories(a.out);
    json rows = json::array();
    std::string csv = "variant,accuracy,balanced_accuracy,macro_f1,fall_precision,fall_recall,auc\n";
    for (const auto& name : a.variants) {
        nn::AblationToggles t = toggles_for(name);
        tr::AblationOutcome o = tr::run_ablation(t, trn, val, tst, a.cfg, a.seeds);
        json r;
        r["variant"] = name;
        r["accuracy"] = o.accuracy;
        r["balanced_accuracy"] = o.balanced_accuracy;
        r["macro_f1"] = o.macro_f1;
        r["fall_precision"] = o.fall_precision;
        r["fall_recall"] = o.fall_recall;
        if (o.auc)
            r["auc"] = *o.auc;
        else
            r["auc"] = nullptr;
        rows.push_back(r);
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%.4f,%.4f,%.4f,%.4f,%.4f,%s\n", name.c_str(),
                      o.accuracy, o.balanced_accuracy, o.macro_f1, o.fall_precision,
                      o.fall_recall,
                      o.auc ? std::to_string(*o.auc).c_str() : "");
        csv += line;
        std::printf("%-20s macro_f1=%.2f fall_precision=%.2f fall_recall=%.2f\n", name.c_str(),
                    o.macro_f1, o.fall_precision, o.fall_recall);
    }
    write_text(fs::path(a.out) / "ablation.json", rows.dump(2) + "\n");
    write_text(fs::path(a.out) / "ablation.csv", csv);
    echo_config(sub, fs::path(a.out) / "ablate.config");
}

void run_robust(const RobustArgs& a, const CLI::App& sub) {
    LoadedModel lm = load_checkpoint(a.checkpoint);
    auto wins = ds::load_windows(a.data);
    auto rows = tr::robustness_suite(lm.model, wins, lm.stats, a.seed);
    json jrows = json::array();
    std::string csv = "condition,accuracy,balanced_accuracy,macro_f1,fall_precision,fall_recall\n";
    for (const auto& r : rows) {
        json j;
        j["condition"] = r.condition;
        j["accuracy"] = r.report.accuracy;
        j["balanced_accuracy"] = r.report.balanced_accuracy;
        j["macro_f1"] = r.report.macro_f1;
        j["fall_precision"] = r.report.fall.precision;
        j["fall_recall"] = r.report.fall.recall;
        jrows.push_back(j);
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%.4f,%.4f,%.4f,%.4f,%.4f\n", r.condition.c_str(),
                      r.report.accuracy, r.report.balanced_accuracy, r.report.macro_f1,
                      r.report.fall.precision, r.report.fall.recall);
        csv += line;
        std::printf("%-18s accuracy=%.2f macro_f1=%.2f\n", r.condition.c_str(),
                    r.report.accuracy, r.report.macro_f1);
    }
    write_text(a.report, jrows.dump(2) + "\n");
    fs::path p(a.report);
    write_text((p.parent_path() / p.stem()).string() + ".csv", csv);
    echo_config(sub, a.report + ".config");
}

void run_bench(const BenchArgs& a, const CLI::App& sub) {
    LoadedModel lm = load_checkpoint(a.checkpoint);
    double duration = std::max(72.0, 2.56 + 1.28 * a.windows);
    auto script = synth::make_script(synth::Scenario::normal_walking, 1, a.seed, duration);
    auto rec = synth::generate_scenario(script, mix_seed(a.seed, 2, 1));
    tr::LatencyReport r = tr::latency_bench(lm.model, rec, lm.stats, a.windows);
    json j;
    j["windows"] = r.windows;
    j["pre_ms_median"] = r.pre_ms_median;
    j["pre_ms_p95"] = r.pre_ms_p95;
    j["inf_ms_median"] = r.inf_ms_median;
    j["inf_ms_p95"] = r.inf_ms_p95;
    j["end_ms_median"] = r.end_ms_median;
    j["end_ms_p95"] = r.end_ms_p95;
    j["macs_per_window"] = r.macs;
    j["params"] = r.params;
    write_text(a.report, j.dump(2) + "\n");
    std::printf("median per window: preprocess %.2f ms, inference %.2f ms, end-to-end %.2f ms\n",
                r.pre_ms_median, r.inf_ms_median, r.end_ms_median);
    std::printf("params %llu, %.1f M MACs per window\n", (unsigned long long)r.params,
                double(r.macs) / 1e6);
    echo_config(sub, a.report + ".config");
}

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

void run_serve(const ServeArgs& a, const CLI::App& sub) {
    LoadedModel lm = load_checkpoint(a.checkpoint);
    auto [host, port] = parse_endpoint(a.listen);
    gw::GatewayConfig cfg;
    cfg.listen_host = host;
    cfg.port = port;
    cfg.log_path = a.log;
    cfg.pair_tolerance_s = a.pair_tolerance;
    cfg.fallback_timeout_s = a.fallback_timeout;
    gw::Gateway gate(lm.model, lm.stats, cfg);
    gate.start();
    echo_config(sub, a.log + ".config");
    std::printf("listening on %s:%u, log %s\n", host.c_str(), unsigned(gate.port()),
                a.log.c_str());
    std::fflush(stdout);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    gate.stop();
    auto c = gate.counters();
    std::printf("frames ok %llu, dropped %llu; windows paired %llu, fallback %llu\n",
                (unsigned long long)c.frames_ok, (unsigned long long)c.frames_dropped,
                (unsigned long long)c.windows_paired, (unsigned long long)c.windows_fallback);
}

void run_replay(const ReplayArgs& a, const CLI::App&) {
    auto [host, port] = parse_endpoint(a.target);
    gw::ReplayOptions opt;
    opt.realtime = a.realtime;
    opt.node_id = a.node_id;
    auto send = [&](wire::NodeType t) {
        return gw::node_replay(a.recording, host, port, t, opt);
    };
    std::size_t sent = 0;
    if (a.node == "vibration") {
        sent = send(wire::NodeType::vibration);
    } else if (a.node == "radar") {
        sent = send(wire::NodeType::radar);
    } else if (a.node == "both") {
        std::size_t sv = 0, sr = 0;
        std::exception_ptr err;
        std::thread tv([&] {
            try {
                sv = send(wire::NodeType::vibration);
            } catch (...) {
                err = std::current_exception();
            }
        });
        sr = send(wire::NodeType::radar);
        tv.join();
        if (err) std::rethrow_exception(err);
        sent = sv + sr;
    } else {
        throw SpecError("unknown node type: " + a.node);
    }
    std::printf("sent %zu frames\n", sent);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stream fall detection workbench"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SynthArgs sy;
    auto* sub_sy = app.add_subcommand("synth", "Generate synthetic recordings");
    sub_sy->set_config("--config");
    sub_sy->add_option("--scenario", sy.scenario,
                       "Scenario name, 'all', or 'fall' (alias for normal_walking)");
    sub_sy->add_option("--subject", sy.subject, "Subject index");
    sub_sy->add_option("--count", sy.count, "Sessions per scenario");
    sub_sy->add_option("--duration", sy.duration, "Session length in seconds");
    sub_sy->add_option("--seed", sy.seed, "Generator seed");
    sub_sy->add_option("--out", sy.out, "Output directory")->required();

    PreprocArgs pp;
    auto* sub_pp = app.add_subcommand("preprocess", "Recordings to a window dataset");
    sub_pp->set_config("--config");
    sub_pp->add_option("--in", pp.in, "Recording directory or a root of recordings")
        ->required();
    sub_pp->add_option("--out", pp.out, "Output window file")->required();

    TrainArgs ta;
    auto* sub_tr = app.add_subcommand("train", "Train the detector");
    sub_tr->set_config("--config");
    sub_tr->add_option("--data", ta.data, "Window dataset file")->required();
    sub_tr->add_option("--out", ta.out, "Output directory")->required();
    sub_tr->add_option("--epochs", ta.cfg.epochs, "Training epochs");
    sub_tr->add_option("--batch", ta.cfg.batch_size, "Batch size");
    sub_tr->add_option("--lr", ta.cfg.lr, "Peak learning rate");
    sub_tr->add_option("--weight-decay", ta.cfg.weight_decay, "Decoupled weight decay");
    sub_tr->add_option("--seed", ta.cfg.seed, "Training seed");
    sub_tr->add_option("--windows-per-epoch", ta.cfg.max_windows_per_epoch,
                       "Class-balanced subsample per epoch (0 = full sweep)");
    sub_tr->add_option("--workers", ta.cfg.workers, "Data preparation threads");
    sub_tr->add_flag("--no-augment", ta.no_augment, "Disable training augmentation");
    sub_tr->add_option("--val-frac", ta.val_frac, "Validation subject fraction");
    sub_tr->add_option("--test-frac", ta.test_frac, "Test subject fraction");
    sub_tr->add_option("--split-seed", ta.split_seed, "Subject split seed");
    sub_tr->add_option("--modality", ta.modality, "both|radar_only|vibration_only");
    sub_tr->add_option("--fusion", ta.fusion, "full|early_concat|late_average");
    sub_tr->add_option("--disable", ta.disable,
                       "Components to disable (lsk, temporal_mixer, stream_moe, reweight, "
                       "cross_condition, mlb, fusion_moe)");

    EvalArgs ea;
    auto* sub_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    sub_ev->set_config("--config");
    sub_ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
    sub_ev->add_option("--data", ea.data, "Window dataset file")->required();
    sub_ev->add_option("--report", ea.report, "Report JSON path")->required();

    AblateArgs aa;
    auto* sub_ab = app.add_subcommand("ablate", "Train and compare model variants");
    sub_ab->set_config("--config");
    sub_ab->add_option("--data", aa.data, "Window dataset file")->required();
    sub_ab->add_option("--out", aa.out, "Output directory")->required();
    sub_ab->add_option("--epochs", aa.cfg.epochs, "Training epochs per run");
    sub_ab->add_option("--batch", aa.cfg.batch_size, "Batch size");
    sub_ab->add_option("--lr", aa.cfg.lr, "Peak learning rate");
    sub_ab->add_option("--windows-per-epoch", aa.cfg.max_windows_per_epoch,
                       "Class-balanced subsample per epoch (0 = full sweep)");
    sub_ab->add_option("--seeds", aa.seeds, "Seeds to average over");
    sub_ab->add_option("--variants", aa.variants, "Variant names to run");
    sub_ab->add_option("--val-frac", aa.val_frac, "Validation subject fraction");
    sub_ab->add_option("--test-frac", aa.test_frac, "Test subject fraction");
    sub_ab->add_option("--split-seed", aa.split_seed, "Subject split seed");

    RobustArgs ra;
    auto* sub_ro = app.add_subcommand("robust", "Perturbation robustness table");
    sub_ro->set_config("--config");
    sub_ro->add_option("--checkpoint", ra.checkpoint, "Checkpoint file")->required();
    sub_ro->add_option("--data", ra.data, "Window dataset file")->required();
    sub_ro->add_option("--report", ra.report, "Report JSON path")->required();
    sub_ro->add_option("--seed", ra.seed, "Perturbation seed");

    BenchArgs ba;
    auto* sub_be = app.add_subcommand("bench", "Per-window latency benchmark");
    sub_be->set_config("--config");
    sub_be->add_option("--checkpoint", ba.checkpoint, "Checkpoint file")->required();
    sub_be->add_option("--report", ba.report, "Report JSON path")->required();
    sub_be->add_option("--windows", ba.windows, "Number of timed windows");
    sub_be->add_option("--seed", ba.seed, "Benchmark session seed");

    ServeArgs sa;
    auto* sub_se = app.add_subcommand("serve", "Run the streaming gateway");
    sub_se->set_config("--config");
    sub_se->add_option("--checkpoint", sa.checkpoint, "Checkpoint file")->required();
    sub_se->add_option("--listen", sa.listen, "host:port to listen on");
    sub_se->add_option("--log", sa.log, "Detection log path (JSON lines)");
    sub_se->add_option("--pair-tolerance", sa.pair_tolerance,
                       "Max |t0| gap pairing the two modalities, seconds");
    sub_se->add_option("--fallback-timeout", sa.fallback_timeout,
                       "Single-modality fallback after this many seconds");

    ReplayArgs rp;
    auto* sub_rp = app.add_subcommand("replay", "Stream a recording to a gateway");
    sub_rp->set_config("--config");
    sub_rp->add_option("--recording", rp.recording, "Recording directory")->required();
    sub_rp->add_option("--target", rp.target, "Gateway host:port")->required();
    sub_rp->add_option("--node", rp.node, "vibration|radar|both");
    sub_rp->add_option("--node-id", rp.node_id, "Node id stamped into frames");
    sub_rp->add_flag("--realtime", rp.realtime, "Pace frames at the window stride");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (sub_sy->parsed()) run_synth(sy, *sub_sy);
        if (sub_pp->parsed()) run_preprocess(pp, *sub_pp);
        if (sub_tr->parsed()) run_train(ta, *sub_tr);
        if (sub_ev->parsed()) run_eval(ea, *sub_ev);
        if (sub_ab->parsed()) run_ablate(aa, *sub_ab);
        if (sub_ro->parsed()) run_robust(ra, *sub_ro);
        if (sub_be->parsed()) run_bench(ba, *sub_be);
        if (sub_se->parsed()) run_serve(sa, *sub_se);
        if (sub_rp->parsed()) run_replay(rp, *sub_rp);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
