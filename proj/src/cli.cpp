#include "geega/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "geega/binio.hpp"
#include "geega/dsp.hpp"
#include "geega/featuremaps.hpp"
#include "geega/signal_io.hpp"
#include "geega/trainer.hpp"

namespace geega::cli {

namespace fs = std::filesystem;
using nlohmann::json;

uint64_t fnv1a64_file(const std::string& path) {
    auto is = binio::open_in(path);
    uint64_t h = 1469598103934665603ull;
    char buf[8192];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<uint8_t>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!is) break;
    }
    return h;
}

namespace {

std::string iso_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    return buf;
}

// Written with status=running up front, finalized when the command is done.
class Manifest {
public:
    Manifest(const std::string& command, const CommandArgs& args) {
        start_ = std::chrono::steady_clock::now();
        j_["command"] = command;
        j_["seed"] = args.seed;
        j_["started_at"] = iso_now();
        j_["status"] = "running";
        json cfg;
        for (const auto& [k, v] : args.config.entries()) cfg[k] = v;
        j_["config"] = cfg;
        j_["ablations"] = args.ablations;
        path_ = (fs::path(args.out_dir) / "manifest.json").string();
        fs::create_directories(args.out_dir);
        write();
    }

    void add_input(const std::string& path) {
        j_["inputs"].push_back({{"path", path}, {"fnv1a64", fnv1a64_file(path)}});
    }
    void add_output(const std::string& path) { j_["outputs"].push_back(path); }
    void note(const std::string& key, const json& v) { j_[key] = v; }

    void finalize() {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start_)
                      .count();
        j_["finished_at"] = iso_now();
        j_["duration_ms"] = ms;
        j_["status"] = "ok";
        write();
    }

private:
    void write() const {
        std::ofstream os(path_);
        if (!os) throw std::runtime_error("cannot write manifest: " + path_);
        os << j_.dump(2) << "\n";
    }

    json j_;
    std::string path_;
    std::chrono::steady_clock::time_point start_;
};

std::vector<std::string> list_recordings(const std::string& dir) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        auto ext = entry.path().extension();
        if (ext == ".geeg" || ext == ".csv") out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw std::runtime_error("no recordings (.geeg/.csv) in " + dir);
    return out;
}

}  // namespace

void apply_ablations(train::TrainConfig& tc, const std::vector<std::string>& ablations) {
    for (const auto& a : ablations) {
        if (a == "git")
            tc.use_git = false;
        else if (a == "align")
            tc.use_align = false;
        else if (a == "topo")
            tc.model.use_topo = false;
        else if (a == "spectro")
            tc.model.use_spectro = false;
        else
            throw std::invalid_argument("unknown ablation: " + a +
                                        " (want git, align, topo or spectro)");
    }
}

void cmd_synth(const CommandArgs& args) {
    Manifest man("synth", args);
    auto spec = args.config.synth_spec();
    auto recordings = sio::synthesize(spec, args.seed);
    int written = 0;
    std::vector<int> class_counter(static_cast<size_t>(spec.subjects), 0);
    for (size_t i = 0; i < recordings.size(); ++i) {
        const auto& rec = recordings[i];
        int cls = sio::binarize_label(rec.label_track[0]);
        // per subject: recordings alternate class blocks in synthesize order
        std::string name = rec.subject_id + "_c" + std::to_string(cls) + "_r" +
                           std::to_string(i % static_cast<size_t>(spec.recordings_per_class)) +
                           ".geeg";
        std::string path = (fs::path(args.out_dir) / name).string();
        sio::write_binary(rec, path);
        man.add_output(path);
        ++written;
    }
    man.note("recordings_written", written);
    man.finalize();
    std::cout << "synth: wrote " << written << " recordings to " << args.out_dir << "\n";
}

void cmd_featgen(const CommandArgs& args, const std::string& in_dir, bool no_notch) {
    Manifest man("featgen", args);
    man.note("notch_enabled", !no_notch);
    auto paths = list_recordings(in_dir);

    const auto& cfg = args.config;
    feat::FeatureOptions opts = cfg.feature_options();
    const auto& bands = dsp::default_bands();
    feat::FeatureSet out;
    out.bands = static_cast<int>(bands.size());
    out.image = opts.image;

    sio::CsvFormat csv_fmt;
    csv_fmt.sample_rate_hz = cfg.num("synth.sample_rate");

    bool first = true;
    for (const auto& path : paths) {
        man.add_input(path);
        sio::EegRecording rec;
        try {
            rec = sio::ingest(path, csv_fmt);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("featgen: ") + e.what());
        }

        sio::Montage montage;
        const std::string& m = cfg.get("feat.montage");
        if (m == "auto")
            montage = sio::montage_for(rec.channels);
        else if (m == "consumer_4" || m == "bci2a_22")
            montage = sio::builtin_montage(m);
        else
            montage = sio::load_montage(m);
        if (montage.size() != rec.channel_count())
            throw std::runtime_error("featgen: " + path + ": montage '" + montage.name + "' has " +
                                     std::to_string(montage.size()) + " electrodes but file has " +
                                     std::to_string(rec.channel_count()) + " channels");
        if (first) {
            out.channels = rec.channel_count();
            out.montage = montage.name;
            first = false;
        } else if (out.channels != rec.channel_count()) {
            throw std::runtime_error("featgen: " + path + ": channel count differs from the rest");
        }

        // filter each channel, then segment
        sio::EegRecording filtered = rec;
        for (int c = 0; c < rec.channel_count(); ++c) {
            auto x = rec.channel(c);
            x = dsp::bandpass(x, rec.sample_rate_hz, cfg.bandpass_lo(), cfg.bandpass_hi(),
                              cfg.bandpass_order());
            if (!no_notch) x = dsp::notch(x, rec.sample_rate_hz, cfg.notch_hz(), cfg.notch_q());
            for (int t = 0; t < rec.samples; ++t)
                filtered.data[static_cast<size_t>(c) * static_cast<size_t>(rec.samples) +
                              static_cast<size_t>(t)] = static_cast<float>(x[static_cast<size_t>(t)]);
        }

        auto segments = sio::segment(filtered, cfg.window_seconds());
        for (const auto& seg : segments)
            out.items.push_back(feat::make_features(seg, montage, bands, opts));
        std::cout << "featgen: " << path << " -> " << segments.size() << " segments\n";
    }

    std::string cache = (fs::path(args.out_dir) / "features.geef").string();
    feat::save_features(out, cache);
    man.add_output(cache);
    man.note("segments", static_cast<int>(out.items.size()));
    man.finalize();
    std::cout << "featgen: wrote " << out.items.size() << " feature items to " << cache << "\n";
}

namespace {

json epoch_to_json(const train::EpochRecord& rec, int fold) {
    json j;
    j["type"] = "epoch";
    j["fold"] = fold;
    j["epoch"] = rec.epoch;
    j["total_loss"] = rec.total_loss;
    j["val_loss"] = rec.val_loss;
    j["lr_multiplier"] = rec.lr_multiplier;
    for (const auto& [k, v] : rec.loss_terms) j["loss"][k] = v;
    for (const auto& [k, v] : rec.conflict_fraction) j["conflict_fraction"][k] = v;
    return j;
}

void write_stats_sidecar(const std::string& ckpt_path, const train::DomainStats& st) {
    json j;
    j["topo_mean"] = st.topo_mean;
    j["topo_std"] = st.topo_std;
    j["spectro_mean"] = st.spectro_mean;
    j["spectro_std"] = st.spectro_std;
    std::ofstream os(ckpt_path + ".stats.json");
    os << j.dump(2) << "\n";
}

train::DomainStats read_stats_sidecar(const std::string& ckpt_path) {
    std::ifstream is(ckpt_path + ".stats.json");
    if (!is) throw std::runtime_error("missing stats sidecar: " + ckpt_path + ".stats.json");
    json j = json::parse(is);
    train::DomainStats st;
    st.topo_mean = j["topo_mean"];
    st.topo_std = j["topo_std"];
    st.spectro_mean = j["spectro_mean"];
    st.spectro_std = j["spectro_std"];
    return st;
}

}  // namespace

void cmd_train(const CommandArgs& args, const std::string& features_path) {
    Manifest man("train", args);
    man.add_input(features_path);
    auto features = feat::load_features(features_path);

    train::TrainConfig tc = args.config.train_config();
    tc.seed = args.seed;
    apply_ablations(tc, args.ablations);
    tc.model.topo_channels = features.bands;
    tc.model.spectro_channels = features.channels;
    tc.model.image = features.image;

    std::string metrics_path = (fs::path(args.out_dir) / "metrics.jsonl").string();
    std::ofstream metrics_os(metrics_path);
    if (!metrics_os) throw std::runtime_error("cannot write " + metrics_path);

    train::ConflictLog log;
    auto sink = [&](int fold, const train::TrainedFold& tf) {
        std::string ckpt =
            (fs::path(args.out_dir) / ("fold_" + std::to_string(fold) + ".ckpt")).string();
        tf.net->params().save(ckpt);
        write_stats_sidecar(ckpt, tf.stats);
        man.add_output(ckpt);
        for (const auto& rec : tf.result.epochs) metrics_os << epoch_to_json(rec, fold).dump() << "\n";
    };
    train::RunMetrics run = train::loso(features, tc, &log, sink);

    json summary;
    summary["type"] = "summary";
    summary["mean_accuracy"] = run.mean_accuracy;
    summary["std_accuracy"] = run.std_accuracy;
    summary["mean_f1"] = run.mean_f1;
    summary["std_f1"] = run.std_f1;
    summary["ablations"] = args.ablations;
    for (const auto& f : run.folds)
        summary["folds"].push_back({{"fold", f.fold},
                                    {"test_subject", f.test_subject},
                                    {"accuracy", f.accuracy},
                                    {"f1", f.f1}});
    metrics_os << summary.dump() << "\n";
    metrics_os.close();
    man.add_output(metrics_path);

    std::string conflicts_path = (fs::path(args.out_dir) / "conflicts.csv").string();
    log.save_csv(conflicts_path);
    man.add_output(conflicts_path);

    man.note("summary", summary);
    man.finalize();
    std::cout << "train: " << run.summary();
    if (!args.ablations.empty()) {
        std::cout << " [ablated:";
        for (const auto& a : args.ablations) std::cout << " " << a;
        std::cout << "]";
    }
    std::cout << "\n";
}

void cmd_eval(const CommandArgs& args, const std::string& features_path,
              const std::string& checkpoint_path) {
    Manifest man("eval", args);
    man.add_input(features_path);
    man.add_input(checkpoint_path);
    auto features = feat::load_features(features_path);

    train::TrainConfig tc = args.config.train_config();
    apply_ablations(tc, args.ablations);
    tc.model.topo_channels = features.bands;
    tc.model.spectro_channels = features.channels;
    tc.model.image = features.image;

    model::GeegaNet net(tc.model, 0);
    net.params().load(checkpoint_path);
    train::DomainStats stats = read_stats_sidecar(checkpoint_path);

    auto ev = train::evaluate(net, features, stats, tc);
    json j;
    j["accuracy"] = ev.accuracy;
    j["f1"] = ev.f1;
    j["loss"] = ev.loss;
    j["items"] = static_cast<int>(features.items.size());
    std::string out_path = (fs::path(args.out_dir) / "eval.json").string();
    std::ofstream os(out_path);
    os << j.dump(2) << "\n";
    man.add_output(out_path);
    man.finalize();
    std::cout << "eval: accuracy " << ev.accuracy << "%, F1 " << ev.f1 << "% on "
              << features.items.size() << " items\n";
}

void cmd_diagnose(const CommandArgs& args, const std::string& log_path) {
    Manifest man("diagnose", args);
    man.add_input(log_path);
    auto log = train::ConflictLog::load_csv(log_path);
    auto report = train::conflict_report(log);
    std::string out_path = (fs::path(args.out_dir) / "heatmap.csv").string();
    train::save_conflict_report_csv(report, out_path);
    man.add_output(out_path);
    man.finalize();
    std::cout << "diagnose: wrote " << out_path << "\n";
}

int run_main(int argc, const char* const* argv) {
    CLI::App app{"GEEGA: two-domain EEG representation learning with gradient alignment"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", in_dir, features, checkpoint, log_path;
    uint64_t seed = 0;
    bool no_notch = false;
    std::vector<std::string> ablations;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat key=value config file");
        sub->add_option("--seed", seed, "run seed");
        sub->add_option("--out", out_dir, "output directory");
    };

    auto* synth = app.add_subcommand("synth", "generate synthetic recordings");
    add_common(synth);
    auto* featgen = app.add_subcommand("featgen", "build topomap/spectrogram feature cache");
    add_common(featgen);
    featgen->add_option("--in", in_dir, "directory of .geeg/.csv recordings")->required();
    featgen->add_flag("--no-notch", no_notch, "skip the notch filter");
    auto* tr = app.add_subcommand("train", "LOSO training over a feature cache");
    add_common(tr);
    tr->add_option("--features", features, "feature cache (.geef)")->required();
    tr->add_option("--ablate", ablations, "drop a component: git, align, topo, spectro");
    auto* ev = app.add_subcommand("eval", "score a checkpoint on a feature cache");
    add_common(ev);
    ev->add_option("--features", features, "feature cache (.geef)")->required();
    ev->add_option("--checkpoint", checkpoint, "model checkpoint (.ckpt)")->required();
    ev->add_option("--ablate", ablations, "ablations the checkpoint was trained with");
    auto* diag = app.add_subcommand("diagnose", "conflict heatmap from a run log");
    add_common(diag);
    diag->add_option("--log", log_path, "conflicts.csv from a training run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        CommandArgs args;
        if (!config_path.empty()) args.config.apply_file(config_path);
        args.seed = seed;
        args.out_dir = out_dir;
        args.ablations = ablations;

        if (synth->parsed()) cmd_synth(args);
        if (featgen->parsed()) cmd_featgen(args, in_dir, no_notch);
        if (tr->parsed()) cmd_train(args, features);
        if (ev->parsed()) cmd_eval(args, features, checkpoint);
        if (diag->parsed()) cmd_diagnose(args, log_path);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "geega: error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace geega::cli
