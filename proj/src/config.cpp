#include "geega/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace geega::cfg {

const std::map<std::string, std::string>& Config::known_keys() {
    static const std::map<std::string, std::string> defaults = {
        // synthetic data
        {"synth.subjects", "4"},
        {"synth.seconds", "120"},
        {"synth.sample_rate", "256"},
        {"synth.recordings_per_class", "1"},
        {"synth.noise", "0.5"},
        {"synth.subject_jitter", "0.2"},

        // preprocessing
        {"dsp.bandpass_lo", "1"},
        {"dsp.bandpass_hi", "75"},
        {"dsp.bandpass_order", "4"},
        {"dsp.notch_hz", "60"},
        {"dsp.notch_q", "30"},
        {"dsp.psd_window_s", "1.0"},
        {"dsp.psd_overlap", "0.5"},

        // features
        {"feat.window_seconds", "10"},
        {"feat.image", "32"},
        {"feat.log_band_power", "false"},
        {"feat.stft_window", "256"},
        {"feat.montage", "auto"},

        // encoders (T_topo / T_spectro)
        {"encoder.blocks", "3"},
        {"encoder.heads", "8"},
        {"encoder.embed_dim", "512"},
        {"encoder.mlp_hidden", "1024"},
        {"encoder.dropout", "0.1"},
        {"encoder.patch", "8"},
        {"encoder.readout", "class_token"},

        // GCN fusion (G2 = nodes * node_dim)
        {"gcn.nodes", "6"},
        {"gcn.node_dim", "256"},
        {"gcn.out_dim", "512"},
        {"gcn.dropout", "0.1"},

        // classification heads
        {"head.hidden", "128"},
        {"head.dropout", "0.25"},

        // training
        {"train.batch", "32"},
        {"train.epochs", "25"},
        {"train.lr", "0.0001"},
        {"train.weight_decay", "0.00001"},
        {"train.warmup_epochs", "5"},
        {"train.plateau_factor", "0.1"},
        {"train.plateau_patience", "5"},
        {"train.val_fraction", "0.2"},
        {"train.normalize", "true"},
        {"train.center_gamma", "0.5"},
        {"train.adam_decoupled", "false"},
        {"train.metric", "last"},
    };
    return defaults;
}

Config Config::defaults() {
    Config c;
    c.kv_ = known_keys();
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key)) throw std::invalid_argument("unknown config key: " + key);
    kv_[key] = value;
}

void Config::apply_preset(const std::string& name) {
    if (name == "paper") {
        kv_ = known_keys();
        return;
    }
    if (name == "desk") {
        set("encoder.blocks", "1");
        set("encoder.heads", "4");
        set("encoder.embed_dim", "64");
        set("encoder.mlp_hidden", "128");
        set("gcn.nodes", "4");
        set("gcn.node_dim", "16");
        set("gcn.out_dim", "32");
        set("train.batch", "16");
        return;
    }
    throw std::invalid_argument("unknown preset: " + name + " (want paper or desk)");
}

void Config::apply_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto strip = [](std::string s) {
            auto a = s.find_first_not_of(" \t\r");
            auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value, got '" + line + "'");
        pairs.emplace_back(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    // presets first so file overrides win regardless of line order
    for (const auto& [k, v] : pairs)
        if (k == "preset") apply_preset(v);
    for (const auto& [k, v] : pairs) {
        if (k == "preset") continue;
        set(k, v);
    }
}

const std::string& Config::get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::invalid_argument("unknown config key: " + key);
    return it->second;
}

double Config::num(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": '" + v + "' is not a number");
    }
}

int Config::integer(const std::string& key) const {
    double d = num(key);
    if (d != std::floor(d))
        throw std::invalid_argument("config key " + key + ": expected an integer");
    return static_cast<int>(d);
}

bool Config::flag(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config key " + key + ": expected a boolean, got '" + v + "'");
}

train::TrainConfig Config::train_config() const {
    train::TrainConfig tc;
    tc.batch = integer("train.batch");
    tc.epochs = integer("train.epochs");
    tc.lr = num("train.lr");
    tc.weight_decay = num("train.weight_decay");
    tc.warmup_epochs = integer("train.warmup_epochs");
    tc.plateau_factor = num("train.plateau_factor");
    tc.plateau_patience = integer("train.plateau_patience");
    tc.val_fraction = num("train.val_fraction");
    tc.normalize = flag("train.normalize");
    tc.center_gamma = num("train.center_gamma");
    tc.adam_decoupled = flag("train.adam_decoupled");
    const std::string& metric = get("train.metric");
    if (metric != "last" && metric != "best")
        throw std::invalid_argument("config key train.metric: want last or best");
    tc.metric_best_val = metric == "best";

    tc.model.encoder.blocks = integer("encoder.blocks");
    tc.model.encoder.heads = integer("encoder.heads");
    tc.model.encoder.embed_dim = integer("encoder.embed_dim");
    tc.model.encoder.mlp_hidden = integer("encoder.mlp_hidden");
    tc.model.encoder.dropout = num("encoder.dropout");
    tc.model.encoder.patch = integer("encoder.patch");
    const std::string& readout = get("encoder.readout");
    if (readout != "class_token" && readout != "mean")
        throw std::invalid_argument("config key encoder.readout: want class_token or mean");
    tc.model.encoder.mean_pool = readout == "mean";
    tc.model.gcn.nodes = integer("gcn.nodes");
    tc.model.gcn.node_dim = integer("gcn.node_dim");
    tc.model.gcn.out_dim = integer("gcn.out_dim");
    tc.model.gcn.dropout = num("gcn.dropout");
    tc.model.head.hidden = integer("head.hidden");
    tc.model.head.dropout = num("head.dropout");
    tc.model.image = integer("feat.image");
    return tc;
}

sio::SyntheticSpec Config::synth_spec() const {
    sio::SyntheticSpec spec = sio::default_synthetic_spec();
    spec.subjects = integer("synth.subjects");
    spec.seconds = num("synth.seconds");
    spec.sample_rate_hz = num("synth.sample_rate");
    spec.recordings_per_class = integer("synth.recordings_per_class");
    spec.noise_level = num("synth.noise");
    spec.subject_gain_jitter = num("synth.subject_jitter");
    return spec;
}

feat::FeatureOptions Config::feature_options() const {
    feat::FeatureOptions fo;
    fo.image = integer("feat.image");
    fo.psd_window_seconds = num("dsp.psd_window_s");
    fo.psd_overlap = num("dsp.psd_overlap");
    fo.log_band_power = flag("feat.log_band_power");
    fo.stft_window = integer("feat.stft_window");
    return fo;
}

}  // namespace geega::cfg
