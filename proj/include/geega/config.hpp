#pragma once

#include <map>
#include <string>

#include "geega/featuremaps.hpp"
#include "geega/signal_io.hpp"
#include "geega/trainer.hpp"

namespace geega::cfg {

// Flat dotted-key configuration. Every tunable ships with a default; unknown
// keys are rejected by name. `preset=desk` swaps in the small CI-speed model.
class Config {
public:
    static Config defaults();  // paper-scale settings
    static const std::map<std::string, std::string>& known_keys();

    void set(const std::string& key, const std::string& value);
    void apply_file(const std::string& path);
    void apply_preset(const std::string& name);  // "paper" or "desk"

    const std::string& get(const std::string& key) const;
    double num(const std::string& key) const;
    int integer(const std::string& key) const;
    bool flag(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

    // assembled views
    train::TrainConfig train_config() const;
    sio::SyntheticSpec synth_spec() const;
    feat::FeatureOptions feature_options() const;
    double bandpass_lo() const { return num("dsp.bandpass_lo"); }
    double bandpass_hi() const { return num("dsp.bandpass_hi"); }
    int bandpass_order() const { return integer("dsp.bandpass_order"); }
    double notch_hz() const { return num("dsp.notch_hz"); }
    double notch_q() const { return num("dsp.notch_q"); }
    double window_seconds() const { return num("feat.window_seconds"); }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace geega::cfg
