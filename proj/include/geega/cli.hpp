#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geega/config.hpp"

namespace geega::cli {

struct CommandArgs {
    cfg::Config config = cfg::Config::defaults();
    uint64_t seed = 0;
    std::string out_dir;
    std::vector<std::string> ablations;  // subset of {git, align, topo, spectro}
};

// Each command writes a run manifest (manifest.json) into out_dir: config
// snapshot, seed, input hashes, output paths, timings.

// synthetic recordings in the GEEG binary format
void cmd_synth(const CommandArgs& args);

// recordings -> filter -> segment -> topomaps + spectrograms -> feature cache
void cmd_featgen(const CommandArgs& args, const std::string& in_dir, bool no_notch);

// LOSO training over a feature cache; metrics JSONL, conflict CSV, checkpoints
void cmd_train(const CommandArgs& args, const std::string& features_path);

// score a checkpoint against a feature cache
void cmd_eval(const CommandArgs& args, const std::string& features_path,
              const std::string& checkpoint_path);

// re-emit per-epoch conflict fractions from a run's conflict log
void cmd_diagnose(const CommandArgs& args, const std::string& log_path);

// applies --ablate flags onto a train config
void apply_ablations(train::TrainConfig& tc, const std::vector<std::string>& ablations);

// full argv entry point (CLI11); returns the process exit code
int run_main(int argc, const char* const* argv);

uint64_t fnv1a64_file(const std::string& path);

}  // namespace geega::cli
