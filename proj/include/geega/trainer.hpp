#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "geega/featuremaps.hpp"
#include "geega/losses_align.hpp"
#include "geega/model.hpp"

namespace geega::train {

struct TrainConfig {
    int batch = 32;
    int epochs = 25;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    int warmup_epochs = 5;
    double plateau_factor = 0.1;
    int plateau_patience = 5;
    uint64_t seed = 0;
    bool use_git = true;
    bool use_align = true;
    double val_fraction = 0.2;
    bool normalize = true;       // per-domain standardization from the train split
    double center_gamma = 0.5;   // class-center EMA rate
    bool adam_decoupled = false;
    bool metric_best_val = false;  // default: report the last epoch
    bool track_conflicts = true;   // off = alignment machinery fully bypassed
    model::ModelConfig model;
};

struct EpochRecord {
    int fold = 0;
    int epoch = 0;
    std::map<std::string, double> loss_terms;        // per-batch means
    double total_loss = 0.0;
    double val_loss = 0.0;
    double lr_multiplier = 1.0;
    std::map<std::string, double> conflict_fraction;  // per pair
};

struct FoldResult {
    int fold = 0;
    std::string test_subject;
    double accuracy = 0.0;  // percent
    double f1 = 0.0;        // percent, macro
    std::vector<EpochRecord> epochs;
};

struct RunMetrics {
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    double mean_f1 = 0.0;
    double std_f1 = 0.0;

    void finalize();            // fills the mean/std fields from folds
    std::string summary() const;  // "accuracy mean(std), F1 mean(std)"
};

struct ConflictEvent {
    int epoch = 0;
    int batch = 0;
    std::string pair;
    double cosine = 0.0;
    bool conflict = false;
};

class ConflictLog {
public:
    void append(const ConflictEvent& e) { events_.push_back(e); }
    const std::vector<ConflictEvent>& events() const { return events_; }
    void save_csv(const std::string& path) const;  // epoch,batch,pair,cosine,conflict
    static ConflictLog load_csv(const std::string& path);

private:
    std::vector<ConflictEvent> events_;
};

// Fraction of conflicted batches per epoch per pair.
std::map<std::string, std::map<int, double>> conflict_report(const ConflictLog& log);
void save_conflict_report_csv(const std::map<std::string, std::map<int, double>>& report,
                              const std::string& path);

// (accuracy %, macro F1 %) of thresholded predictions.
std::pair<double, double> metrics(const std::vector<int>& predictions,
                                  const std::vector<int>& labels);

struct DomainStats {
    double topo_mean = 0.0, topo_std = 1.0;
    double spectro_mean = 0.0, spectro_std = 1.0;
};

DomainStats compute_stats(const feat::FeatureSet& train);

struct EvalResult {
    double accuracy = 0.0;
    double f1 = 0.0;
    double loss = 0.0;
    std::vector<int> predictions;
};

EvalResult evaluate(model::GeegaNet& net, const feat::FeatureSet& data, const DomainStats& stats,
                    const TrainConfig& cfg);

struct TrainedFold {
    std::shared_ptr<model::GeegaNet> net;
    DomainStats stats;
    FoldResult result;
};

// One training run over an explicit train/val split. The conflict log
// receives one event per batch per active pair.
TrainedFold train_fold(const feat::FeatureSet& train_set, const feat::FeatureSet& val_set,
                       const TrainConfig& cfg, ConflictLog* log, int fold_index = 0);

// Leave-one-subject-out over the whole set; one fold per subject.
using FoldSink = std::function<void(int fold, const TrainedFold&)>;
RunMetrics loso(const feat::FeatureSet& all, const TrainConfig& cfg, ConflictLog* log,
                const FoldSink& sink = {});

// Deterministic stratified split of a feature set (val_fraction per class).
std::pair<feat::FeatureSet, feat::FeatureSet> split_train_val(const feat::FeatureSet& items,
                                                              double val_fraction, uint64_t seed);

std::vector<std::string> subjects_of(const feat::FeatureSet& fs);

}  // namespace geega::train
