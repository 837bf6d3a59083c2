#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geega/tensor.hpp"

namespace geega::diff {

// Parameter grouping. The two encoder subsets are the ones whose gradients
// get paired for alignment; Centers are state, not gradient-trained.
enum class Component {
    TopoEncoder,
    SpectroEncoder,
    Gcn,
    HeadTopo,
    HeadSpectro,
    HeadGcn,
    Centers,
};

const char* component_name(Component c);
std::optional<Component> component_from(const std::string& name);

// Flat gradient over one component, in registration order.
struct GradientVector {
    Component subset;
    std::vector<double> values;

    double dot(const GradientVector& o) const;
    double norm() const;
};

struct Param {
    std::string name;
    Component component;
    Tensor value;
    Tensor grad;
    bool trainable = true;
    bool decay = true;  // weight decay eligibility (biases and centers opt out)
};

// Named parameters with a stable registration order; that order defines the
// flattening of GradientVectors and the checkpoint layout.
class ParameterSet {
public:
    int add(std::string name, Component c, Tensor init, bool trainable = true, bool decay = true);

    Param& at(int i) { return params_[static_cast<size_t>(i)]; }
    const Param& at(int i) const { return params_[static_cast<size_t>(i)]; }
    int count() const { return static_cast<int>(params_.size()); }

    int find(const std::string& name) const;  // -1 if absent

    std::vector<int> indices(Component c) const;
    int64_t size_of(Component c) const;

    void zero_grad();
    GradientVector flatten_grad(Component c) const;
    void write_grad(Component c, const GradientVector& g);
    std::vector<double> flatten_values(Component c) const;

    // Checkpoint container: name, component tag, shape, f32 values.
    void save(const std::string& path) const;
    void load(const std::string& path);  // names and shapes must match exactly

private:
    std::vector<Param> params_;
    std::map<std::string, int> index_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool decoupled = false;  // true: AdamW-style; false: decay added to the gradient
};

class Adam {
public:
    Adam(const ParameterSet& params, AdamConfig cfg);

    // lr_multiplier scales cfg.lr (warmup/plateau schedules plug in here).
    void step(ParameterSet& params, double lr_multiplier = 1.0);

    int64_t steps() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t step_ = 0;
};

// Plain gradient-descent update over the trainable parameters.
void sgd_step(ParameterSet& params, double lr);

// Linear warmup for the first `warmup_epochs`, then a plateau rule: the
// multiplier drops by `factor` each time the monitored value fails to
// improve for `patience` consecutive observed epochs.
class LrSchedule {
public:
    LrSchedule(int warmup_epochs, double factor, int patience)
        : warmup_(warmup_epochs), factor_(factor), patience_(patience) {}

    double multiplier(int epoch) const;
    void observe(int epoch, double monitored);  // call once per finished epoch

private:
    int warmup_;
    double factor_;
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_ = 0;
    double plateau_mult_ = 1.0;
};

}  // namespace geega::diff
