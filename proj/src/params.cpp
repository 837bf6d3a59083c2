#include "geega/params.hpp"

#include <cmath>
#include <stdexcept>

#include "geega/binio.hpp"

namespace geega::diff {

const char* component_name(Component c) {
    switch (c) {
        case Component::TopoEncoder: return "T_topo";
        case Component::SpectroEncoder: return "T_spectro";
        case Component::Gcn: return "GCN";
        case Component::HeadTopo: return "head_topo";
        case Component::HeadSpectro: return "head_spectro";
        case Component::HeadGcn: return "head_GCN";
        case Component::Centers: return "centers";
    }
    return "?";
}

std::optional<Component> component_from(const std::string& name) {
    for (Component c : {Component::TopoEncoder, Component::SpectroEncoder, Component::Gcn,
                        Component::HeadTopo, Component::HeadSpectro, Component::HeadGcn,
                        Component::Centers}) {
        if (name == component_name(c)) return c;
    }
    return std::nullopt;
}

double GradientVector::dot(const GradientVector& o) const {
    if (values.size() != o.values.size())
        throw std::invalid_argument("GradientVector::dot: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < values.size(); ++i) acc += values[i] * o.values[i];
    return acc;
}

double GradientVector::norm() const { return std::sqrt(dot(*this)); }

int ParameterSet::add(std::string name, Component c, Tensor init, bool trainable, bool decay) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Param p;
    p.name = std::move(name);
    p.component = c;
    p.grad = Tensor::zeros(init.shape());
    p.value = std::move(init);
    p.trainable = trainable;
    p.decay = decay;
    params_.push_back(std::move(p));
    int id = static_cast<int>(params_.size()) - 1;
    index_[params_.back().name] = id;
    return id;
}

int ParameterSet::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

std::vector<int> ParameterSet::indices(Component c) const {
    std::vector<int> ids;
    for (int i = 0; i < count(); ++i)
        if (params_[static_cast<size_t>(i)].component == c) ids.push_back(i);
    return ids;
}

int64_t ParameterSet::size_of(Component c) const {
    int64_t n = 0;
    for (const Param& p : params_)
        if (p.component == c) n += p.value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (Param& p : params_) p.grad.fill(0.0);
}

GradientVector ParameterSet::flatten_grad(Component c) const {
    GradientVector g;
    g.subset = c;
    g.values.reserve(static_cast<size_t>(size_of(c)));
    for (const Param& p : params_) {
        if (p.component != c) continue;
        const double* src = p.grad.data();
        g.values.insert(g.values.end(), src, src + p.grad.size());
    }
    return g;
}

void ParameterSet::write_grad(Component c, const GradientVector& g) {
    if (g.subset != c) throw std::invalid_argument("write_grad: subset tag mismatch");
    if (static_cast<int64_t>(g.values.size()) != size_of(c))
        throw std::invalid_argument("write_grad: length mismatch for subset " +
                                    std::string(component_name(c)));
    size_t off = 0;
    for (Param& p : params_) {
        if (p.component != c) continue;
        double* dst = p.grad.data();
        for (int64_t i = 0; i < p.grad.size(); ++i) dst[i] = g.values[off++];
    }
}

std::vector<double> ParameterSet::flatten_values(Component c) const {
    std::vector<double> v;
    for (const Param& p : params_) {
        if (p.component != c) continue;
        const double* src = p.value.data();
        v.insert(v.end(), src, src + p.value.size());
    }
    return v;
}

void ParameterSet::save(const std::string& path) const {
    auto os = binio::open_out(path);
    binio::write_magic(os, "GGCP");
    binio::write_raw<uint16_t>(os, 1);
    binio::write_raw<uint32_t>(os, static_cast<uint32_t>(params_.size()));
    for (const Param& p : params_) {
        binio::write_string(os, p.name);
        binio::write_string(os, component_name(p.component));
        binio::write_raw<uint8_t>(os, static_cast<uint8_t>(p.value.rank()));
        for (int d : p.value.shape()) binio::write_raw<uint32_t>(os, static_cast<uint32_t>(d));
        const double* src = p.value.data();
        for (int64_t i = 0; i < p.value.size(); ++i)
            binio::write_raw<float>(os, static_cast<float>(src[i]));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

void ParameterSet::load(const std::string& path) {
    auto is = binio::open_in(path);
    binio::expect_magic(is, "GGCP", "checkpoint " + path);
    uint16_t version = binio::read_raw<uint16_t>(is);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    uint32_t n = binio::read_raw<uint32_t>(is);
    if (n != params_.size())
        throw std::runtime_error("checkpoint: parameter count mismatch (file " + std::to_string(n) +
                                 ", model " + std::to_string(params_.size()) + ")");
    for (uint32_t k = 0; k < n; ++k) {
        std::string name = binio::read_string(is);
        std::string comp = binio::read_string(is);
        int id = find(name);
        if (id < 0) throw std::runtime_error("checkpoint: unknown parameter " + name);
        Param& p = params_[static_cast<size_t>(id)];
        if (comp != component_name(p.component))
            throw std::runtime_error("checkpoint: component tag mismatch for " + name);
        uint8_t rank = binio::read_raw<uint8_t>(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(binio::read_raw<uint32_t>(is));
        if (shape != p.value.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        double* dst = p.value.data();
        for (int64_t i = 0; i < p.value.size(); ++i)
            dst[i] = static_cast<double>(binio::read_raw<float>(is));
    }
}

Adam::Adam(const ParameterSet& params, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(static_cast<size_t>(params.count()));
    v_.reserve(static_cast<size_t>(params.count()));
    for (int i = 0; i < params.count(); ++i) {
        m_.push_back(Tensor::zeros(params.at(i).value.shape()));
        v_.push_back(Tensor::zeros(params.at(i).value.shape()));
    }
}

void Adam::step(ParameterSet& params, double lr_multiplier) {
    ++step_;
    const double lr = cfg_.lr * lr_multiplier;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (int i = 0; i < params.count(); ++i) {
        Param& p = params.at(i);
        if (!p.trainable) continue;
        double* th = p.value.data();
        const double* g = p.grad.data();
        double* m = m_[static_cast<size_t>(i)].data();
        double* v = v_[static_cast<size_t>(i)].data();
        const bool decay = p.decay && cfg_.weight_decay > 0.0;
        for (int64_t j = 0; j < p.value.size(); ++j) {
            double grad = g[j];
            if (decay && !cfg_.decoupled) grad += cfg_.weight_decay * th[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad * grad;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            th[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            if (decay && cfg_.decoupled) th[j] -= lr * cfg_.weight_decay * th[j];
        }
    }
}

void sgd_step(ParameterSet& params, double lr) {
    for (int i = 0; i < params.count(); ++i) {
        Param& p = params.at(i);
        if (!p.trainable) continue;
        double* th = p.value.data();
        const double* g = p.grad.data();
        for (int64_t j = 0; j < p.value.size(); ++j) th[j] -= lr * g[j];
    }
}

double LrSchedule::multiplier(int epoch) const {
    if (epoch < warmup_) return static_cast<double>(epoch + 1) / static_cast<double>(warmup_);
    return plateau_mult_;
}

void LrSchedule::observe(int epoch, double monitored) {
    if (epoch < warmup_) return;  // warmup epochs do not feed the plateau rule
    if (monitored < best_) {
        best_ = monitored;
        bad_ = 0;
        return;
    }
    if (++bad_ >= patience_) {
        plateau_mult_ *= factor_;
        bad_ = 0;
    }
}

}  // namespace geega::diff
