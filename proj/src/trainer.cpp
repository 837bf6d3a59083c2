#include "geega/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "geega/binio.hpp"

namespace geega::train {

using diff::Component;
using diff::GradientVector;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// batch tensors [B, ch, h, w] from feature items, standardized
Tensor assemble(const feat::FeatureSet& fs, const std::vector<int>& idx, bool topo, double mean,
                double stdev) {
    if (idx.empty()) return {};
    const Tensor& first = topo ? fs.items[static_cast<size_t>(idx[0])].topo
                               : fs.items[static_cast<size_t>(idx[0])].spectro;
    std::vector<int> shape = {static_cast<int>(idx.size())};
    for (int d : first.shape()) shape.push_back(d);
    Tensor out = Tensor::zeros(shape);
    double* o = out.data();
    int64_t stride = first.size();
    for (size_t i = 0; i < idx.size(); ++i) {
        const Tensor& src = topo ? fs.items[static_cast<size_t>(idx[i])].topo
                                 : fs.items[static_cast<size_t>(idx[i])].spectro;
        const double* s = src.data();
        for (int64_t j = 0; j < stride; ++j)
            o[static_cast<int64_t>(i) * stride + j] = (s[j] - mean) / stdev;
    }
    return out;
}

struct BatchLosses {
    Var topo_group, spectro_group, gcn_group;
    std::vector<std::pair<std::string, Var>> terms;
};

// flat tape adjoint over one component (zeros where a parameter is untouched)
GradientVector tape_grad_of(const model::GeegaNet& net, const Tape& t,
                            const model::GeegaNet::Binding& b, Component c) {
    GradientVector g;
    g.subset = c;
    const auto& ps = net.params();
    for (int i = 0; i < ps.count(); ++i) {
        const auto& p = ps.at(i);
        if (p.component != c) continue;
        Var v = b.vars[static_cast<size_t>(i)];
        if (t.has_grad(v)) {
            const double* src = t.grad(v).data();
            g.values.insert(g.values.end(), src, src + t.grad(v).size());
        } else {
            g.values.insert(g.values.end(), static_cast<size_t>(p.value.size()), 0.0);
        }
    }
    return g;
}

}  // namespace

std::vector<std::string> subjects_of(const feat::FeatureSet& fs) {
    std::set<std::string> seen;
    std::vector<std::string> out;
    for (const auto& item : fs.items)
        if (seen.insert(item.subject_id).second) out.push_back(item.subject_id);
    std::sort(out.begin(), out.end());
    return out;
}

DomainStats compute_stats(const feat::FeatureSet& train) {
    DomainStats st;
    auto one = [](const std::vector<const Tensor*>& ts, double& mean, double& stdev) {
        double acc = 0.0;
        int64_t n = 0;
        for (const Tensor* t : ts) {
            const double* p = t->data();
            for (int64_t i = 0; i < t->size(); ++i) acc += p[i];
            n += t->size();
        }
        if (n == 0) return;
        mean = acc / static_cast<double>(n);
        double var = 0.0;
        for (const Tensor* t : ts) {
            const double* p = t->data();
            for (int64_t i = 0; i < t->size(); ++i) {
                double d = p[i] - mean;
                var += d * d;
            }
        }
        stdev = std::sqrt(var / static_cast<double>(n));
        if (stdev < 1e-12) stdev = 1.0;
    };
    std::vector<const Tensor*> topos, spectros;
    for (const auto& item : train.items) {
        topos.push_back(&item.topo);
        spectros.push_back(&item.spectro);
    }
    one(topos, st.topo_mean, st.topo_std);
    one(spectros, st.spectro_mean, st.spectro_std);
    return st;
}

std::pair<double, double> metrics(const std::vector<int>& predictions,
                                  const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("metrics: prediction/label count mismatch");
    if (predictions.empty()) throw std::invalid_argument("metrics: empty input");
    int correct = 0;
    for (size_t i = 0; i < labels.size(); ++i)
        if (predictions[i] == labels[i]) ++correct;
    double accuracy = 100.0 * correct / static_cast<double>(labels.size());

    double f1_sum = 0.0;
    for (int cls = 0; cls < 2; ++cls) {
        int tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < labels.size(); ++i) {
            bool p = predictions[i] == cls, y = labels[i] == cls;
            if (p && y) ++tp;
            if (p && !y) ++fp;
            if (!p && y) ++fn;
        }
        double denom = 2.0 * tp + fp + fn;
        // a class absent from both labels and predictions is vacuously perfect
        f1_sum += denom == 0.0 ? 1.0 : 2.0 * tp / denom;
    }
    return {accuracy, 100.0 * f1_sum / 2.0};
}

void RunMetrics::finalize() {
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double acc = 0.0;
        for (double x : v) acc += (x - mean) * (x - mean);
        sd = v.size() > 1 ? std::sqrt(acc / static_cast<double>(v.size() - 1)) : 0.0;
    };
    std::vector<double> accs, f1s;
    for (const auto& f : folds) {
        accs.push_back(f.accuracy);
        f1s.push_back(f.f1);
    }
    mean_std(accs, mean_accuracy, std_accuracy);
    mean_std(f1s, mean_f1, std_f1);
}

std::string RunMetrics::summary() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "accuracy %.2f(%.2f), F1 %.2f(%.2f)", mean_accuracy,
                  std_accuracy, mean_f1, std_f1);
    return buf;
}

void ConflictLog::save_csv(const std::string& path) const {
    auto os = binio::open_out(path);
    os << "epoch,batch,pair,cosine,conflict\n";
    os.precision(10);
    for (const auto& e : events_)
        os << e.epoch << "," << e.batch << "," << e.pair << "," << e.cosine << ","
           << (e.conflict ? 1 : 0) << "\n";
}

ConflictLog ConflictLog::load_csv(const std::string& path) {
    auto is = binio::open_in(path);
    std::string line;
    if (!std::getline(is, line) || line.rfind("epoch,batch,pair", 0) != 0)
        throw std::runtime_error("conflict log " + path + ": bad header");
    ConflictLog log;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        ConflictEvent e;
        std::string tok;
        std::getline(ss, tok, ',');
        e.epoch = std::stoi(tok);
        std::getline(ss, tok, ',');
        e.batch = std::stoi(tok);
        std::getline(ss, e.pair, ',');
        std::getline(ss, tok, ',');
        e.cosine = std::stod(tok);
        std::getline(ss, tok, ',');
        e.conflict = tok == "1";
        log.append(e);
    }
    if (log.events().empty()) throw std::runtime_error("conflict log " + path + ": no events");
    return log;
}

std::map<std::string, std::map<int, double>> conflict_report(const ConflictLog& log) {
    if (log.events().empty()) throw std::invalid_argument("conflict_report: empty log");
    std::map<std::string, std::map<int, std::pair<int, int>>> counts;  // pair -> epoch -> (hits, total)
    for (const auto& e : log.events()) {
        auto& c = counts[e.pair][e.epoch];
        c.second++;
        if (e.conflict) c.first++;
    }
    std::map<std::string, std::map<int, double>> out;
    for (const auto& [pair, epochs] : counts)
        for (const auto& [epoch, c] : epochs)
            out[pair][epoch] = static_cast<double>(c.first) / c.second;
    return out;
}

void save_conflict_report_csv(const std::map<std::string, std::map<int, double>>& report,
                              const std::string& path) {
    auto os = binio::open_out(path);
    os << "epoch,pair,conflict_fraction\n";
    os.precision(10);
    std::set<int> epochs;
    for (const auto& [pair, m] : report)
        for (const auto& [e, f] : m) epochs.insert(e);
    for (int e : epochs)
        for (const auto& [pair, m] : report) {
            auto it = m.find(e);
            if (it != m.end()) os << e << "," << pair << "," << it->second << "\n";
        }
}

std::pair<feat::FeatureSet, feat::FeatureSet> split_train_val(const feat::FeatureSet& items,
                                                              double val_fraction, uint64_t seed) {
    feat::FeatureSet tr = items, va = items;
    tr.items.clear();
    va.items.clear();
    std::vector<int> by_class[2];
    for (size_t i = 0; i < items.items.size(); ++i)
        by_class[items.items[i].label == 1 ? 1 : 0].push_back(static_cast<int>(i));
    std::mt19937_64 rng(mix64(seed ^ 0x0a11d0a7ull));
    std::set<int> val_idx;
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        size_t n_val = static_cast<size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
        for (size_t i = 0; i < n_val; ++i) val_idx.insert(idx[i]);
    }
    for (size_t i = 0; i < items.items.size(); ++i) {
        if (val_idx.count(static_cast<int>(i)))
            va.items.push_back(items.items[i]);
        else
            tr.items.push_back(items.items[i]);
    }
    return {tr, va};
}

namespace {

struct StepContext {
    model::GeegaNet& net;
    const TrainConfig& cfg;
    std::vector<double> labels_d;
    std::vector<int> labels_i;

    // built per batch
    Tape tape;
    model::GeegaNet::Binding binding;
    model::ForwardOutputs fwd;
    BatchLosses losses;
};

// six (or fewer) loss terms grouped by domain; names are stable for reporting
BatchLosses build_losses(Tape& t, model::GeegaNet& net, const model::ForwardOutputs& fwd,
                         const std::vector<double>& labels_d, const std::vector<int>& labels_i,
                         const TrainConfig& cfg) {
    BatchLosses bl;
    const auto& mc = cfg.model;
    auto group = [&](Var bce, Var git) {
        return cfg.use_git ? diff::ops::add(t, bce, git) : bce;
    };
    if (mc.use_topo) {
        Var bce = loss::bce_with_logits(t, fwd.logit_topo, labels_d);
        bl.terms.emplace_back("bce_topo", bce);
        if (cfg.use_git) {
            Var git = loss::git_loss(t, fwd.e_freq, labels_i,
                                     net.params().at(net.centers_topo).value);
            bl.terms.emplace_back("git_topo", git);
            bl.topo_group = group(bce, git);
        } else {
            bl.topo_group = bce;
        }
    }
    if (mc.use_spectro) {
        Var bce = loss::bce_with_logits(t, fwd.logit_spectro, labels_d);
        bl.terms.emplace_back("bce_spectro", bce);
        if (cfg.use_git) {
            Var git = loss::git_loss(t, fwd.e_timefreq, labels_i,
                                     net.params().at(net.centers_spectro).value);
            bl.terms.emplace_back("git_spectro", git);
            bl.spectro_group = group(bce, git);
        } else {
            bl.spectro_group = bce;
        }
    }
    {
        Var bce = loss::bce_with_logits(t, fwd.logit_gcn, labels_d);
        bl.terms.emplace_back("bce_gcn", bce);
        if (cfg.use_git) {
            Var git = loss::git_loss(t, fwd.e_gcn, labels_i,
                                     net.params().at(net.centers_gcn).value);
            bl.terms.emplace_back("git_gcn", git);
            bl.gcn_group = group(bce, git);
        } else {
            bl.gcn_group = bce;
        }
    }
    return bl;
}

std::vector<std::string> required_terms(const TrainConfig& cfg) {
    std::vector<std::string> req;
    if (cfg.model.use_topo) req.push_back("bce_topo");
    if (cfg.model.use_spectro) req.push_back("bce_spectro");
    req.push_back("bce_gcn");
    if (cfg.use_git) {
        if (cfg.model.use_topo) req.push_back("git_topo");
        if (cfg.model.use_spectro) req.push_back("git_spectro");
        req.push_back("git_gcn");
    }
    return req;
}

}  // namespace

EvalResult evaluate(model::GeegaNet& net, const feat::FeatureSet& data, const DomainStats& stats,
                    const TrainConfig& cfg) {
    if (data.items.empty()) throw std::invalid_argument("evaluate: empty set");
    EvalResult out;
    std::mt19937_64 rng(0);  // unused in eval mode
    std::vector<int> labels;
    double loss_acc = 0.0;
    int batches = 0;
    const int bsz = std::max(1, cfg.batch);
    for (size_t start = 0; start < data.items.size(); start += static_cast<size_t>(bsz)) {
        std::vector<int> idx;
        for (size_t i = start; i < std::min(start + static_cast<size_t>(bsz), data.items.size()); ++i)
            idx.push_back(static_cast<int>(i));
        std::vector<double> yb_d;
        std::vector<int> yb_i;
        for (int i : idx) {
            yb_d.push_back(data.items[static_cast<size_t>(i)].label);
            yb_i.push_back(data.items[static_cast<size_t>(i)].label);
            labels.push_back(data.items[static_cast<size_t>(i)].label);
        }
        Tensor topo = cfg.model.use_topo
                          ? assemble(data, idx, true, stats.topo_mean, stats.topo_std)
                          : Tensor{};
        Tensor spectro = cfg.model.use_spectro
                             ? assemble(data, idx, false, stats.spectro_mean, stats.spectro_std)
                             : Tensor{};
        Tape t;
        auto binding = net.bind(t);
        auto fwd = net.forward(t, binding, topo, spectro, false, rng);
        auto bl = build_losses(t, net, fwd, yb_d, yb_i, cfg);
        auto total = loss::total_loss(t, bl.terms, required_terms(cfg));
        loss_acc += t.val(total.node).item();
        ++batches;
        const Tensor& z = t.val(fwd.logit_gcn);
        const double* pz = z.data();
        for (int64_t i = 0; i < z.size(); ++i)
            out.predictions.push_back(1.0 / (1.0 + std::exp(-pz[i])) >= 0.5 ? 1 : 0);
    }
    out.loss = loss_acc / batches;
    auto [acc, f1] = metrics(out.predictions, labels);
    out.accuracy = acc;
    out.f1 = f1;
    return out;
}

TrainedFold train_fold(const feat::FeatureSet& train_set, const feat::FeatureSet& val_set,
                       const TrainConfig& cfg, ConflictLog* log, int fold_index) {
    if (train_set.items.empty() || val_set.items.empty())
        throw std::invalid_argument("train_fold: empty train or validation split");

    TrainedFold fold;
    uint64_t fold_seed = mix64(cfg.seed ^ mix64(0xf01d0000ull + static_cast<uint64_t>(fold_index)));
    fold.net = std::make_shared<model::GeegaNet>(cfg.model, fold_seed);
    fold.stats = cfg.normalize ? compute_stats(train_set) : DomainStats{};
    fold.result.fold = fold_index;

    model::GeegaNet& net = *fold.net;
    diff::AdamConfig ac;
    ac.lr = cfg.lr;
    ac.weight_decay = cfg.weight_decay;
    ac.decoupled = cfg.adam_decoupled;
    diff::Adam adam(net.params(), ac);
    diff::LrSchedule schedule(cfg.warmup_epochs, cfg.plateau_factor, cfg.plateau_patience);

    std::mt19937_64 shuffle_rng(mix64(fold_seed ^ 0x51a0ff1eull));
    std::mt19937_64 dropout_rng(mix64(fold_seed ^ 0xd4090c7eull));

    const bool pair_topo = cfg.model.use_topo;
    const bool pair_spectro = cfg.model.use_spectro;

    std::vector<double> best_snapshot;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<int> order(train_set.items.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochRecord rec;
        rec.fold = fold_index;
        rec.epoch = epoch;
        rec.lr_multiplier = schedule.multiplier(epoch);
        std::map<std::string, std::pair<int, int>> conflicts;  // pair -> (hits, total)
        int batches = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                     start + static_cast<size_t>(cfg.batch),
                                                     order.size())));
            std::vector<double> yb_d;
            std::vector<int> yb_i;
            for (int i : idx) {
                yb_d.push_back(train_set.items[static_cast<size_t>(i)].label);
                yb_i.push_back(train_set.items[static_cast<size_t>(i)].label);
            }
            Tensor topo = cfg.model.use_topo ? assemble(train_set, idx, true, fold.stats.topo_mean,
                                                        fold.stats.topo_std)
                                             : Tensor{};
            Tensor spectro = cfg.model.use_spectro
                                 ? assemble(train_set, idx, false, fold.stats.spectro_mean,
                                            fold.stats.spectro_std)
                                 : Tensor{};

            Tape t;
            auto binding = net.bind(t);
            auto fwd = net.forward(t, binding, topo, spectro, true, dropout_rng);
            auto bl = build_losses(t, net, fwd, yb_d, yb_i, cfg);

            for (const auto& [name, var] : bl.terms) {
                double v = t.val(var).item();
                if (!std::isfinite(v))
                    throw std::runtime_error("training aborted: loss term '" + name +
                                             "' is not finite at epoch " + std::to_string(epoch) +
                                             ", batch " + std::to_string(batches));
                rec.loss_terms[name] += v;
            }

            // per-group backward passes; the accumulated sum is the raw total
            net.params().zero_grad();
            GradientVector g_topo, g_spectro, g_gcn_topo, g_gcn_spectro;
            if (pair_topo) {
                t.backward(bl.topo_group);
                g_topo = tape_grad_of(net, t, binding, Component::TopoEncoder);
                net.accumulate_grads(t, binding);
            }
            if (pair_spectro) {
                t.backward(bl.spectro_group);
                g_spectro = tape_grad_of(net, t, binding, Component::SpectroEncoder);
                net.accumulate_grads(t, binding);
            }
            {
                t.backward(bl.gcn_group);
                if (pair_topo) g_gcn_topo = tape_grad_of(net, t, binding, Component::TopoEncoder);
                if (pair_spectro)
                    g_gcn_spectro = tape_grad_of(net, t, binding, Component::SpectroEncoder);
                net.accumulate_grads(t, binding);
            }

            if (cfg.track_conflicts) {
                auto handle_pair = [&](const std::string& name, const GradientVector& g_gcn,
                                       const GradientVector& g_dom, Component comp) {
                    auto rec_c = loss::detect_conflict(g_gcn, g_dom);
                    rec_c.epoch = epoch;
                    rec_c.batch = batches;
                    rec_c.pair = name;
                    if (log)
                        log->append({epoch, batches, name, rec_c.cosine, rec_c.conflict});
                    auto& cc = conflicts[name];
                    cc.second++;
                    if (rec_c.conflict) cc.first++;
                    if (cfg.use_align && rec_c.conflict) {
                        auto w = loss::pareto_weights(g_gcn, g_dom);
                        auto h = loss::aligned_gradient(g_gcn, g_dom, w);
                        loss::replace_gradient(net.params(), comp, h);
                    }
                };
                if (pair_topo)
                    handle_pair("GCN-topo", g_gcn_topo, g_topo, Component::TopoEncoder);
                if (pair_spectro)
                    handle_pair("GCN-spectro", g_gcn_spectro, g_spectro, Component::SpectroEncoder);
            }

            adam.step(net.params(), schedule.multiplier(epoch));

            if (cfg.use_git) {
                auto update_site = [&](int center_idx, Var emb) {
                    loss::update_centers_ema(net.params().at(center_idx).value, t.val(emb), yb_i,
                                             cfg.center_gamma);
                };
                if (cfg.model.use_topo) update_site(net.centers_topo, fwd.e_freq);
                if (cfg.model.use_spectro) update_site(net.centers_spectro, fwd.e_timefreq);
                update_site(net.centers_gcn, fwd.e_gcn);
            }
            ++batches;
        }

        for (auto& [name, v] : rec.loss_terms) v /= batches;
        rec.total_loss = 0.0;
        for (const auto& [name, v] : rec.loss_terms) rec.total_loss += v;
        for (const auto& [name, c] : conflicts)
            rec.conflict_fraction[name] = static_cast<double>(c.first) / c.second;

        EvalResult val = evaluate(net, val_set, fold.stats, cfg);
        rec.val_loss = val.loss;
        schedule.observe(epoch, val.loss);
        fold.result.epochs.push_back(rec);

        if (cfg.metric_best_val && val.loss < best_val) {
            best_val = val.loss;
            best_snapshot.clear();
            for (int i = 0; i < net.params().count(); ++i) {
                const double* p = net.params().at(i).value.data();
                best_snapshot.insert(best_snapshot.end(), p, p + net.params().at(i).value.size());
            }
        }
    }

    if (cfg.metric_best_val && !best_snapshot.empty()) {
        size_t off = 0;
        for (int i = 0; i < net.params().count(); ++i) {
            double* p = net.params().at(i).value.data();
            for (int64_t j = 0; j < net.params().at(i).value.size(); ++j)
                p[j] = best_snapshot[off++];
        }
    }
    return fold;
}

RunMetrics loso(const feat::FeatureSet& all, const TrainConfig& cfg, ConflictLog* log,
                const FoldSink& sink) {
    auto subjects = subjects_of(all);
    if (subjects.size() < 2)
        throw std::invalid_argument("loso: need at least 2 subjects, got " +
                                    std::to_string(subjects.size()));
    RunMetrics run;
    for (size_t f = 0; f < subjects.size(); ++f) {
        feat::FeatureSet test = all, rest = all;
        test.items.clear();
        rest.items.clear();
        for (const auto& item : all.items)
            (item.subject_id == subjects[f] ? test : rest).items.push_back(item);
        auto [tr, va] = split_train_val(rest, cfg.val_fraction, mix64(cfg.seed) ^ f);
        TrainedFold fold = train_fold(tr, va, cfg, log, static_cast<int>(f));
        EvalResult ev = evaluate(*fold.net, test, fold.stats, cfg);
        fold.result.test_subject = subjects[f];
        fold.result.accuracy = ev.accuracy;
        fold.result.f1 = ev.f1;
        run.folds.push_back(fold.result);
        if (sink) sink(static_cast<int>(f), fold);
    }
    run.finalize();
    return run;
}

}  // namespace geega::train
