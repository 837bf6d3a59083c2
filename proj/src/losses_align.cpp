#include "geega/losses_align.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace geega::loss {

using diff::GradientVector;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

// stable single-sample BCE on a logit
double bce_one(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

void check_labels_binary(const std::vector<double>& labels) {
    for (double y : labels)
        if (y != 0.0 && y != 1.0)
            throw std::invalid_argument("bce: labels must be 0 or 1 (got " + std::to_string(y) + ")");
}

}  // namespace

double bce_value(const std::vector<double>& logits, const std::vector<double>& labels) {
    if (logits.size() != labels.size())
        throw std::invalid_argument("bce: logit/label count mismatch");
    if (logits.empty()) throw std::invalid_argument("bce: empty batch");
    check_labels_binary(labels);
    double acc = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) acc += bce_one(logits[i], labels[i]);
    return acc / static_cast<double>(logits.size());
}

Var bce_with_logits(Tape& t, Var logits, const std::vector<double>& labels) {
    const Tensor& z = t.val(logits);
    const int64_t n = z.size();
    if (n != static_cast<int64_t>(labels.size()))
        throw std::invalid_argument("bce: logit/label count mismatch (" + std::to_string(n) +
                                    " vs " + std::to_string(labels.size()) + ")");
    check_labels_binary(labels);
    const double* pz = z.data();
    std::vector<double> zs(pz, pz + n);
    double value = bce_value(zs, labels);
    return t.make(Tensor::scalar(value), {logits}, [labels](Tape& tp, int self) {
        const auto& nd = tp.node(self);
        const Tensor& z = tp.val(Var{nd.parents[0]});
        const double g = nd.grad.data()[0];
        const int64_t n = z.size();
        Tensor dz = Tensor::zeros(z.shape());
        double* d = dz.data();
        const double* pz = z.data();
        for (int64_t i = 0; i < n; ++i) {
            double s = 1.0 / (1.0 + std::exp(-pz[i]));
            d[i] = g * (s - labels[static_cast<size_t>(i)]) / static_cast<double>(n);
        }
        tp.accumulate(nd.parents[0], dz);
    });
}

namespace {

void check_git_args(const Tensor& emb, const std::vector<int>& labels, const Tensor& centers) {
    if (emb.rank() != 2) throw std::invalid_argument("git: embeddings must be [B x D]");
    if (centers.rank() != 2 || centers.dim(0) != 2 || centers.dim(1) != emb.dim(1))
        throw std::invalid_argument("git: centers must be [2 x D]");
    if (static_cast<int>(labels.size()) != emb.dim(0))
        throw std::invalid_argument("git: label count mismatch");
    if (labels.empty()) throw std::invalid_argument("git: empty batch");
    for (int y : labels)
        if (y != 0 && y != 1) throw std::invalid_argument("git: labels must be 0 or 1");
}

}  // namespace

double git_value(const Tensor& emb, const std::vector<int>& labels, const Tensor& centers) {
    check_git_args(emb, labels, centers);
    const int b = emb.dim(0), d = emb.dim(1);
    const double* pe = emb.data();
    const double* pc = centers.data();
    int counts[2] = {0, 0};
    for (int y : labels) counts[y]++;

    double center_term = 0.0, pair_term = 0.0;
    for (int i = 0; i < b; ++i) {
        int y = labels[static_cast<size_t>(i)];
        double d_own = 0.0, d_opp = 0.0;
        for (int k = 0; k < d; ++k) {
            double e = pe[static_cast<int64_t>(i) * d + k];
            double down = e - pc[static_cast<int64_t>(y) * d + k];
            double dopp = e - pc[static_cast<int64_t>(1 - y) * d + k];
            d_own += down * down;
            d_opp += dopp * dopp;
        }
        center_term += 0.5 * d_own;
        // every sample j of the other class contributes one ordered pair (i, j)
        pair_term += counts[1 - y] / (1.0 + d_opp);
    }
    return center_term + pair_term;
}

Var git_loss(Tape& t, Var embeddings, const std::vector<int>& labels, const Tensor& centers) {
    const Tensor& emb = t.val(embeddings);
    double value = git_value(emb, labels, centers);
    Tensor centers_copy = centers;
    return t.make(Tensor::scalar(value), {embeddings},
                  [labels, centers_copy](Tape& tp, int self) {
        const auto& nd = tp.node(self);
        const Tensor& emb = tp.val(Var{nd.parents[0]});
        const double g = nd.grad.data()[0];
        const int b = emb.dim(0), d = emb.dim(1);
        const double* pe = emb.data();
        const double* pc = centers_copy.data();
        int counts[2] = {0, 0};
        for (int y : labels) counts[y]++;
        Tensor de = Tensor::zeros(emb.shape());
        double* pd = de.data();
        for (int i = 0; i < b; ++i) {
            int y = labels[static_cast<size_t>(i)];
            double d_opp = 0.0;
            for (int k = 0; k < d; ++k) {
                double dopp = pe[static_cast<int64_t>(i) * d + k] -
                              pc[static_cast<int64_t>(1 - y) * d + k];
                d_opp += dopp * dopp;
            }
            double pair_coef =
                -2.0 * counts[1 - y] / ((1.0 + d_opp) * (1.0 + d_opp));
            for (int k = 0; k < d; ++k) {
                double e = pe[static_cast<int64_t>(i) * d + k];
                double down = e - pc[static_cast<int64_t>(y) * d + k];
                double dopp = e - pc[static_cast<int64_t>(1 - y) * d + k];
                pd[static_cast<int64_t>(i) * d + k] = g * (down + pair_coef * dopp);
            }
        }
        tp.accumulate(nd.parents[0], de);
    });
}

void update_centers_ema(Tensor& centers, const Tensor& embeddings, const std::vector<int>& labels,
                        double gamma) {
    check_git_args(embeddings, labels, centers);
    const int b = embeddings.dim(0), d = embeddings.dim(1);
    const double* pe = embeddings.data();
    for (int cls = 0; cls < 2; ++cls) {
        int n = 0;
        std::vector<double> mean(static_cast<size_t>(d), 0.0);
        for (int i = 0; i < b; ++i) {
            if (labels[static_cast<size_t>(i)] != cls) continue;
            ++n;
            for (int k = 0; k < d; ++k) mean[static_cast<size_t>(k)] += pe[static_cast<int64_t>(i) * d + k];
        }
        if (n == 0) continue;
        double* pc = centers.data();
        for (int k = 0; k < d; ++k)
            pc[static_cast<int64_t>(cls) * d + k] =
                (1.0 - gamma) * pc[static_cast<int64_t>(cls) * d + k] +
                gamma * mean[static_cast<size_t>(k)] / n;
    }
}

TotalLoss total_loss(Tape& t, const std::vector<std::pair<std::string, Var>>& terms,
                     const std::vector<std::string>& required) {
    for (const auto& name : required) {
        bool found = false;
        for (const auto& [n, v] : terms) found = found || n == name;
        if (!found) throw std::invalid_argument("total_loss: missing required term '" + name + "'");
    }
    if (terms.empty()) throw std::invalid_argument("total_loss: no terms");
    TotalLoss out;
    Var acc = terms.front().second;
    out.breakdown.emplace_back(terms.front().first, t.val(acc).item());
    for (size_t i = 1; i < terms.size(); ++i) {
        acc = diff::ops::add(t, acc, terms[i].second);
        out.breakdown.emplace_back(terms[i].first, t.val(terms[i].second).item());
    }
    out.node = acc;
    return out;
}

ConflictRecord detect_conflict(const GradientVector& g1, const GradientVector& g2) {
    if (g1.values.size() != g2.values.size())
        throw std::invalid_argument("detect_conflict: length mismatch");
    ConflictRecord rec;
    double n1 = g1.norm(), n2 = g2.norm();
    if (n1 == 0.0 || n2 == 0.0) {
        rec.cosine = 0.0;  // undefined angle; the <= 0 rule treats it as a conflict
        rec.degenerate = true;
    } else {
        rec.cosine = std::clamp(g1.dot(g2) / (n1 * n2), -1.0, 1.0);
    }
    rec.conflict = rec.cosine <= 0.0;
    return rec;
}

ParetoWeights pareto_weights(const GradientVector& g_gcn, const GradientVector& g_other) {
    if (g_gcn.values.size() != g_other.values.size())
        throw std::invalid_argument("pareto_weights: length mismatch");
    double diff_sq = 0.0, num = 0.0;
    for (size_t i = 0; i < g_gcn.values.size(); ++i) {
        double d = g_gcn.values[i] - g_other.values[i];
        diff_sq += d * d;
        num += -d * g_other.values[i];  // <g_other - g_gcn, g_other>
    }
    ParetoWeights w;
    if (diff_sq == 0.0) {
        w.alpha_gcn = 0.5;  // objective constant in alpha
    } else {
        w.alpha_gcn = std::clamp(num / diff_sq, 0.0, 1.0);
    }
    w.alpha_other = 1.0 - w.alpha_gcn;
    return w;
}

GradientVector aligned_gradient(const GradientVector& g_gcn, const GradientVector& g_other,
                                ParetoWeights w) {
    if (g_gcn.values.size() != g_other.values.size())
        throw std::invalid_argument("aligned_gradient: length mismatch");
    GradientVector h;
    h.subset = g_gcn.subset;
    h.values.resize(g_gcn.values.size());
    for (size_t i = 0; i < h.values.size(); ++i)
        h.values[i] = 2.0 * w.alpha_gcn * g_gcn.values[i] + 2.0 * w.alpha_other * g_other.values[i];
    return h;
}

void replace_gradient(diff::ParameterSet& params, diff::Component subset,
                      const GradientVector& h) {
    params.write_grad(subset, h);
}

}  // namespace geega::loss
