#pragma once

#include <string>
#include <utility>
#include <vector>

#include "geega/params.hpp"
#include "geega/tape.hpp"

namespace geega::loss {

// --- loss terms --------------------------------------------------------------

// Mean over the batch of -[y log s(z) + (1-y) log(1-s(z))], evaluated in the
// overflow-safe logit form. Labels must be 0/1.
diff::Var bce_with_logits(diff::Tape& t, diff::Var logits, const std::vector<double>& labels);
double bce_value(const std::vector<double>& logits, const std::vector<double>& labels);

// Center term plus the pairwise cross-class repulsion:
//   1/2 sum_i |E_i - C_{y_i}|^2  +  sum_{i,j: y_i != y_j} 1 / (1 + |E_i - C_{y_j}|^2)
// Centers are constants here; they move via EMA after each optimizer step.
diff::Var git_loss(diff::Tape& t, diff::Var embeddings, const std::vector<int>& labels,
                   const diff::Tensor& centers);
double git_value(const diff::Tensor& embeddings, const std::vector<int>& labels,
                 const diff::Tensor& centers);

// C_k <- (1 - gamma) C_k + gamma * mean(E_i : y_i = k), classes present only.
void update_centers_ema(diff::Tensor& centers, const diff::Tensor& embeddings,
                        const std::vector<int>& labels, double gamma);

// Scalar sum of named loss terms; every required name must be present.
struct TotalLoss {
    diff::Var node;
    std::vector<std::pair<std::string, double>> breakdown;
};
TotalLoss total_loss(diff::Tape& t, const std::vector<std::pair<std::string, diff::Var>>& terms,
                     const std::vector<std::string>& required);

// --- gradient alignment --------------------------------------------------------

struct ParetoWeights {
    double alpha_gcn = 0.5;
    double alpha_other = 0.5;
};

struct ConflictRecord {
    int epoch = 0;
    int batch = 0;
    std::string pair;
    double cosine = 0.0;
    bool conflict = false;    // cos <= 0
    bool degenerate = false;  // a zero gradient made the cosine undefined
};

ConflictRecord detect_conflict(const diff::GradientVector& g1, const diff::GradientVector& g2);

// Minimizer of |a g1 + (1-a) g2|^2 over a in [0,1]:
//   a* = clip(<g2 - g1, g2> / |g1 - g2|^2, 0, 1),  a* = 1/2 when g1 = g2.
ParetoWeights pareto_weights(const diff::GradientVector& g_gcn,
                             const diff::GradientVector& g_other);

// h = 2 a_gcn g_gcn + 2 a_other g_other (weights keep summing to 2).
diff::GradientVector aligned_gradient(const diff::GradientVector& g_gcn,
                                      const diff::GradientVector& g_other, ParetoWeights w);

// Writes h into the gradient slots of the given subset ahead of the optimizer
// step; every other parameter keeps its raw gradient.
void replace_gradient(diff::ParameterSet& params, diff::Component subset,
                      const diff::GradientVector& h);

}  // namespace geega::loss
