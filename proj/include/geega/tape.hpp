#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "geega/tensor.hpp"

namespace geega::diff {

class Tape;

// Handle into a Tape's node arena.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Define-by-run computation graph. Nodes are created in topological order;
// backward() sweeps them in reverse, accumulating adjoints into node grads.
// One tape serves one forward pass; backward may be called repeatedly (each
// call resets the accumulators first, so per-loss gradients stay independent).
class Tape {
public:
    using BackFn = std::function<void(Tape&, int self)>;

    struct Node {
        Tensor val;
        Tensor grad;  // allocated on demand during backward
        std::vector<int> parents;
        BackFn back;
        bool needs_grad = false;
        bool touched = false;  // got a nonzero adjoint this sweep
    };

    Var leaf(Tensor value, bool needs_grad = false) {
        return push(std::move(value), {}, nullptr, needs_grad);
    }

    // Generic node builder for custom ops (used by the loss layer).
    Var make(Tensor value, std::vector<Var> parents, BackFn back) {
        std::vector<int> ids;
        ids.reserve(parents.size());
        bool ng = false;
        for (Var p : parents) {
            ids.push_back(p.id);
            ng = ng || node(p.id).needs_grad;
        }
        return push(std::move(value), std::move(ids), ng ? std::move(back) : nullptr, ng);
    }

    const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].val; }

    const Tensor& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

    bool has_grad(Var v) const {
        const Node& n = nodes_[static_cast<size_t>(v.id)];
        return n.touched && !n.grad.empty();
    }

    // Adds g into v's adjoint. Only meaningful inside backward functions.
    void accumulate(int id, const Tensor& g) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad) return;
        if (n.grad.empty()) n.grad = Tensor::zeros(n.val.shape());
        double* dst = n.grad.data();
        const double* src = g.data();
        for (int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
        n.touched = true;
    }

    // Reverse sweep from a scalar node. Resets all adjoints first.
    void backward(Var loss) {
        Node& root = nodes_[static_cast<size_t>(loss.id)];
        if (root.val.size() != 1)
            throw std::logic_error("Tape::backward: loss must be a scalar node");
        for (Node& n : nodes_) {
            if (!n.grad.empty()) n.grad.fill(0.0);
            n.touched = false;
        }
        if (!root.needs_grad) return;
        if (root.grad.empty()) root.grad = Tensor::zeros(root.val.shape());
        root.grad.data()[0] = 1.0;
        root.touched = true;
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.back && n.touched) n.back(*this, id);
        }
    }

    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }

    void clear() { nodes_.clear(); }

private:
    Var push(Tensor value, std::vector<int> parents, BackFn back, bool needs_grad) {
        Node n;
        n.val = std::move(value);
        n.parents = std::move(parents);
        n.back = std::move(back);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitive ops. All shapes are checked; gradients are exact.
// ---------------------------------------------------------------------------
namespace ops {

Var add(Tape& t, Var a, Var b);                       // same shape
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);                       // elementwise
Var scale(Tape& t, Var a, double c);
Var add_bias(Tape& t, Var x, Var b);                  // x[..,D] + b[D]
Var matmul(Tape& t, Var a, Var b);                    // [m,k]x[k,n]
Var matmul_rhs(Tape& t, Var x, Var w);                // [B,N,K]x[K,M]
Var matmul_lhs_const(Tape& t, const Tensor& a, Var x);// A[N,N]x[B,N,F]
Var bmm(Tape& t, Var a, Var b);                       // [N,m,k]x[N,k,n]
Var reshape(Tape& t, Var a, std::vector<int> shape);
Var permute(Tape& t, Var a, std::vector<int> perm);
Var transpose_last(Tape& t, Var a);                   // 3D (0,2,1)
Var concat_last(Tape& t, Var a, Var b);               // [B,D1],[B,D2]
Var concat_axis1(Tape& t, Var a, Var b);              // [B,T1,D],[B,T2,D]
Var bcast0(Tape& t, Var p, int n);                    // [..] -> [n,..]
Var select_axis1(Tape& t, Var x, int idx);            // [B,T,D] -> [B,D]
Var mean_axis1(Tape& t, Var x);                       // [B,T,D] -> [B,D]
Var relu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var softmax_last(Tape& t, Var x);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
Var dropout(Tape& t, Var x, double p, std::mt19937_64& rng, bool training);
Var sum_all(Tape& t, Var x);                          // -> [1]
Var mean_all(Tape& t, Var x);

}  // namespace ops

}  // namespace geega::diff
