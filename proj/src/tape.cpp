#include "geega/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace geega::diff::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

CMapMat map2(const Tensor& t, int rows, int cols) { return CMapMat(t.data(), rows, cols); }
MapMat map2(Tensor& t, int rows, int cols) { return MapMat(t.data(), rows, cols); }

void check_rank(const Tensor& t, int r, const char* op) {
    if (t.rank() != r)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(r) +
                                    ", got " + t.shape_str());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

// Collapses every axis but the last into rows.
std::pair<int, int> rows_cols(const Tensor& t) {
    int cols = t.dim(t.rank() - 1);
    int rows = static_cast<int>(t.size() / cols);
    return {rows, cols};
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check_same_shape(av, bv, "add");
    Tensor out = Tensor::zeros(av.shape());
    double* o = out.data();
    const double* pa = av.data();
    const double* pb = bv.data();
    for (int64_t i = 0; i < out.size(); ++i) o[i] = pa[i] + pb[i];
    return t.make(std::move(out), {a, b}, [](Tape& tp, int self) {
        const auto& n = tp.node(self);
        tp.accumulate(n.parents[0], n.grad);
        tp.accumulate(n.parents[1], n.grad);
    });
}

Var sub(Tape& t, Var a, Var b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check_same_shape(av, bv, "sub");
    Tensor out = Tensor::zeros(av.shape());
    double* o = out.data();
    const double* pa = av.data();
    const double* pb = bv.data();
    for (int64_t i = 0; i < out.size(); ++i) o[i] = pa[i] - pb[i];
    return t.make(std::move(out), {a, b}, [](Tape& tp, int self) {
        const auto& n = tp.node(self);
        tp.accumulate(n.parents[0], n.grad);
        Tensor neg = Tensor::zeros(n.grad.shape());
        double* d = neg.data();
        const double* g = n.grad.data();
        for (int64_t i = 0; i < neg.size(); ++i) d[i] = -g[i];
        tp.accumulate(n.parents[1], neg);
    });
}

Var mul(Tape& t, Var a, Var b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check_same_shape(av, bv, "mul");
    Tensor out = Tensor::zeros(av.shape());
    double* o = out.data();
    const double* pa = av.data();
    const double* pb = bv.data();
    for (int64_t i = 0; i < out.size(); ++i) o[i] = pa[i] * pb[i];
    return t.make(std::move(out), {a, b}, [](Tape& tp, int self) {
        const auto& n = tp.node(self);
        const Tensor& av = tp.val(Var{n.parents[0]});
        const Tensor& bv = tp.val(Var{n.parents[1]});
        const double* g = n.grad.data();
        Tensor da = Tensor::zeros(av.shape());
        Tensor db = Tensor::zeros(bv.shape());
        double* pda = da.data();
        double* pdb = db.data();
        const double* pa = av.data();
        const double* pb = bv.data();
        for (int64_t i = 0; i < av.size(); ++i) {
            pda[i] = g[i] * pb[i];
            pdb[i] = g[i] * pa[i];
        }
        tp.accumulate(n.parents[0], da);
        tp.accumulate(n.parents[1], db);
    });
}

Var scale(Tape& t, Var a, double c) {
    const Tensor& av = t.val(a);
    Tensor out = Tensor::zeros(av.shape());
    double* o = out.data();
    const double* pa = av.data();
    for (int64_t i = 0; i < out.size(); ++i) o[i] = c * pa[i];
    return t.make(std::move(out), {a}, [c](Tape& tp, int self) {
        const auto& n = tp.node(self);
        Tensor da = Tensor::zeros(n.grad.shape());
        double* d = da.data();
        const double* g = n.grad.data();
        for (int64_t i = 0; i < da.size(); ++i) d[i] = c * g[i];
        tp.accumulate(n.parents[0], da);
    });
}

Var add_bias(Tape& t, Var x, Var b) {
    const Tensor& xv = t.val(x);
    const Tensor& bv = t.val(b);
    check_rank(bv, 1, "add_bias");
    auto [rows, cols] = rows_cols(xv);
    if (cols != bv.dim(0))
        throw std::invalid_argument("add_bias: last dim " + std::to_string(cols) +
                                    " vs bias " + bv.shape_str());
    Tensor out = Tensor::zeros(xv.shape());
    double* o = out.data();
    const double* px = xv.data();
    const double* pb = bv.data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) o[r * cols + c] = px[r * cols + c] + pb[c];
    return t.make(std::move(out), {x, b}, [rows = rows, cols = cols](Tape& tp, int self) {
        const auto& n = tp.node(self);
        tp.accumulate(n.parents[0], n.grad);
        Tensor db = Tensor::zeros({cols});
        double* d = db.data();
        const double* g = n.grad.data();
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) d[c] += g[r * cols + c];
        tp.accumulate(n.parents[1], db);
    });
}

Var matmul(Tape& t, Var a, Var b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check_rank(av, 2, "matmul");
    check_rank(bv, 2, "matmul");
    int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (bv.dim(0) != k)
        throw std::invalid_argument("matmul: inner dims " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out = Tensor::zeros({m, n});
    map2(out, m, n).noalias() = map2(av, m, k) * map2(bv, k, n);
    return t.make(std::move(out), {a, b}, [m, k, n](Tape& tp, int self) {
        const auto& nd = tp.node(self);
        const Tensor& av = tp.val(Var{nd.parents[0]});
        const Tensor& bv = tp.val(Var{nd.parents[1]});
        CMapMat g(nd.grad.data(), m, n);
        Tensor da = Tensor::zeros({m, k});
        Tensor db = Tensor::zeros({k, n});
        map2(da, m, k).noalias() = g * map2(bv, k, n).transpose();
        map2(db, k, n).noalias() = map2(av, m, k).transpose() * g;
        tp.accumulate(nd.parents[0], da);
        tp.accumulate(nd.parents[1], db);
    });
}

Var matmul_rhs(Tape& t, Var x, Var w) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    check_rank(xv, 3, "matmul_rhs");
    check_rank(wv, 2, "matmul_rhs");
    int B = xv.dim(0), N = xv.dim(1), K = xv.dim(2), M = wv.dim(1);
    if (wv.dim(0) != K)
        throw std::invalid_argument("matmul_rhs: inner dims " + xv.shape_str() + " vs " + wv.shape_str());
    Tensor out = Tensor::zeros({B, N, M});
    // [B*N, K] x [K, M] in one shot
    map2(out, B * N, M).noalias() = map2(xv, B * N, K) * map2(wv, K, M);
    return t.make(std::move(out), {x, w}, [B, N, K, M](Tape& tp, int self) {
        const auto& nd = tp.node(self);
        const Tensor& xv = tp.val(Var{nd.parents[0]});
        const Tensor& wv = tp.val(Var{nd.parents[1]});
        CMapMat g(nd.grad.data(), B * N, M);
        Tensor dx = Tensor::zeros({B, N, K});
        Tensor dw = Tensor::zeros({K, M});
        map2(dx, B * N, K).noalias() = g * map2(wv, K, M).transpose();
        map2(dw, K, M).noalias() = map2(xv, B * N, K).transpose() * g;
        tp.accumulate(nd.parents[0], dx);
        tp.accumulate(nd.parents[1], dw);
    });
}

Var matmul_lhs_const(Tape& t, const Tensor& a, Var x) {
    const Tensor& xv = t.val(x);
    check_rank(a, 2, "matmul_lhs_const");
    check_rank(xv, 3, "matmul_lhs_const");
    int B = xv.dim(0), N = xv.dim(1), F = xv.dim(2);
    if (a.dim(0) != N || a.dim(1) != N)
        throw std::invalid_argument("matmul_lhs_const: adjacency " + a.shape_str() +
                                    " vs nodes " + xv.shape_str());
    Tensor out = Tensor::zeros({B, N, F});
    for (int b = 0; b < B; ++b) {
        CMapMat xb(xv.data() + static_cast<int64_t>(b) * N * F, N, F);
        MapMat ob(out.data() + static_cast<int64_t>(b) * N * F, N, F);
        ob.noalias() = map2(a, N, N) * xb;
    }
    Tensor a_copy = a;  // keep adjacency alive for the sweep
    return t.make(std::move(out), {x}, [a_copy, B, N, F](Tape& tp, int self) {
        const auto& nd = tp.node(self);
        Tensor dx = Tensor::zeros({B, N, F});
        for (int b = 0; b < B; ++b) {
            CMapMat gb(nd.grad.data() + static_cast<int64_t>(b) * N * F, N, F);
            MapMat db(dx.data() + static_cast<int64_t>(b) * N * F, N, F);
            db.noalias() = map2(a_copy, N, N).transpose() * gb;
        }
        tp.accumulate(nd.parents[0], dx);
    });
}

Var bmm(Tape& t, Var a, Var b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check_rank(av, 3, "bmm");
    check_rank(bv, 3, "bmm");
    int N = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(2);
    if (bv.dim(0) != N || bv.dim(1) != k)
        throw std::invalid_argument("bmm: " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out = Tensor::zeros({N, m, n});
    for (int i = 0; i < N; ++i) {
        CMapMat ai(av.data() + static_cast<int64_t>(i) * m * k, m, k);
        CMapMat bi(bv.data() + static_cast<int64_t>(i) * k * n, k, n);
        MapMat oi(out.data() + static_cast<int64_t>(i) * m * n, m, n);
        oi.noalias() = ai * bi;
    }
    return t.make(std::move(out), {a, b}, [N, m, k, n](Tape& tp, int self) {
        const auto& nd = tp.node(self);
        const Tensor& av = tp.val(Var{nd.parents[0]});
        const Tensor& bv = tp.val(Var{nd.parents[1]});
        Tensor da = Tensor::zeros({N, m, k});
        Tensor db = Tensor::zeros({N, k, n});
        for (int i = 0; i < N; ++i) {
            CMapMat gi(nd.grad.data() + static_cast<int64_t>(i) * m * n, m, n);
            CMapMat ai(av.data() + static_cast<int64_t>(i) * m * k, m, k);
            CMapMat bi(bv.data() + static_cast<int64_t>(i) * k * n, k, n);
            MapMat dai(da.data() + static_cast<int64_t>(i) * m * k, m, k);
            MapMat dbi(db.data() + static_cast<int64_t>(i) * k * n, k, n);
            dai.noalias() = gi * bi.transpose();
            dbi.noalias() = ai.transpose() * gi;
        }
        tp.accumulate(nd.parents[0], da);
        tp.accumulate(nd.parents[1], db);
    });
}

Var reshape(Tape& t, Var a, std::vector<int> shape) {
    Tensor out = t.val(a).reshaped(shape);
    return t.make(std::move(out), {a}, [](Tape& tp, int self) {
        const auto& n = tp.node(self);
        const Tensor& pv = tp.val(Var{n.parents[0]});
        tp.accumulate(n.parents[0], n.grad.reshaped(pv.shape()));
    });
}

namespace {

std::vector<int64_t> strides_of(const std::vector<int>& shape) {
    std::vector<int64_t> s(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        s[static_cast<size_t>(i)] = s[static_cast<size_t>(i) + 1] * shape[static_cast<size_t>(i) + 1];
    return s;
}

Tensor permute_tensor(const Tensor& in, const std::vector<int>& perm) {
    const auto& ish = in.shape();
    std::vector<int> osh(ish.size());
    for (size_t i = 0; i < perm.size(); ++i) osh[i] = ish[static_cast<size_t>(perm[i])];
    Tensor out = Tensor::zeros(osh);
    auto istr = strides_of(ish);
    auto ostr = strides_of(osh);
    const double* src = in.data();
    double* dst = out.data();
    int r = static_cast<int>(ish.size());
    std::vector<int> idx(static_cast<size_t>(r), 0);
    for (int64_t o = 0; o < out.size(); ++o) {
        int64_t ii = 0;
        for (int d = 0; d < r; ++d) ii += idx[static_cast<size_t>(d)] * istr[static_cast<size_t>(perm[static_cast<size_t>(d)])];
        dst[o] = src[ii];
        for (int d = r - 1; d >= 0; --d) {
            if (++idx[static_cast<size_t>(d)] < osh[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
        }
    }
    return out;
}

}  // namespace

Var permute(Tape& t, Var a, std::vector<int> perm) {
    const Tensor& av = t.val(a);
    if (static_cast<int>(perm.size()) != av.rank())
        throw std::invalid_argument("permute: perm size vs rank");
    Tensor out = permute_tensor(av, perm);
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    return t.make(std::move(out), {a}, [inv](Tape& tp, int self) {
        const auto& n = tp.node(self);
        tp.accumulate(n.parents[0], permute_tensor(n.grad, inv));
    });
}

Var transpose_last(Tape& t, Var a) { return permute(t, a, {0, 2, 1}); }

Var concat_last(Tape& t, Var a, Var b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check_rank(av, 2, "concat_last");
    check_rank(bv, 2, "concat_last");
    int B = av.dim(0), d1 = av.dim(1), d2 = bv.dim(1);
    if (bv.dim(0) != B) throw std::invalid_argument("concat_last: batch mismatch");
    Tensor out = Tensor::zeros({B, d1 + d2});
    double* o = out.data();
    const double* pa = av.data();
    const double* pb = bv.data();
    for (int r = 0; r < B; ++r) {
        std::copy(pa + static_cast<int64_t>(r) * d1, pa + static_cast<int64_t>(r + 1) * d1, o + static_cast<int64_t>(r) * (d1 + d2));
        std::copy(pb + static_cast<int64_t>(r) * d2, pb + static_cast<int64_t>(r + 1) * d2, o + static_cast<int64_t>(r) * (d1 + d2) + d1);
    }
    return t.make(std::move(out), {a, b}, [B, d1, d2](Tape& tp, int self) {
        const auto& n = tp.node(self);
        const double* g = n.grad.data();
        Tensor da = Tensor::zeros({B, d1});
        Tensor db = Tensor::zeros({B, d2});
        double* pa = da.data();
        double* pb = db.data();
        for (int r = 0; r < B; ++r) {
            std::copy(g + static_cast<int64_t>(r) * (d1 + d2), g + static_cast<int64_t>(r) * (d1 + d2) + d1, pa + static_cast<int64_t>(r) * d1);
            std::copy(g + static_cast<int64_t>(r) * (d1 + d2) + d1, g + static_cast<int64_t>(r + 1) * (d1 + d2), pb + static_cast<int64_t>(r) * d2);
        }
        tp.accumulate(n.parents[0], da);
        tp.accumulate(n.parents[1], db);
    });
}

Var concat_axis1(Tape& t, Var a, Var b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    check_rank(av, 3, "concat_axis1");
    check_rank(bv, 3, "concat_axis1");
    int B = av.dim(0), t1 = av.dim(1), t2 = bv.dim(1), D = av.dim(2);
    if (bv.dim(0) != B || bv.dim(2) != D)
        throw std::invalid_argument("concat_axis1: " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out = Tensor::zeros({B, t1 + t2, D});
    double* o = out.data();
    const double* pa = av.data();
    const double* pb = bv.data();
    for (int r = 0; r < B; ++r) {
        std::copy(pa + static_cast<int64_t>(r) * t1 * D, pa + static_cast<int64_t>(r + 1) * t1 * D,
                  o + static_cast<int64_t>(r) * (t1 + t2) * D);
        std::copy(pb + static_cast<int64_t>(r) * t2 * D, pb + static_cast<int64_t>(r + 1) * t2 * D,
                  o + static_cast<int64_t>(r) * (t1 + t2) * D + static_cast<int64_t>(t1) * D);
    }
    return t.make(std::move(out), {a, b}, [B, t1, t2, D](Tape& tp, int self) {
        const auto& n = tp.node(self);
        const double* g = n.grad.data();
        Tensor da = Tensor::zeros({B, t1, D});
        Tensor db = Tensor::zeros({B, t2, D});
        double* pa = da.data();
        double* pb = db.data();
        for (int r = 0; r < B; ++r) {
            std::copy(g + static_cast<int64_t>(r) * (t1 + t2) * D,
                      g + static_cast<int64_t>(r) * (t1 + t2) * D + static_cast<int64_t>(t1) * D,
                      pa + static_cast<int64_t>(r) * t1 * D);
            std::copy(g + static_cast<int64_t>(r) * (t1 + t2) * D + static_cast<int64_t>(t1) * D,
                      g + static_cast<int64_t>(r + 1) * (t1 + t2) * D,
                      pb + static_cast<int64_t>(r) * t2 * D);
        }
        tp.accumulate(n.parents[0], da);
        tp.accumulate(n.parents[1], db);
    });
}

Var bcast0(Tape& t, Var p, int n) {
    const Tensor& pv = t.val(p);
    std::vector<int> osh;
    osh.push_back(n);
    for (int d : pv.shape()) osh.push_back(d);
    Tensor out = Tensor::zeros(osh);
    int64_t stride = pv.size();
    double* o = out.data();
    const double* src = pv.data();
    for (int i = 0; i < n; ++i) std::copy(src, src + stride, o + i * stride);
    return t.make(std::move(out), {p}, [n, stride](Tape& tp, int self) {
        const auto& nd = tp.node(self);
        const Tensor& pv = tp.val(Var{nd.parents[0]});
        Tensor dp = Tensor::zeros(pv.shape());
        double* d = dp.data();
        const double* g = nd.grad.data();
        for (int i = 0; i < n; ++i)
            for (int64_t j = 0; j < stride; ++j) d[j] += g[i * stride + j];
        tp.accumulate(nd.parents[0], dp);
    });
}

Var select_axis1(Tape& t, Var x, int idx) {
    const Tensor& xv = t.val(x);
    check_rank(xv, 3, "select_axis1");
    int B = xv.dim(0), T = xv.dim(1), D = xv.dim(2);
    if (idx < 0 || idx >= T) throw std::invalid_argument("select_axis1: index out of range");
    Tensor out = Tensor::zeros({B, D});
    double* o = out.data();
    const double* px = xv.data();
    for (int b = 0; b < B; ++b)
        std::copy(px + (static_cast<int64_t>(b) * T + idx) * D,
                  px + (static_cast<int64_t>(b) * T + idx) * D + D, o + static_cast<int64_t>(b) * D);
    return t.make(std::move(out), {x}, [B, T, D, idx](Tape& tp, int self) {
        const auto& n = tp.node(self);
        Tensor dx = Tensor::zeros({B, T, D});
        double* d = dx.data();
        const double* g = n.grad.data();
        for (int b = 0; b < B; ++b)
            std::copy(g + static_cast<int64_t>(b) * D, g + static_cast<int64_t>(b + 1) * D,
                      d + (static_cast<int64_t>(b) * T + idx) * D);
        tp.accumulate(n.parents[0], dx);
    });
}

Var mean_axis1(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    check_rank(xv, 3, "mean_axis1");
    int B = xv.dim(0), T = xv.dim(1), D = xv.dim(2);
    Tensor out = Tensor::zeros({B, D});
    double* o = out.data();
    const double* px = xv.data();
    for (int b = 0; b < B; ++b)
        for (int tt = 0; tt < T; ++tt)
            for (int d = 0; d < D; ++d)
                o[static_cast<int64_t>(b) * D + d] += px[(static_cast<int64_t>(b) * T + tt) * D + d] / T;
    return t.make(std::move(out), {x}, [B, T, D](Tape& tp, int self) {
        const auto& n = tp.node(self);
        Tensor dx = Tensor::zeros({B, T, D});
        double* d = dx.data();
        const double* g = n.grad.data();
        for (int b = 0; b < B; ++b)
            for (int tt = 0; tt < T; ++tt)
                for (int dd = 0; dd < D; ++dd)
                    d[(static_cast<int64_t>(b) * T + tt) * D + dd] = g[static_cast<int64_t>(b) * D + dd] / T;
        tp.accumulate(n.parents[0], dx);
    });
}

Var relu(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    Tensor out = Tensor::zeros(xv.shape());
    double* o = out.data();
    const double* px = xv.data();
    for (int64_t i = 0; i < out.size(); ++i) o[i] = px[i] > 0.0 ? px[i] : 0.0;
    return t.make(std::move(out), {x}, [](Tape& tp, int self) {
        const auto& n = tp.node(self);
        const Tensor& xv = tp.val(Var{n.parents[0]});
        Tensor dx = Tensor::zeros(xv.shape());
        double* d = dx.data();
        const double* g = n.grad.data();
        const double* px = xv.data();
        for (int64_t i = 0; i < dx.size(); ++i) d[i] = px[i] > 0.0 ? g[i] : 0.0;
        tp.accumulate(n.parents[0], dx);
    });
}

Var sigmoid(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    Tensor out = Tensor::zeros(xv.shape());
    double* o = out.data();
    const double* px = xv.data();
    for (int64_t i = 0; i < out.size(); ++i) o[i] = 1.0 / (1.0 + std::exp(-px[i]));
    return t.make(std::move(out), {x}, [](Tape& tp, int self) {
        const auto& n = tp.node(self);
        Tensor dx = Tensor::zeros(n.val.shape());
        double* d = dx.data();
        const double* g = n.grad.data();
        const double* s = n.val.data();
        for (int64_t i = 0; i < dx.size(); ++i) d[i] = g[i] * s[i] * (1.0 - s[i]);
        tp.accumulate(n.parents[0], dx);
    });
}

Var softmax_last(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    auto [rows, cols] = rows_cols(xv);
    Tensor out = Tensor::zeros(xv.shape());
    double* o = out.data();
    const double* px = xv.data();
    for (int r = 0; r < rows; ++r) {
        const double* row = px + static_cast<int64_t>(r) * cols;
        double* orow = o + static_cast<int64_t>(r) * cols;
        double mx = row[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            orow[c] = std::exp(row[c] - mx);
            sum += orow[c];
        }
        for (int c = 0; c < cols; ++c) orow[c] /= sum;
    }
    return t.make(std::move(out), {x}, [rows = rows, cols = cols](Tape& tp, int self) {
        const auto& n = tp.node(self);
        Tensor dx = Tensor::zeros(n.val.shape());
        double* d = dx.data();
        const double* g = n.grad.data();
        const double* s = n.val.data();
        for (int r = 0; r < rows; ++r) {
            int64_t off = static_cast<int64_t>(r) * cols;
            double dot = 0.0;
            for (int c = 0; c < cols; ++c) dot += g[off + c] * s[off + c];
            for (int c = 0; c < cols; ++c) d[off + c] = s[off + c] * (g[off + c] - dot);
        }
        tp.accumulate(n.parents[0], dx);
    });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = t.val(x);
    const Tensor& gv = t.val(gamma);
    const Tensor& bv = t.val(beta);
    auto [rows, cols] = rows_cols(xv);
    if (gv.size() != cols || bv.size() != cols)
        throw std::invalid_argument("layer_norm: affine params must match last dim");
    Tensor out = Tensor::zeros(xv.shape());
    Tensor xhat = Tensor::zeros(xv.shape());
    Tensor inv_std = Tensor::zeros({rows});
    double* o = out.data();
    double* xh = xhat.data();
    double* is = inv_std.data();
    const double* px = xv.data();
    const double* pg = gv.data();
    const double* pb = bv.data();
    for (int r = 0; r < rows; ++r) {
        int64_t off = static_cast<int64_t>(r) * cols;
        double mean = 0.0;
        for (int c = 0; c < cols; ++c) mean += px[off + c];
        mean /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) {
            double d = px[off + c] - mean;
            var += d * d;
        }
        var /= cols;
        double inv = 1.0 / std::sqrt(var + eps);
        is[r] = inv;
        for (int c = 0; c < cols; ++c) {
            xh[off + c] = (px[off + c] - mean) * inv;
            o[off + c] = xh[off + c] * pg[c] + pb[c];
        }
    }
    return t.make(std::move(out), {x, gamma, beta},
                  [rows = rows, cols = cols, xhat, inv_std](Tape& tp, int self) {
        const auto& n = tp.node(self);
        const Tensor& gv = tp.val(Var{n.parents[1]});
        const double* g = n.grad.data();
        const double* xh = xhat.data();
        const double* is = inv_std.data();
        const double* pg = gv.data();
        Tensor dx = Tensor::zeros(xhat.shape());
        Tensor dgamma = Tensor::zeros({cols});
        Tensor dbeta = Tensor::zeros({cols});
        double* pdx = dx.data();
        double* pdg = dgamma.data();
        double* pdb = dbeta.data();
        for (int r = 0; r < rows; ++r) {
            int64_t off = static_cast<int64_t>(r) * cols;
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (int c = 0; c < cols; ++c) {
                double dxhat = g[off + c] * pg[c];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xh[off + c];
                pdg[c] += g[off + c] * xh[off + c];
                pdb[c] += g[off + c];
            }
            mean_dxhat /= cols;
            mean_dxhat_xhat /= cols;
            for (int c = 0; c < cols; ++c) {
                double dxhat = g[off + c] * pg[c];
                pdx[off + c] = is[r] * (dxhat - mean_dxhat - xh[off + c] * mean_dxhat_xhat);
            }
        }
        tp.accumulate(n.parents[0], dx);
        tp.accumulate(n.parents[1], dgamma);
        tp.accumulate(n.parents[2], dbeta);
    });
}

Var dropout(Tape& t, Var x, double p, std::mt19937_64& rng, bool training) {
    if (!training || p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const Tensor& xv = t.val(x);
    Tensor mask = Tensor::zeros(xv.shape());
    double* m = mask.data();
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double keep = 1.0 - p;
    for (int64_t i = 0; i < mask.size(); ++i) m[i] = uni(rng) < keep ? 1.0 / keep : 0.0;
    Tensor out = Tensor::zeros(xv.shape());
    double* o = out.data();
    const double* px = xv.data();
    for (int64_t i = 0; i < out.size(); ++i) o[i] = px[i] * m[i];
    return t.make(std::move(out), {x}, [mask](Tape& tp, int self) {
        const auto& n = tp.node(self);
        Tensor dx = Tensor::zeros(n.val.shape());
        double* d = dx.data();
        const double* g = n.grad.data();
        const double* m = mask.data();
        for (int64_t i = 0; i < dx.size(); ++i) d[i] = g[i] * m[i];
        tp.accumulate(n.parents[0], dx);
    });
}

Var sum_all(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    double acc = 0.0;
    const double* px = xv.data();
    for (int64_t i = 0; i < xv.size(); ++i) acc += px[i];
    return t.make(Tensor::scalar(acc), {x}, [](Tape& tp, int self) {
        const auto& n = tp.node(self);
        const Tensor& xv = tp.val(Var{n.parents[0]});
        Tensor dx = Tensor::full(xv.shape(), n.grad.data()[0]);
        tp.accumulate(n.parents[0], dx);
    });
}

Var mean_all(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    int64_t n = xv.size();
    double acc = 0.0;
    const double* px = xv.data();
    for (int64_t i = 0; i < n; ++i) acc += px[i];
    return t.make(Tensor::scalar(acc / static_cast<double>(n)), {x}, [n](Tape& tp, int self) {
        const auto& nd = tp.node(self);
        const Tensor& xv = tp.val(Var{nd.parents[0]});
        Tensor dx = Tensor::full(xv.shape(), nd.grad.data()[0] / static_cast<double>(n));
        tp.accumulate(nd.parents[0], dx);
    });
}

}  // namespace geega::diff::ops
