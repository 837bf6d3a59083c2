#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "geega/params.hpp"
#include "geega/tape.hpp"
#include "oracles.hpp"

using namespace geega;
using diff::Component;
using diff::Tape;
using diff::Tensor;
using diff::Var;
namespace ops = diff::ops;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::normal_distribution<double> g(0.0, scale);
    double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = g(rng);
    return t;
}

// Checks d(scalarized primitive output)/d(inputs) against central differences.
// The scalarization is sum(output * W) with a fixed random W.
void check_gradient(const char* name, std::vector<std::vector<int>> shapes,
                    const std::function<Var(Tape&, std::vector<Var>&)>& apply, uint64_t seed,
                    double rel = 1e-5) {
    INFO("primitive: " << name);
    std::mt19937_64 rng(seed);
    std::vector<Tensor> inputs;
    std::vector<double> flat;
    for (auto& s : shapes) {
        Tensor t = random_tensor(s, rng);
        const double* p = t.data();
        flat.insert(flat.end(), p, p + t.size());
        inputs.push_back(std::move(t));
    }

    Tensor weight;  // fixed scalarizer, built after the first forward sets its shape
    auto run = [&](const std::vector<double>& x, std::vector<std::vector<double>>* grads) {
        Tape t;
        std::vector<Var> vars;
        size_t off = 0;
        for (const auto& in : inputs) {
            Tensor v = Tensor::zeros(in.shape());
            double* p = v.data();
            for (int64_t i = 0; i < v.size(); ++i) p[i] = x[off++];
            vars.push_back(t.leaf(std::move(v), true));
        }
        Var out = apply(t, vars);
        if (weight.empty()) {
            std::mt19937_64 wrng(seed ^ 0xabcdef);
            weight = random_tensor(t.val(out).shape(), wrng);
        }
        Var w = t.leaf(weight, false);
        Var loss = ops::sum_all(t, ops::mul(t, out, w));
        if (grads) {
            t.backward(loss);
            grads->clear();
            for (Var v : vars) {
                std::vector<double> g;
                if (t.has_grad(v)) {
                    const double* p = t.grad(v).data();
                    g.assign(p, p + t.grad(v).size());
                } else {
                    g.assign(static_cast<size_t>(t.val(v).size()), 0.0);
                }
                grads->push_back(std::move(g));
            }
        }
        return t.val(loss).item();
    };

    std::vector<std::vector<double>> ad_grads;
    run(flat, &ad_grads);
    std::vector<double> ad_flat;
    for (const auto& g : ad_grads) ad_flat.insert(ad_flat.end(), g.begin(), g.end());
    auto fd = oracles::fd_gradient([&](const std::vector<double>& x) { return run(x, nullptr); },
                                   flat);
    CHECK(oracles::grads_close(ad_flat, fd, rel, 1e-7));
}

}  // namespace

TEST_CASE("every primitive matches central finite differences") {
    check_gradient("add", {{3, 4}, {3, 4}},
                   [](Tape& t, std::vector<Var>& v) { return ops::add(t, v[0], v[1]); }, 1);
    check_gradient("sub", {{3, 4}, {3, 4}},
                   [](Tape& t, std::vector<Var>& v) { return ops::sub(t, v[0], v[1]); }, 2);
    check_gradient("mul", {{2, 5}, {2, 5}},
                   [](Tape& t, std::vector<Var>& v) { return ops::mul(t, v[0], v[1]); }, 3);
    check_gradient("scale", {{7}},
                   [](Tape& t, std::vector<Var>& v) { return ops::scale(t, v[0], -2.5); }, 4);
    check_gradient("add_bias", {{4, 6}, {6}},
                   [](Tape& t, std::vector<Var>& v) { return ops::add_bias(t, v[0], v[1]); }, 5);
    check_gradient("matmul", {{3, 4}, {4, 5}},
                   [](Tape& t, std::vector<Var>& v) { return ops::matmul(t, v[0], v[1]); }, 6);
    check_gradient("matmul_rhs", {{2, 3, 4}, {4, 5}},
                   [](Tape& t, std::vector<Var>& v) { return ops::matmul_rhs(t, v[0], v[1]); }, 7);
    check_gradient("bmm", {{2, 3, 4}, {2, 4, 2}},
                   [](Tape& t, std::vector<Var>& v) { return ops::bmm(t, v[0], v[1]); }, 8);
    check_gradient("matmul_lhs_const", {{2, 3, 4}},
                   [](Tape& t, std::vector<Var>& v) {
                       Tensor a = Tensor::full({3, 3}, 1.0 / 3.0);
                       return ops::matmul_lhs_const(t, a, v[0]);
                   },
                   9);
    check_gradient("reshape", {{2, 6}},
                   [](Tape& t, std::vector<Var>& v) { return ops::reshape(t, v[0], {3, 4}); }, 10);
    check_gradient("permute", {{2, 3, 4}},
                   [](Tape& t, std::vector<Var>& v) { return ops::permute(t, v[0], {2, 0, 1}); },
                   11);
    check_gradient("permute4", {{2, 3, 2, 4}},
                   [](Tape& t, std::vector<Var>& v) { return ops::permute(t, v[0], {0, 2, 1, 3}); },
                   12);
    check_gradient("concat_last", {{3, 4}, {3, 2}},
                   [](Tape& t, std::vector<Var>& v) { return ops::concat_last(t, v[0], v[1]); },
                   13);
    check_gradient("concat_axis1", {{2, 3, 4}, {2, 2, 4}},
                   [](Tape& t, std::vector<Var>& v) { return ops::concat_axis1(t, v[0], v[1]); },
                   14);
    check_gradient("bcast0", {{3, 4}},
                   [](Tape& t, std::vector<Var>& v) { return ops::bcast0(t, v[0], 5); }, 15);
    check_gradient("select_axis1", {{2, 5, 3}},
                   [](Tape& t, std::vector<Var>& v) { return ops::select_axis1(t, v[0], 2); }, 16);
    check_gradient("mean_axis1", {{2, 5, 3}},
                   [](Tape& t, std::vector<Var>& v) { return ops::mean_axis1(t, v[0]); }, 17);
    check_gradient("relu_off_kink", {{4, 4}},
                   [](Tape& t, std::vector<Var>& v) {
                       // keep values away from the kink so differences are clean
                       return ops::relu(t, ops::add_bias(t, v[0], t.leaf(Tensor::full({4}, 3.0))));
                   },
                   18);
    check_gradient("sigmoid", {{9}},
                   [](Tape& t, std::vector<Var>& v) { return ops::sigmoid(t, v[0]); }, 19);
    check_gradient("softmax_last", {{3, 6}},
                   [](Tape& t, std::vector<Var>& v) { return ops::softmax_last(t, v[0]); }, 20);
    check_gradient("layer_norm", {{4, 7}, {7}, {7}},
                   [](Tape& t, std::vector<Var>& v) {
                       return ops::layer_norm(t, v[0], v[1], v[2]);
                   },
                   21);
    check_gradient("dropout_eval", {{5, 5}},
                   [](Tape& t, std::vector<Var>& v) {
                       std::mt19937_64 rng(0);
                       return ops::dropout(t, v[0], 0.5, rng, false);
                   },
                   22);
    check_gradient("sum_all", {{3, 3}},
                   [](Tape& t, std::vector<Var>& v) {
                       return ops::reshape(t, ops::sum_all(t, v[0]), {1});
                   },
                   23);
    check_gradient("mean_all", {{2, 4}},
                   [](Tape& t, std::vector<Var>& v) { return ops::mean_all(t, v[0]); }, 24);
    check_gradient("transpose_last", {{2, 3, 4}},
                   [](Tape& t, std::vector<Var>& v) { return ops::transpose_last(t, v[0]); }, 25);
}

TEST_CASE("backward of sum(w*w) gives 2w") {
    Tape t;
    Var w = t.leaf(Tensor::from({3}, {1.0, 2.0, 3.0}), true);
    Var loss = ops::sum_all(t, ops::mul(t, w, w));
    t.backward(loss);
    const Tensor& g = t.grad(w);
    CHECK(g[0] == doctest::Approx(2.0));
    CHECK(g[1] == doctest::Approx(4.0));
    CHECK(g[2] == doctest::Approx(6.0));
}

TEST_CASE("a loss independent of a leaf leaves it ungraded") {
    Tape t;
    Var a = t.leaf(Tensor::from({2}, {1.0, 2.0}), true);
    Var b = t.leaf(Tensor::from({2}, {3.0, 4.0}), true);
    Var loss = ops::sum_all(t, ops::mul(t, a, a));
    t.backward(loss);
    CHECK(t.has_grad(a));
    CHECK_FALSE(t.has_grad(b));
}

TEST_CASE("repeated backward calls on the same graph are identical") {
    std::mt19937_64 rng(31);
    Tape t;
    Var x = t.leaf(random_tensor({4, 4}, rng), true);
    Var loss = ops::mean_all(t, ops::sigmoid(t, ops::matmul(t, x, x)));
    t.backward(loss);
    std::vector<double> first(t.grad(x).data(), t.grad(x).data() + 16);
    t.backward(loss);
    for (int i = 0; i < 16; ++i) CHECK(t.grad(x)[i] == first[static_cast<size_t>(i)]);
}

TEST_CASE("three-layer MLP gradient matches finite differences") {
    std::mt19937_64 rng(77);
    std::vector<int> dims = {6, 8, 5, 1};
    std::vector<Tensor> weights, biases;
    std::vector<double> flat;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        Tensor w = random_tensor({dims[l], dims[l + 1]}, rng, 0.5);
        Tensor b = random_tensor({dims[l + 1]}, rng, 0.5);
        const double* pw = w.data();
        flat.insert(flat.end(), pw, pw + w.size());
        const double* pb = b.data();
        flat.insert(flat.end(), pb, pb + b.size());
        weights.push_back(std::move(w));
        biases.push_back(std::move(b));
    }
    Tensor input = random_tensor({3, dims[0]}, rng);
    std::vector<double> labels = {1.0, 0.0, 1.0};

    auto run = [&](const std::vector<double>& x, std::vector<double>* grad) {
        Tape t;
        size_t off = 0;
        std::vector<Var> vars;
        for (size_t l = 0; l < weights.size(); ++l) {
            for (Tensor* src : {&weights[l], &biases[l]}) {
                Tensor v = Tensor::zeros(src->shape());
                double* p = v.data();
                for (int64_t i = 0; i < v.size(); ++i) p[i] = x[off++];
                vars.push_back(t.leaf(std::move(v), true));
            }
        }
        Var h = t.leaf(input);
        for (size_t l = 0; l < weights.size(); ++l) {
            h = ops::add_bias(t, ops::matmul(t, h, vars[2 * l]), vars[2 * l + 1]);
            if (l + 1 < weights.size()) h = ops::sigmoid(t, h);
        }
        Var s = ops::sigmoid(t, h);
        Var y = t.leaf(Tensor::from({3, 1}, labels));
        Var d = ops::sub(t, s, y);
        Var loss = ops::mean_all(t, ops::mul(t, d, d));
        if (grad) {
            t.backward(loss);
            grad->clear();
            for (Var v : vars) {
                const double* p = t.grad(v).data();
                grad->insert(grad->end(), p, p + t.grad(v).size());
            }
        }
        return t.val(loss).item();
    };

    std::vector<double> ad;
    run(flat, &ad);
    auto fd = oracles::fd_gradient([&](const std::vector<double>& x) { return run(x, nullptr); },
                                   flat);
    CHECK(oracles::grads_close(ad, fd, 1e-5, 1e-8));
}

TEST_CASE("backward over a sum of losses equals the sum of per-loss backwards") {
    std::mt19937_64 rng(99);
    Tape t;
    Var x = t.leaf(random_tensor({5, 5}, rng), true);
    Var l1 = ops::mean_all(t, ops::sigmoid(t, x));
    Var l2 = ops::mean_all(t, ops::mul(t, x, x));
    Var sum = ops::add(t, l1, l2);

    t.backward(l1);
    std::vector<double> g1(t.grad(x).data(), t.grad(x).data() + 25);
    t.backward(l2);
    std::vector<double> g2(t.grad(x).data(), t.grad(x).data() + 25);
    t.backward(sum);
    for (int i = 0; i < 25; ++i)
        CHECK(std::abs(t.grad(x)[i] - (g1[static_cast<size_t>(i)] + g2[static_cast<size_t>(i)])) <
              1e-10);
}

TEST_CASE("first Adam step moves a unit-gradient scalar by -lr") {
    diff::ParameterSet ps;
    ps.add("w", Component::Gcn, Tensor::scalar(3.0));
    diff::AdamConfig ac;
    ac.lr = 1e-4;
    diff::Adam adam(ps, ac);
    ps.at(0).grad.data()[0] = 1.0;
    adam.step(ps);
    CHECK(std::abs(ps.at(0).value.item() - (3.0 - 1e-4)) < 1e-10);
}

TEST_CASE("Adam with zero gradient and zero decay leaves parameters unchanged") {
    diff::ParameterSet ps;
    ps.add("w", Component::Gcn, Tensor::from({2}, {1.5, -2.5}));
    diff::Adam adam(ps, {});
    adam.step(ps);
    adam.step(ps);
    CHECK(ps.at(0).value[0] == 1.5);
    CHECK(ps.at(0).value[1] == -2.5);
}

TEST_CASE("identical Adam runs are bit-identical") {
    auto run = [] {
        std::mt19937_64 rng(5);
        diff::ParameterSet ps;
        ps.add("w", Component::Gcn, random_tensor({4, 4}, rng));
        diff::AdamConfig ac;
        ac.weight_decay = 1e-2;
        diff::Adam adam(ps, ac);
        std::normal_distribution<double> g(0.0, 1.0);
        for (int step = 0; step < 20; ++step) {
            double* gr = ps.at(0).grad.data();
            for (int i = 0; i < 16; ++i) gr[i] = g(rng);
            adam.step(ps);
        }
        return std::vector<double>(ps.at(0).value.data(), ps.at(0).value.data() + 16);
    };
    auto a = run(), b = run();
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("learning-rate schedule: warmup then plateau decay") {
    diff::LrSchedule sched(5, 0.1, 5);
    CHECK(sched.multiplier(0) == doctest::Approx(0.2));
    CHECK(sched.multiplier(1) == doctest::Approx(0.4));
    CHECK(sched.multiplier(4) == doctest::Approx(1.0));
    CHECK(sched.multiplier(5) == doctest::Approx(1.0));

    // an improving history keeps the multiplier at 1
    sched.observe(5, 1.0);
    sched.observe(6, 0.9);
    sched.observe(7, 0.8);
    CHECK(sched.multiplier(8) == doctest::Approx(1.0));

    // five consecutive non-improving epochs cut it by the factor
    for (int e = 8; e < 13; ++e) sched.observe(e, 0.8);
    CHECK(sched.multiplier(13) == doctest::Approx(0.1));
}

TEST_CASE("monotonically improving history never decays") {
    diff::LrSchedule sched(5, 0.1, 5);
    for (int e = 5; e < 30; ++e) sched.observe(e, 1.0 / (e + 1));
    CHECK(sched.multiplier(30) == doctest::Approx(1.0));
}

TEST_CASE("gradient flattening order survives save/load") {
    auto build = [] {
        diff::ParameterSet ps;
        ps.add("b.second", Component::TopoEncoder, Tensor::from({2}, {1.0, 2.0}));
        ps.add("a.first", Component::TopoEncoder, Tensor::from({3}, {3.0, 4.0, 5.0}));
        ps.add("other", Component::Gcn, Tensor::from({1}, {9.0}));
        return ps;
    };
    diff::ParameterSet ps = build();
    for (int i = 0; i < ps.count(); ++i) {
        double* g = ps.at(i).grad.data();
        for (int64_t j = 0; j < ps.at(i).grad.size(); ++j)
            g[j] = 10.0 * i + static_cast<double>(j);
    }
    auto flat = ps.flatten_grad(Component::TopoEncoder);
    CHECK(flat.values == std::vector<double>{0.0, 1.0, 10.0, 11.0, 12.0});

    std::string path = "/tmp/geega_test_params.ckpt";
    ps.save(path);
    diff::ParameterSet ps2 = build();
    ps2.load(path);
    CHECK(ps2.flatten_values(Component::TopoEncoder) ==
          ps.flatten_values(Component::TopoEncoder));
    std::remove(path.c_str());
}

TEST_CASE("write_grad round-trips through flatten_grad") {
    diff::ParameterSet ps;
    ps.add("x", Component::SpectroEncoder, Tensor::zeros({2, 2}));
    ps.add("y", Component::SpectroEncoder, Tensor::zeros({3}));
    diff::GradientVector g;
    g.subset = Component::SpectroEncoder;
    g.values = {1, 2, 3, 4, 5, 6, 7};
    ps.write_grad(Component::SpectroEncoder, g);
    auto back = ps.flatten_grad(Component::SpectroEncoder);
    CHECK(back.values == g.values);

    g.values.pop_back();
    CHECK_THROWS(ps.write_grad(Component::SpectroEncoder, g));
}

TEST_CASE("backward requires a scalar loss") {
    Tape t;
    Var x = t.leaf(Tensor::zeros({2, 2}), true);
    Var y = ops::relu(t, x);
    CHECK_THROWS(t.backward(y));
}
