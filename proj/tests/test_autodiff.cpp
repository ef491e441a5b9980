#include "doctest.h"

#include <cmath>

#include "provpt/autodiff.hpp"
#include "provpt/checks.hpp"
#include "provpt/nn.hpp"
#include "provpt/rng.hpp"

using namespace provpt;

namespace {

// Central finite differences on one coordinate of a leaf tensor.
template <typename BuildLoss>
double fd_grad(Tensor& t, int64_t i, BuildLoss build, double h = 1e-5) {
    const double orig = t.values[static_cast<size_t>(i)];
    t.values[static_cast<size_t>(i)] = orig + h;
    const double up = build();
    t.values[static_cast<size_t>(i)] = orig - h;
    const double down = build();
    t.values[static_cast<size_t>(i)] = orig;
    return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("forward_scalar of a constant") {
    Tape t;
    Var v = t.constant({1}, {3.0});
    CHECK(t.forward_scalar(v) == 3.0);
}

TEST_CASE("forward_scalar of a dot product") {
    Tape t;
    Var a = t.constant({2}, {1.0, 2.0});
    Var b = t.constant({2}, {3.0, 4.0});
    CHECK(t.forward_scalar(t.sum(t.mul(a, b))) == 11.0);
}

TEST_CASE("forward_scalar rejects non-scalar roots") {
    Tape t;
    Var a = t.constant({2}, {1.0, 2.0});
    CHECK_THROWS_AS(t.forward_scalar(a), std::invalid_argument);
}

TEST_CASE("two-layer MLP forward matches a straight-line evaluation") {
    Rng rng(0);
    Mlp mlp = Mlp::make(3, 4, 2, rng);
    std::vector<double> x = {0.3, -0.7, 1.1};
    Tape t;
    Var out = mlp.forward(t, t.constant({1, 3}, x));
    Var loss = t.mean(t.mul(out, out));

    // independent straight-line evaluation of the same weights
    auto layer = [&](const std::vector<double>& in, const Tensor& w, const Tensor& b, bool act) {
        std::vector<double> out_v(static_cast<size_t>(w.shape[1]), 0.0);
        for (int64_t j = 0; j < w.shape[1]; ++j) {
            double s = b.values[static_cast<size_t>(j)];
            for (int64_t i = 0; i < w.shape[0]; ++i) s += in[static_cast<size_t>(i)] * w.at(i, j);
            out_v[static_cast<size_t>(j)] = act ? std::tanh(s) : s;
        }
        return out_v;
    };
    std::vector<double> h1 = layer(x, mlp.weights[0], mlp.weights[1], true);
    std::vector<double> h2 = layer(h1, mlp.weights[2], mlp.weights[3], true);
    std::vector<double> y = layer(h2, mlp.weights[4], mlp.weights[5], false);
    double expect = (y[0] * y[0] + y[1] * y[1]) / 2.0;
    CHECK(t.forward_scalar(loss) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("backward of x*y") {
    Tensor x({1}, {2.0}, true);
    Tensor y({1}, {3.0}, true);
    Tape t;
    Var vx = t.leaf(x);
    Var vy = t.leaf(y);
    Var root = t.sum(t.mul(vx, vy));
    t.backward(root);
    CHECK(t.grad(vx)[0] == 3.0);
    CHECK(t.grad(vy)[0] == 2.0);
}

TEST_CASE("gradient of sum(softmax(v)) is zero") {
    Tensor v({1, 5}, {0.3, -1.2, 2.0, 0.0, 0.7}, true);
    Tape t;
    Var lv = t.leaf(v);
    Var root = t.sum(t.softmax(lv));
    t.backward(root);
    for (double g : t.grad(lv)) CHECK(std::fabs(g) < 1e-12);
}

TEST_CASE("double backward without re-forward is a stale-tape error") {
    Tensor x({1}, {2.0}, true);
    Tape t;
    Var vx = t.leaf(x);
    Var root = t.sum(t.mul(vx, vx));
    t.backward(root);
    CHECK_THROWS_AS(t.backward(root), std::runtime_error);
}

TEST_CASE("primitive gradients match finite differences") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a({3, 4}, 0.0, true);
        Tensor b({4, 5}, 0.0, true);
        Tensor g({5}, 0.0, true);
        Tensor be({5}, 0.0, true);
        for (double& v : a.values) v = rng.normal();
        for (double& v : b.values) v = rng.normal();
        for (double& v : g.values) v = 1.0 + 0.1 * rng.normal();
        for (double& v : be.values) v = 0.1 * rng.normal();

        // build once for analytic grads
        Tape t;
        Var va = t.leaf(a);
        Var vb = t.leaf(b);
        Var vg = t.leaf(g);
        Var vbe = t.leaf(be);
        auto graph = [&](Tape& tp, Var A, Var B, Var G, Var BE) {
            Var mm = tp.matmul(A, B);
            Var ln = tp.layer_norm(mm, G, BE);
            Var ge = tp.gelu(ln);
            Var sm = tp.softmax(tp.tanh(ge));
            Var sl = tp.slice(sm, 1, 1, 3);
            Var cat = tp.concat({sl, tp.scale(sl, -0.5)}, 1);
            Var tr = tp.transpose(cat, 0, 1);
            return tp.mean(tp.mul(tr, tr));
        };
        Var root = graph(t, va, vb, vg, vbe);
        t.backward(root);

        auto eval = [&]() {
            Tape tp;
            Var A = tp.leaf(a);
            Var B = tp.leaf(b);
            Var G = tp.leaf(g);
            Var BE = tp.leaf(be);
            return tp.forward_scalar(graph(tp, A, B, G, BE));
        };
        struct LeafRef {
            Tensor* tensor;
            Var var;
        };
        for (LeafRef leaf : {LeafRef{&a, va}, LeafRef{&b, vb}, LeafRef{&g, vg}, LeafRef{&be, vbe}}) {
            const int64_t i = rng.index(leaf.tensor->numel());
            const double fd = fd_grad(*leaf.tensor, i, eval);
            const double an = t.grad(leaf.var)[static_cast<size_t>(i)];
            CHECK(std::fabs(an - fd) <= 1e-4 * std::max(std::fabs(fd), 1e-7) + 1e-9);
        }
    }
}

TEST_CASE("cross-entropy gradient matches finite differences") {
    Rng rng(9);
    Tensor logits({4, 3}, 0.0, true);
    for (double& v : logits.values) v = rng.normal();
    const std::vector<int> labels = {0, 2, 1, 2};
    Tape t;
    Var lv = t.leaf(logits);
    Var loss = t.cross_entropy_logits(lv, labels);
    t.backward(loss);
    auto eval = [&]() {
        Tape tp;
        return tp.forward_scalar(tp.cross_entropy_logits(tp.leaf(logits), labels));
    };
    for (int rep = 0; rep < 6; ++rep) {
        const int64_t i = rng.index(logits.numel());
        const double fd = fd_grad(logits, i, eval);
        CHECK(t.grad(lv)[static_cast<size_t>(i)] == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("backward is linear in the loss combination") {
    Rng rng(17);
    Tensor x({6}, 0.0, true);
    for (double& v : x.values) v = rng.normal();
    const double ca = 1.7, cb = -0.6;

    auto grads = [&](double wa, double wb) {
        Tape t;
        Var vx = t.leaf(x);
        Var l1 = t.sum(t.mul(vx, vx));
        Var l2 = t.sum(t.gelu(vx));
        Var root = t.add(t.scale(l1, wa), t.scale(l2, wb));
        t.backward(root);
        return t.grad(vx);
    };
    const std::vector<double> g1 = grads(1.0, 0.0);
    const std::vector<double> g2 = grads(0.0, 1.0);
    const std::vector<double> gc = grads(ca, cb);
    for (size_t i = 0; i < gc.size(); ++i)
        CHECK(gc[i] == doctest::Approx(ca * g1[i] + cb * g2[i]).epsilon(1e-12));
}

TEST_CASE("identical seeds give bit-identical forward and gradient") {
    auto run = [&]() {
        RandomSetup s = make_random_setup(123);
        Tape t;
        LossForward lf = vit_loss(t, s.model, s.batch.images, s.batch.labels, s.prompts, s.dist);
        t.backward(lf.loss);
        return std::pair<double, std::vector<double>>(t.forward_scalar(lf.loss), t.grad(lf.fwd.prompts));
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}

TEST_CASE("sgd_step basic and momentum recurrence") {
    SUBCASE("single step without momentum") {
        SgdOptimizer opt(SgdConfig{0.1, 0.0, 0.0});
        Tensor p({1}, {1.0});
        opt.step("p", p, {0.5});
        CHECK(p.values[0] == doctest::Approx(0.95));
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        SgdOptimizer opt(SgdConfig{0.1, 0.9, 0.0});
        Tensor p({3}, {1.0, -2.0, 0.25});
        const std::vector<double> before = p.values;
        opt.step("p", p, {0.0, 0.0, 0.0});
        opt.step("p", p, {0.0, 0.0, 0.0});
        CHECK(p.values == before);
    }
    SUBCASE("two momentum steps match the hand-unrolled recurrence") {
        // v1 = g; p1 = p0 - lr*v1; v2 = m*v1 + g; p2 = p1 - lr*v2
        SgdOptimizer opt(SgdConfig{0.1, 0.9, 0.0});
        Tensor p({1}, {1.0});
        opt.step("p", p, {0.5});
        CHECK(p.values[0] == doctest::Approx(0.95).epsilon(1e-15));
        opt.step("p", p, {0.5});
        CHECK(p.values[0] == doctest::Approx(0.95 - 0.1 * (0.9 * 0.5 + 0.5)).epsilon(1e-15));
    }
    SUBCASE("shape mismatch is a contract violation") {
        SgdOptimizer opt(SgdConfig{0.1, 0.0, 0.0});
        Tensor p({2}, {1.0, 2.0});
        CHECK_THROWS_AS(opt.step("p", p, {0.5}), std::invalid_argument);
    }
    SUBCASE("invalid configs are rejected") {
        CHECK_THROWS_AS(SgdOptimizer(SgdConfig{0.0, 0.0, 0.0}), std::invalid_argument);
        CHECK_THROWS_AS(SgdOptimizer(SgdConfig{0.1, 1.0, 0.0}), std::invalid_argument);
        CHECK_THROWS_AS(SgdOptimizer(SgdConfig{0.1, 0.0, -1.0}), std::invalid_argument);
    }
}
