#include <cmath>

#include "doctest.h"

#include "pinrod/grad_check.hpp"
#include "pinrod/rng.hpp"
#include "pinrod/tape.hpp"

using namespace pinrod;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("matmul forward: identity and hand-computed") {
    Tape tape;
    Var I = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
    Var A = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    Var P = tape.matmul(I, A);
    CHECK(tape.val(P).data == std::vector<double>{1, 2, 3, 4});

    Var r = tape.constant(Tensor({1, 2}, {1, 2}));
    Var c = tape.constant(Tensor({2, 1}, {3, 4}));
    Var s = tape.matmul(r, c);
    CHECK(tape.val(s).data[0] == doctest::Approx(11.0).epsilon(0));
}

TEST_CASE("matmul shape mismatch reports both shapes") {
    Tape tape;
    Var a = tape.constant(Tensor::zeros({4, 5}));
    Var b = tape.constant(Tensor::zeros({3, 2}));
    CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                         doctest::Contains("(4x5)"), ContractError);
}

TEST_CASE("matmul gradient vs finite differences on random 4x5 * 5x3") {
    Rng rng(11);
    ParamStore params;
    params.add("A", random_tensor({4, 5}, rng));
    params.add("B", random_tensor({5, 3}, rng));
    auto loss = [&](Tape& tape) {
        return tape.sum(tape.matmul(tape.leaf(params.at("A")), tape.leaf(params.at("B"))));
    };
    auto report = grad_check(loss, params, 1e-5, 1e-6);
    CHECK(report.pass);
}

TEST_CASE("elementwise forward and trivial gradients") {
    Tape tape;
    Var z = tape.constant(Tensor({3}, {0, 0, 0}));
    CHECK(tape.val(tape.sin(z)).data == std::vector<double>{0, 0, 0});

    Var a = tape.constant(Tensor({2}, {1, 2}));
    Var b = tape.constant(Tensor({2}, {3, 4}));
    CHECK(tape.val(tape.add(a, b)).data == std::vector<double>{4, 6});

    // gradient of sum(sin(x)) is cos(x)
    Tensor x({2}, {0.3, -1.1});
    x.requires_grad = true;
    Tape t2;
    Var loss = t2.sum(t2.sin(t2.leaf(x)));
    t2.backward(loss);
    CHECK(x.grad[0] == doctest::Approx(std::cos(0.3)).epsilon(1e-12));
    CHECK(x.grad[1] == doctest::Approx(std::cos(-1.1)).epsilon(1e-12));
}

TEST_CASE("elementwise gradient of sum(sin(x)) vs finite differences") {
    ParamStore params;
    params.add("x", Tensor({2}, {0.3, -1.1}));
    auto loss = [&](Tape& tape) { return tape.sum(tape.sin(tape.leaf(params.at("x")))); };
    auto report = grad_check(loss, params, 1e-5, 1e-8);
    CHECK(report.pass);
}

TEST_CASE("incompatible elementwise shapes rejected") {
    Tape tape;
    Var a = tape.constant(Tensor::zeros({2, 3}));
    Var b = tape.constant(Tensor::zeros({3, 2}));
    CHECK_THROWS_AS(tape.add(a, b), ContractError);
    CHECK_THROWS_AS(tape.mul(a, b), ContractError);
}

TEST_CASE("scalar broadcast works on either side") {
    Tape tape;
    Var a = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    Var s = tape.constant(Tensor::scalar(10));
    CHECK(tape.val(tape.add(a, s)).data == std::vector<double>{11, 12, 13, 14});
    CHECK(tape.val(tape.sub(s, a)).data == std::vector<double>{9, 8, 7, 6});
    CHECK(tape.val(tape.mul(s, a)).data == std::vector<double>{10, 20, 30, 40});
}

TEST_CASE("concat forward, backward and shape contract") {
    Tape tape;
    Var a = tape.constant(Tensor({1, 1}, {1}));
    Var b = tape.constant(Tensor({1, 2}, {2, 3}));
    CHECK(tape.val(tape.concat(a, b)).data == std::vector<double>{1, 2, 3});

    Tensor ta = Tensor::zeros({8, 16});
    Tensor tb = Tensor::zeros({8, 4});
    ta.requires_grad = tb.requires_grad = true;
    Tape t2;
    Var cat = t2.concat(t2.leaf(ta), t2.leaf(tb));
    CHECK(t2.val(cat).shape == Shape{8, 20});
    t2.backward(t2.sum(cat));
    for (double g : ta.grad) CHECK(g == 1.0);
    for (double g : tb.grad) CHECK(g == 1.0);

    Var c = t2.constant(Tensor::zeros({3, 2}));
    Var d = t2.constant(Tensor::zeros({4, 2}));
    CHECK_THROWS_AS(t2.concat(c, d), ContractError);
}

TEST_CASE("mse forward and analytic gradient") {
    Tape tape;
    Var x = tape.constant(Tensor({2}, {1, 2}));
    CHECK(tape.val(tape.mse(x, x)).data[0] == 0.0);

    Tensor pred({2}, {1, 2});
    pred.requires_grad = true;
    Tape t2;
    Var loss = t2.mse(t2.leaf(pred), t2.constant(Tensor({2}, {0, 2})));
    CHECK(t2.val(loss).data[0] == doctest::Approx(0.5).epsilon(0));
    t2.backward(loss);
    CHECK(pred.grad[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pred.grad[1] == 0.0);

    CHECK_THROWS_AS(t2.mse(t2.constant(Tensor::zeros({2})), t2.constant(Tensor::zeros({3}))),
                    ContractError);
}

TEST_CASE("backward requires scalar loss and accumulates across calls") {
    Tensor w({2}, {1.0, 2.0});
    w.requires_grad = true;
    Tape tape;
    Var wv = tape.leaf(w);
    CHECK_THROWS_AS(tape.backward(wv), ContractError);

    Var loss = tape.sum(tape.mul(wv, wv));
    tape.backward(loss);
    CHECK(w.grad[0] == doctest::Approx(2.0));
    CHECK(w.grad[1] == doctest::Approx(4.0));
    tape.backward(loss);  // no zero_grad in between: doubles
    CHECK(w.grad[0] == doctest::Approx(4.0));
    CHECK(w.grad[1] == doctest::Approx(8.0));
}

TEST_CASE("backward on constant-only loss touches no grads") {
    Tensor w({1}, {5.0});
    w.requires_grad = true;
    Tape tape;
    tape.leaf(w);
    Var c = tape.constant(Tensor::scalar(3.0));
    tape.backward(c);
    CHECK(w.grad.empty());
}

TEST_CASE("backward linearity: grad of sum of losses equals sum of grads") {
    Rng rng(5);
    Tensor w = random_tensor({3, 3}, rng);
    w.requires_grad = true;
    Tensor x = random_tensor({2, 3}, rng);
    Tensor y = random_tensor({2, 3}, rng);

    auto build = [&](Tape& tape, bool first, bool second) {
        Var wv = tape.leaf(w);
        Var l1 = tape.mse(tape.matmul(tape.constant(x), wv), tape.constant(y));
        Var l2 = tape.sum(tape.tanh(tape.matmul(tape.constant(y), wv)));
        if (first && second) return tape.add(l1, l2);
        return first ? l1 : l2;
    };

    Tape t1;
    w.ensure_grad();
    w.zero_grad();
    t1.backward(build(t1, true, true));
    std::vector<double> g_joint = w.grad;

    w.zero_grad();
    Tape t2;
    t2.backward(build(t2, true, false));
    Tape t3;
    t3.backward(build(t3, false, true));
    for (std::size_t i = 0; i < g_joint.size(); ++i) {
        CHECK(g_joint[i] == doctest::Approx(w.grad[i]).epsilon(1e-14));
    }
}

TEST_CASE("two-layer sine MLP full gradient vs finite differences") {
    Rng rng(17);
    ParamStore params;
    params.add("W1", random_tensor({3, 8}, rng, -0.5, 0.5));
    params.add("b1", random_tensor({1, 8}, rng, -0.5, 0.5));
    params.add("W2", random_tensor({8, 2}, rng, -0.5, 0.5));
    params.add("b2", random_tensor({1, 2}, rng, -0.5, 0.5));
    Tensor x = random_tensor({6, 3}, rng, -1.0, 1.0);
    Tensor y = random_tensor({6, 2}, rng, -1.0, 1.0);

    auto loss = [&](Tape& tape) {
        Var h = tape.sin(tape.add(tape.matmul(tape.constant(x), tape.leaf(params.at("W1"))),
                                  tape.repeat_rows(tape.leaf(params.at("b1")), 6)));
        Var out = tape.add(tape.matmul(h, tape.leaf(params.at("W2"))),
                           tape.repeat_rows(tape.leaf(params.at("b2")), 6));
        return tape.mse(out, tape.constant(y));
    };
    auto report = grad_check(loss, params, 1e-5, 1e-4);
    INFO(report.to_string());
    CHECK(report.pass);
}

TEST_CASE("every differentiable op passes randomized finite-difference trials") {
    // randomized property check across the op set, >= 100 trials total
    Rng rng(23);
    int trials = 0;
    for (int rep = 0; rep < 15; ++rep) {
        const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(4));
        const std::int64_t k = 1 + static_cast<std::int64_t>(rng.below(4));
        const std::int64_t p = 1 + static_cast<std::int64_t>(rng.below(4));
        ParamStore params;
        params.add("A", random_tensor({m, k}, rng));
        params.add("B", random_tensor({k, p}, rng));
        params.add("C", random_tensor({m, k}, rng));
        params.add("s", random_tensor({1}, rng));
        Tensor target = random_tensor({m, p}, rng);

        std::vector<LossBuilder> builders;
        builders.push_back([&](Tape& t) {
            return t.mse(t.matmul(t.leaf(params.at("A")), t.leaf(params.at("B"))),
                         t.constant(target));
        });
        builders.push_back([&](Tape& t) {
            return t.sum(t.sin(t.add(t.leaf(params.at("A")), t.leaf(params.at("C")))));
        });
        builders.push_back([&](Tape& t) {
            return t.sum(t.tanh(t.mul(t.leaf(params.at("A")), t.leaf(params.at("C")))));
        });
        builders.push_back([&](Tape& t) {
            return t.sum(t.scale(t.sub(t.leaf(params.at("A")), t.leaf(params.at("C"))), -1.7));
        });
        builders.push_back([&](Tape& t) {
            return t.sum(t.mul(t.leaf(params.at("A")), t.leaf(params.at("s"))));
        });
        builders.push_back([&](Tape& t) {
            return t.sum(t.concat(t.leaf(params.at("A")), t.leaf(params.at("C"))));
        });
        builders.push_back([&](Tape& t) {
            return t.mse(t.repeat_rows(t.leaf(params.at("B")), 3),
                         t.constant(Tensor::zeros({3 * k, p})));
        });
        builders.push_back([&](Tape& t) {
            std::vector<Var> parts{t.leaf(params.at("A")), t.leaf(params.at("C"))};
            return t.sum(t.sin(t.stack_rows(parts)));
        });
        for (auto& b : builders) {
            auto report = grad_check(b, params, 1e-5, 1e-4);
            INFO(report.to_string());
            REQUIRE(report.pass);
            ++trials;
        }
    }
    CHECK(trials >= 100);
}

TEST_CASE("ops are bitwise deterministic") {
    Rng rng(31);
    Tensor A = random_tensor({37, 19}, rng);
    Tensor B = random_tensor({19, 23}, rng);
    auto run = [&]() {
        Tape tape;
        Var p = tape.matmul(tape.constant(A), tape.constant(B));
        Var l = tape.mse(tape.sin(p), tape.constant(Tensor::zeros({37, 23})));
        return tape.val(l).data[0];
    };
    const double first = run();
    for (int i = 0; i < 5; ++i) CHECK(run() == first);
}

TEST_CASE("assert_finite pinpoints the first offending index") {
    CHECK_NOTHROW(assert_finite(Tensor({2}, {1.0, 2.0}), "x"));
    CHECK_THROWS_WITH_AS(assert_finite(Tensor({2}, {1.0, std::nan("")}), "x"),
                         doctest::Contains("index 1"), NumericError);
    CHECK_THROWS_WITH_AS(assert_finite(Tensor({1}, {INFINITY}), "x"),
                         doctest::Contains("index 0"), NumericError);
}

TEST_CASE("paramstore serialization round-trips bit-exactly") {
    Rng rng(41);
    ParamStore store;
    store.add("net/w1", random_tensor({7, 5}, rng));
    store.add("net/b1", random_tensor({1, 5}, rng));
    store.add("alpha", random_tensor({16}, rng));

    const std::string prefix = "/tmp/pinrod_test_params";
    store.save(prefix + ".json", prefix + ".bin", R"({"note":"test"})");
    auto [loaded, header] = ParamStore::load(prefix + ".json", prefix + ".bin");
    CHECK(header.find("note") != std::string::npos);
    REQUIRE(loaded.size() == store.size());
    for (const auto& [path, t] : store) {
        REQUIRE(loaded.contains(path));
        CHECK(loaded.at(path).shape == t->shape);
        CHECK(loaded.at(path).data == t->data);  // bit-exact
    }
    CHECK(loaded.content_hash() == store.content_hash());
}

TEST_CASE("paramstore iteration order is sorted and paths unique") {
    ParamStore store;
    store.add("b", Tensor::scalar(1));
    store.add("a", Tensor::scalar(2));
    store.add("c/x", Tensor::scalar(3));
    CHECK(store.paths() == std::vector<std::string>{"a", "b", "c/x"});
    CHECK_THROWS_AS(store.add("a", Tensor::scalar(0)), ContractError);
}
