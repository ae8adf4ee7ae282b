#include <cmath>

#include "doctest.h"
#include "gradient_suite.hpp"
#include "unic/rng.hpp"
#include "unic/tensor.hpp"

using unic::Graph;
using unic::GraphScope;
using unic::Tensor;

namespace {

// Taylor series for erf, independent of std::erf, for pinning gelu values.
double erf_series(double x) {
    double term = x, acc = x;
    for (int n = 1; n < 60; ++n) {
        term *= -x * x / n;
        acc += term / (2 * n + 1);
    }
    return acc * 2.0 / std::sqrt(3.14159265358979323846);
}

double gelu_ref(double x) { return x * 0.5 * (1.0 + erf_series(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("matmul identity and hand product") {
    Tensor I = Tensor::from({1, 0, 0, 1}, {2, 2});
    Tensor A = Tensor::from({3, -1, 2, 5}, {2, 2});
    Tensor P = unic::matmul(I, A);
    CHECK(P.values() == A.values());

    Tensor a = Tensor::from({1, 2}, {1, 2});
    Tensor b = Tensor::from({3, 4}, {2, 1});
    CHECK(unic::matmul(a, b).value() == doctest::Approx(11.0));

    CHECK_THROWS_AS(unic::matmul(a, Tensor::from({1, 2, 3}, {1, 3})),
                    unic::DimensionError);
    try {
        unic::matmul(a, Tensor::from({1, 2, 3}, {1, 3}));
    } catch (const unic::DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[1, 2]") != std::string::npos);
        CHECK(msg.find("[1, 3]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient matches finite differences") {
    unic::SplitMix rng(42);
    Tensor A = gradsuite::random_tensor(rng, {3, 4});
    Tensor B = gradsuite::random_tensor(rng, {4, 2});
    double err = unic::check_gradient(
        [&](const Tensor& x) { return unic::sum(unic::matmul(x, B)); }, A, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("elementwise basics") {
    Tensor x = Tensor::from({2, 3}, {2});
    Tensor z = Tensor::zeros({2});
    CHECK(unic::add(x, z).values() == x.values());
    CHECK(unic::mul(x, Tensor::from({4, 5}, {2})).values() ==
          std::vector<double>{8, 15});
    CHECK_THROWS_AS(unic::add(x, Tensor::from({1, 2, 3}, {3})), unic::DimensionError);
}

TEST_CASE("broadcast add gradient is the column sum of the upstream gradient") {
    Tensor a = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
    Tensor bias = Tensor::from({0.5, -0.5, 1.0}, {3}, true);
    Tensor w = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
    Graph g;
    {
        GraphScope s(g);
        Tensor loss = unic::sum(unic::mul(unic::add(a, bias), w));
        g.backward(loss);
    }
    // column sums of w
    CHECK(bias.grad() == std::vector<double>{5, 7, 9});
}

TEST_CASE("gelu values pinned by erf series") {
    Tensor x = Tensor::from({0.0, 1.0, 2.0}, {3});
    Tensor y = unic::gelu(x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[1] == doctest::Approx(0.841345).epsilon(1e-5));
    CHECK(y.values()[1] == doctest::Approx(gelu_ref(1.0)).epsilon(1e-9));
    CHECK(y.values()[2] == doctest::Approx(gelu_ref(2.0)).epsilon(1e-9));
}

TEST_CASE("layer_norm hand cases") {
    Tensor gamma = Tensor::from({1, 1}, {2});
    Tensor beta = Tensor::from({0, 0}, {2});
    Tensor c = Tensor::from({5, 5}, {1, 2});
    Tensor yc = unic::layer_norm(c, gamma, beta, 1e-12);
    CHECK(std::fabs(yc.values()[0]) < 1e-9);
    CHECK(std::fabs(yc.values()[1]) < 1e-9);

    Tensor r = Tensor::from({1, 3}, {1, 2});
    Tensor yr = unic::layer_norm(r, gamma, beta, 1e-15);
    CHECK(yr.values()[0] == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(yr.values()[1] == doctest::Approx(1.0).epsilon(1e-7));

    CHECK_THROWS_AS(unic::layer_norm(r, Tensor::from({1}, {1}), beta, 1e-6),
                    unic::DimensionError);
}

TEST_CASE("softmax and cross entropy") {
    Tensor t = Tensor::from({0.7, 0.7, 0.7}, {3});
    Tensor st = unic::softmax(t);
    for (double v : st.values()) CHECK(v == doctest::Approx(1.0 / 3));

    CHECK(unic::cross_entropy(Tensor::from({0, 0}, {2}), 0).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(unic::cross_entropy(Tensor::from({0, 0}, {2}), 2),
                    unic::IndexError);

    unic::SplitMix rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor logits = gradsuite::random_tensor(rng, {4, 6}, -8.0, 8.0);
        Tensor s = unic::softmax(logits);
        for (std::size_t r = 0; r < 4; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < 6; ++j) acc += s.values()[r * 6 + j];
            CHECK(std::fabs(acc - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("layer_norm output statistics") {
    unic::SplitMix rng(11);
    Tensor a = gradsuite::random_tensor(rng, {8, 16}, -3.0, 3.0);
    Tensor y = unic::layer_norm(a, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-12);
    for (std::size_t r = 0; r < 8; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t j = 0; j < 16; ++j) m += y.values()[r * 16 + j];
        m /= 16;
        for (std::size_t j = 0; j < 16; ++j) {
            double c = y.values()[r * 16 + j] - m;
            v += c * c;
        }
        v /= 16;
        CHECK(std::fabs(m) < 1e-10);
        CHECK(std::fabs(v - 1.0) < 1e-8);
    }
}

TEST_CASE("reductions and shape round trips") {
    CHECK(unic::mean(Tensor::from({2, 4}, {2})).value() == doctest::Approx(3.0));

    Tensor a = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
    CHECK(unic::transpose(unic::transpose(a)).values() == a.values());

    Tensor c = unic::concat({a, a}, 0);
    CHECK(unic::slice(c, 0, 0, 2).values() == a.values());
    CHECK(unic::slice(c, 0, 2, 2).values() == a.values());

    Tensor cc = unic::concat({a, a}, 1);
    CHECK(unic::slice(cc, 1, 0, 3).values() == a.values());
    CHECK(unic::slice(cc, 1, 3, 3).values() == a.values());

    CHECK(unic::sum(a, 0).values() == std::vector<double>{5, 7, 9});
    CHECK(unic::mean(a, 1).values() == std::vector<double>{2, 5});

    CHECK_THROWS_AS(unic::slice(a, 0, 1, 4), unic::DimensionError);
    CHECK_THROWS_AS(unic::sum(a, 2), unic::DimensionError);
    CHECK_THROWS_AS(unic::reshape(a, {4, 2}), unic::DimensionError);
    CHECK_THROWS_AS(unic::take_rows(a, {2}), unic::IndexError);
}

TEST_CASE("backward basics") {
    Tensor x = Tensor::from({1, -2, 3}, {3}, true);
    {
        Graph g;
        GraphScope s(g);
        Tensor loss = unic::sum(x);
        g.backward(loss);
        CHECK(x.grad() == std::vector<double>{1, 1, 1});
    }
    {
        Graph g;
        GraphScope s(g);
        Tensor loss = unic::sum(unic::mul(x, x));
        g.backward(loss);
        CHECK(x.grad() == std::vector<double>{2, -4, 6});
    }
    {
        Graph g;
        GraphScope s(g);
        Tensor v = unic::mul(x, x);
        CHECK_THROWS_AS(g.backward(v), unic::ContractError);
    }
}

TEST_CASE("graph replay reproduces outputs bitwise and records ops in order") {
    Tensor x = Tensor::from({0.3, -1.2, 0.8, 2.0}, {2, 2}, true);
    Graph g;
    Tensor y;
    {
        GraphScope s(g);
        y = unic::sum(unic::gelu(unic::matmul(x, unic::transpose(x))));
    }
    std::vector<double> before = y.values();
    CHECK(g.num_ops() == 4);
    // inputs precede their consumers
    for (std::size_t i = 0; i < g.num_ops(); ++i)
        for (int in : g.op(i).inputs) CHECK(in <= g.op(i).output);
    g.replay();
    CHECK(y.values() == before);
}

TEST_CASE("no-grad scope and pure forward determinism") {
    Tensor x = Tensor::from({1, 2, 3, 4}, {2, 2}, true);
    Graph g;
    GraphScope s(g);
    {
        unic::NoGradScope ng;
        Tensor y = unic::matmul(x, x);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(g.num_ops() == 0);

    Tensor a = unic::gelu(unic::matmul(x, x));
    Tensor b = unic::gelu(unic::matmul(x, x));
    CHECK(a.values() == b.values());  // bitwise
}

TEST_CASE("check_gradient calibration") {
    unic::SplitMix rng(5);
    Tensor x = gradsuite::random_tensor(rng, {5});
    Tensor w = gradsuite::random_tensor(rng, {5});

    double lin = unic::check_gradient(
        [&](const Tensor& t) { return unic::sum(unic::mul(t, w)); }, x, 1e-5);
    CHECK(lin < 1e-9);

    double ge = unic::check_gradient(
        [&](const Tensor& t) { return unic::sum(unic::gelu(t)); }, x, 1e-5);
    CHECK(ge < 1e-6);

    // Fault injection: capture the argument values as a constant, so the
    // analytic gradient misses half of the true derivative.
    double bad = unic::check_gradient(
        [&](const Tensor& t) {
            Tensor frozen = Tensor::from(t.values(), t.shape());
            return unic::sum(unic::mul(t, frozen));
        },
        x, 1e-5);
    CHECK(bad > 1e-2);
}

TEST_CASE("randomized gradient suite over all ops") {
    for (const auto& r : gradsuite::run_op_suite(20)) {
        INFO(r.name);
        CHECK(r.worst < 1e-4);
    }
}
