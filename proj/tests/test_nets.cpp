#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tabsynth/nets.hpp>
#include <tabsynth/rng.hpp>

#include <cmath>
#include <vector>

using namespace tabsynth;
using nets::Mat;

TEST_CASE("dense layer shapes and seeded initialization") {
    Rng a(1), b(1), c(2);
    nets::Dense d1(4, 3, nets::Activation::relu, a);
    nets::Dense d2(4, 3, nets::Activation::relu, b);
    nets::Dense d3(4, 3, nets::Activation::relu, c);
    CHECK(d1.W.rows() == 4);
    CHECK(d1.W.cols() == 3);
    CHECK((d1.W.value() - d2.W.value()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d1.W.value() - d3.W.value()).cwiseAbs().maxCoeff() > 0.0);
    // Glorot-uniform bound
    double limit = std::sqrt(6.0 / 7.0);
    CHECK(d1.W.value().cwiseAbs().maxCoeff() <= limit);
    CHECK(d1.b.value().isZero());
}

TEST_CASE("mlp forward shape and activation wiring") {
    Rng rng(3);
    nets::Mlp net({5, 8, 2}, nets::Activation::relu, nets::Activation::sigmoid,
                  rng);
    Mat x = rng.normal_matrix(7, 5);
    Mat y = net.forward_value(x);
    CHECK(y.rows() == 7);
    CHECK(y.cols() == 2);
    CHECK(y.minCoeff() > 0.0);
    CHECK(y.maxCoeff() < 1.0);
    CHECK(net.parameters().size() == 4);
}

TEST_CASE("adam matches a hand-stepped scalar reference") {
    blocks::OptimizerSpec spec;
    spec.kind = blocks::OptimizerKind::adam;
    spec.learning_rate = 0.1;
    spec.beta1 = 0.9;
    spec.beta2 = 0.999;
    spec.epsilon = 1e-8;
    nets::Optimizer opt(spec);

    ad::Var p = ad::param(Mat::Constant(1, 1, 1.0));
    double ref = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 5; ++t) {
        // loss = p^2, grad = 2p (graph side)
        ad::Var loss = ad::sum(ad::square(p));
        std::vector<ad::Var> wrt{p};
        auto g = ad::backward(loss, wrt);
        opt.step(wrt, g);

        // independent scalar reference
        double grad = 2.0 * ref;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        double mhat = m / (1 - std::pow(0.9, t));
        double vhat = v / (1 - std::pow(0.999, t));
        ref -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);

        CHECK(p.value()(0, 0) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("nadam matches a hand-stepped scalar reference") {
    blocks::OptimizerSpec spec;
    spec.kind = blocks::OptimizerKind::nadam;
    spec.learning_rate = 0.05;
    nets::Optimizer opt(spec);

    ad::Var p = ad::param(Mat::Constant(1, 1, 2.0));
    double ref = 2.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 4; ++t) {
        ad::Var loss = ad::sum(ad::square(p));
        std::vector<ad::Var> wrt{p};
        auto g = ad::backward(loss, wrt);
        opt.step(wrt, g);

        double grad = 2.0 * ref;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        double c1 = 1 - std::pow(0.9, t);
        double c2 = 1 - std::pow(0.999, t);
        double look = 0.9 * (m / c1) + (0.1 / c1) * grad;
        ref -= 0.05 * look / (std::sqrt(v / c2) + 1e-8);

        CHECK(p.value()(0, 0) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("sgd with momentum matches reference") {
    blocks::OptimizerSpec spec;
    spec.kind = blocks::OptimizerKind::sgd;
    spec.learning_rate = 0.01;
    spec.beta1 = 0.5;
    nets::Optimizer opt(spec);

    ad::Var p = ad::param(Mat::Constant(1, 1, 3.0));
    double ref = 3.0, vel = 0.0;
    for (int t = 0; t < 5; ++t) {
        ad::Var loss = ad::sum(ad::square(p));
        std::vector<ad::Var> wrt{p};
        auto g = ad::backward(loss, wrt);
        opt.step(wrt, g);

        vel = 0.5 * vel + 2.0 * ref;
        ref -= 0.01 * vel;
        CHECK(p.value()(0, 0) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("adam drives a regression network to low loss") {
    Rng rng(11);
    // Learn y = x * A with a linear net.
    Mat A = rng.normal_matrix(3, 2);
    Mat x = rng.normal_matrix(64, 3);
    Mat y = x * A;

    nets::Mlp net({3, 2}, nets::Activation::linear, nets::Activation::linear,
                  rng);
    blocks::OptimizerSpec spec;
    spec.learning_rate = 0.05;
    nets::Optimizer opt(spec);
    auto params = net.parameters();

    double last = 0.0;
    for (int step = 0; step < 400; ++step) {
        ad::Var loss = ad::mse(net.forward(ad::constant(x)), ad::constant(y));
        auto grads = ad::backward(loss, params);
        opt.step(params, grads);
        last = loss.scalar();
    }
    CHECK(last < 1e-4);
}

TEST_CASE("embedding lookup and gradient routing") {
    Rng rng(5);
    nets::Embedding emb(3, 4, rng);
    ad::Var rows = emb.forward({2, 0, 2});
    CHECK(rows.rows() == 3);
    CHECK((rows.value().row(0) - emb.table.value().row(2)).norm() == 0.0);

    std::vector<ad::Var> wrt{emb.table};
    auto g = ad::backward(ad::sum(rows), wrt);
    // row 2 used twice, row 0 once, row 1 never
    CHECK(g[0].value().row(2).sum() == doctest::Approx(8.0));
    CHECK(g[0].value().row(0).sum() == doctest::Approx(4.0));
    CHECK(g[0].value().row(1).isZero());

    CHECK_THROWS_AS(emb.forward({3}), Error);
}

TEST_CASE("flatten and unflatten round trip") {
    Rng rng(9);
    nets::Mlp net({4, 6, 2}, nets::Activation::tanh, nets::Activation::linear,
                  rng);
    auto params = net.parameters();
    auto blob = nets::flatten(params);
    CHECK(blob.size() == 4 * 6 + 6 + 6 * 2 + 2);

    Mat probe = rng.normal_matrix(3, 4);
    Mat before = net.forward_value(probe);

    // Perturb, then restore from the blob.
    const_cast<ad::Var&>(params[0]).mutable_value().setZero();
    CHECK((net.forward_value(probe) - before).cwiseAbs().maxCoeff() > 0.0);
    nets::unflatten(blob, params);
    CHECK((net.forward_value(probe) - before).cwiseAbs().maxCoeff() == 0.0);

    blob.push_back(1.0);
    CHECK_THROWS_WITH_AS(nets::unflatten(blob, params),
                         doctest::Contains("SchemaMismatch"), Error);
}
