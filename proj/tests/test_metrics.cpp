#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tabsynth/metrics.hpp>
#include <tabsynth/rng.hpp>

#include <cmath>
#include <vector>

using namespace tabsynth;
using metrics::Mat;

namespace {

TabularDataset make_dataset(const Mat& x, const Eigen::VectorXi& y) {
    TabularDataset ds;
    ds.features = x;
    ds.labels = y;
    for (int j = 0; j < x.cols(); ++j) {
        ds.schema.names.push_back("f" + std::to_string(j));
        bool binary = true;
        for (int i = 0; i < x.rows(); ++i)
            if (x(i, j) != 0.0 && x(i, j) != 1.0) binary = false;
        ds.schema.kinds.push_back(binary ? FeatureKind::binary
                                         : FeatureKind::continuous);
    }
    ds.validate();
    return ds;
}

TabularDataset random_binary_dataset(Rng& rng, int n, int d) {
    Mat x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            x(i, j) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Eigen::VectorXi y(n);
    for (int i = 0; i < n; ++i) y(i) = i % 2;
    return make_dataset(x, y);
}

// Independent evaluation of every utility definition straight from the
// counts, with AUC by explicit positive/negative pair counting.
metrics::UtilityScores oracle_scores(long tp, long fp, long fn, long tn) {
    metrics::UtilityScores u;
    double TP = double(tp), FP = double(fp), FN = double(fn), TN = double(tn);
    double n = TP + FP + FN + TN;
    u.accuracy = n == 0 ? 0 : (TP + TN) / n;
    u.precision = (TP + FP) == 0 ? 0 : TP / (TP + FP);
    u.recall = (TP + FN) == 0 ? 0 : TP / (TP + FN);
    u.f1 = (u.precision + u.recall) == 0
               ? 0
               : 2 * u.precision * u.recall / (u.precision + u.recall);
    double den = std::sqrt((TP + FP) * (TP + FN) * (TN + FP) * (TN + FN));
    u.mcc = den == 0 ? 0 : (TP * TN - FP * FN) / den;
    // scores are 1 for predicted-positive rows and 0 otherwise, so AUC
    // reduces to pair counting with half-credit ties.
    double pos = TP + FN, neg = FP + TN;
    u.auc = (pos == 0 || neg == 0)
                ? 0
                : (TP * TN + 0.5 * TP * FP + 0.5 * FN * TN) / (pos * neg);
    return u;
}

} // namespace

TEST_CASE("confusion pinned examples") {
    Eigen::VectorXi t(4), p(4);
    t << 1, 1, 0, 0;
    p << 1, 1, 0, 0;
    auto cm = metrics::confusion(t, p);
    CHECK(cm.tp == 2);
    CHECK(cm.tn == 2);
    CHECK(cm.fp == 0);
    CHECK(cm.fn == 0);

    Eigen::VectorXi t2(2), p2(2);
    t2 << 1, 0;
    p2 << 1, 1;
    auto cm2 = metrics::confusion(t2, p2);
    CHECK(cm2.tp == 1);
    CHECK(cm2.fp == 1);

    Rng rng(8);
    Eigen::VectorXi tr(31), pr(31);
    for (int i = 0; i < 31; ++i) {
        tr(i) = int(rng.below(2));
        pr(i) = int(rng.below(2));
    }
    CHECK(metrics::confusion(tr, pr).total() == 31);

    Eigen::VectorXi shorter(3);
    CHECK_THROWS_WITH_AS(metrics::confusion(t, shorter),
                         doctest::Contains("LengthMismatch"), Error);
}

TEST_CASE("utility pinned examples") {
    // perfect predictions with separated scores
    Eigen::VectorXi y(4);
    y << 1, 1, 0, 0;
    Eigen::VectorXd s(4);
    s << 0.9, 0.8, 0.2, 0.1;
    Eigen::VectorXi pred(4);
    for (int i = 0; i < 4; ++i) pred(i) = s(i) >= 0.5;
    auto u = metrics::utility_scores(metrics::confusion(y, pred), y, s);
    CHECK(u.accuracy == 1.0);
    CHECK(u.precision == 1.0);
    CHECK(u.recall == 1.0);
    CHECK(u.f1 == 1.0);
    CHECK(u.auc == 1.0);
    CHECK(u.mcc == 1.0);

    // all-positive predictor, balanced set, constant scores
    Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 0.7);
    Eigen::VectorXi all_one = Eigen::VectorXi::Ones(4);
    auto v = metrics::utility_scores(metrics::confusion(y, all_one), y, flat);
    CHECK(v.accuracy == doctest::Approx(0.5));
    CHECK(v.recall == doctest::Approx(1.0));
    CHECK(v.precision == doctest::Approx(0.5));
    CHECK(v.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(v.mcc == doctest::Approx(0.0));
    CHECK(v.auc == doctest::Approx(0.5));
}

TEST_CASE("utility matches the enumeration oracle on all n=20 tuples") {
    int tuples = 0;
    for (long tp = 0; tp <= 20; ++tp)
        for (long fp = 0; tp + fp <= 20; ++fp)
            for (long fn = 0; tp + fp + fn <= 20; ++fn) {
                long tn = 20 - tp - fp - fn;
                ++tuples;
                // Realize the tuple as labels + thresholdable scores.
                Eigen::VectorXi y(20);
                Eigen::VectorXd s(20);
                int at = 0;
                for (long i = 0; i < tp; ++i, ++at) y(at) = 1, s(at) = 1.0;
                for (long i = 0; i < fn; ++i, ++at) y(at) = 1, s(at) = 0.0;
                for (long i = 0; i < fp; ++i, ++at) y(at) = 0, s(at) = 1.0;
                for (long i = 0; i < tn; ++i, ++at) y(at) = 0, s(at) = 0.0;
                Eigen::VectorXi pred(20);
                for (int i = 0; i < 20; ++i) pred(i) = s(i) >= 0.5;

                auto cm = metrics::confusion(y, pred);
                REQUIRE(cm.tp == tp);
                REQUIRE(cm.fp == fp);
                REQUIRE(cm.fn == fn);
                REQUIRE(cm.tn == tn);

                auto got = metrics::utility_scores(cm, y, s);
                auto want = oracle_scores(tp, fp, fn, tn);
                CHECK(got.accuracy == want.accuracy);
                CHECK(got.precision == want.precision);
                CHECK(got.recall == want.recall);
                CHECK(got.f1 == want.f1);
                CHECK(got.mcc == want.mcc);
                CHECK(got.auc == want.auc);
            }
    CHECK(tuples == 1771);
}

TEST_CASE("auc is invariant under strictly monotone score transforms") {
    Rng rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXi y(30);
        Eigen::VectorXd s(30);
        for (int i = 0; i < 30; ++i) {
            y(i) = int(rng.below(2));
            s(i) = rng.uniform();
            if (rng.uniform() < 0.3) s(i) = 0.5; // inject ties
        }
        y(0) = 0;
        y(1) = 1;
        Eigen::VectorXi pred(30);
        for (int i = 0; i < 30; ++i) pred(i) = s(i) >= 0.5;
        auto cm = metrics::confusion(y, pred);
        double base = metrics::utility_scores(cm, y, s).auc;
        Eigen::VectorXd warped(30);
        for (int i = 0; i < 30; ++i) warped(i) = std::exp(3.0 * s(i)) + 7.0;
        double after = metrics::utility_scores(cm, y, warped).auc;
        CHECK(base == doctest::Approx(after).epsilon(1e-12));
    }
}

TEST_CASE("mcc flips sign when predictions are complemented") {
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        long tp = long(rng.below(8)), fp = long(rng.below(8)),
             fn = long(rng.below(8)), tn = long(rng.below(8));
        if (tp + fp + fn + tn == 0) continue;
        auto a = oracle_scores(tp, fp, fn, tn);
        auto b = oracle_scores(fn, tn, tp, fp); // complemented predictions
        CHECK(a.mcc == doctest::Approx(-b.mcc).epsilon(1e-12));
    }
}

TEST_CASE("distances: identical datasets give exact zeros") {
    Rng rng(21);
    auto real = random_binary_dataset(rng, 60, 6);
    auto d = metrics::dataset_distances(real, real, 5);
    CHECK(d.euclidean == 0.0);
    CHECK(d.manhattan == 0.0);
    CHECK(d.hamming == 0.0);
    CHECK(d.jaccard == 0.0);
    CHECK(d.hellinger == 0.0);
}

TEST_CASE("distances: pinned single-pair values") {
    Mat xr(2, 2), xs(2, 2);
    xr << 0, 0, 0, 0; // class 0 and class 1 rows, both (0,0)
    xs << 1, 1, 1, 1;
    Eigen::VectorXi y(2);
    y << 0, 1;
    auto real = make_dataset(xr, y);
    auto synth = make_dataset(xs, y);
    auto d = metrics::dataset_distances(real, synth, 3);
    CHECK(d.euclidean == doctest::Approx(std::sqrt(2.0)));
    CHECK(d.manhattan == doctest::Approx(2.0));
    CHECK(d.hamming == doctest::Approx(2.0));
    CHECK(d.jaccard == doctest::Approx(1.0));
}

TEST_CASE("distances: error cases") {
    Rng rng(23);
    auto real = random_binary_dataset(rng, 20, 4);
    auto other = random_binary_dataset(rng, 20, 5);
    CHECK_THROWS_WITH_AS(metrics::dataset_distances(real, other, 1),
                         doctest::Contains("SchemaMismatch"), Error);

    // synthetic has class 1, real does not
    Mat xr(2, 2);
    xr << 0, 0, 1, 0;
    Eigen::VectorXi yr(2);
    yr << 0, 0;
    Mat xs(2, 2);
    xs << 0, 1, 1, 1;
    Eigen::VectorXi ys(2);
    ys << 1, 1;
    auto real2 = make_dataset(xr, yr);
    auto synth2 = make_dataset(xs, ys);
    synth2.schema = real2.schema; // align names/kinds
    CHECK_THROWS_WITH_AS(metrics::dataset_distances(real2, synth2, 1),
                         doctest::Contains("ClassAbsent"), Error);
}

TEST_CASE("divergences: identical, pinned js, unit wasserstein") {
    Rng rng(25);
    auto real = random_binary_dataset(rng, 80, 5);
    auto div = metrics::divergence_scores(real, real);
    CHECK(div.js_divergence == doctest::Approx(0.0));
    CHECK(div.wasserstein == doctest::Approx(0.0));
    CHECK(div.mmd <= 1e-9);

    // one binary feature: real all 1, synth half/half -> 0.3113 bits
    Mat xr = Mat::Ones(40, 1);
    Mat xs(40, 1);
    for (int i = 0; i < 40; ++i) xs(i, 0) = i < 20 ? 0.0 : 1.0;
    Eigen::VectorXi y(40);
    for (int i = 0; i < 40; ++i) y(i) = i % 2;
    auto r = make_dataset(xr, y);
    auto s = make_dataset(xs, y);
    s.schema = r.schema;
    auto js = metrics::divergence_scores(r, s);
    CHECK(js.js_divergence == doctest::Approx(0.3113).epsilon(1e-3));

    // real all 0, synth all 1 -> wasserstein 1
    Mat zeros = Mat::Zero(40, 1);
    auto rz = make_dataset(zeros, y);
    auto so = make_dataset(Mat::Ones(40, 1), y);
    so.schema = rz.schema;
    CHECK(metrics::divergence_scores(rz, so).wasserstein ==
          doctest::Approx(1.0));
}

TEST_CASE("mmd production vs bruteforce oracle on 20 random pairs") {
    Rng rng(27);
    for (int trial = 0; trial < 20; ++trial) {
        int m = 10 + int(rng.below(40));
        int n = 10 + int(rng.below(40));
        int d = 1 + int(rng.below(6));
        Mat x = rng.normal_matrix(m, d);
        Mat y = rng.normal_matrix(n, d).array() + 0.3;
        double bw = metrics::median_heuristic_bandwidth(x, y);
        double got = metrics::mmd_rbf(x, y, bw);
        double want = metrics::mmd_bruteforce(x, y, bw);
        CHECK(std::abs(got - want) < 1e-9);
    }
}

TEST_CASE("mmd separates far-apart clusters and vanishes on identical sets") {
    Rng rng(29);
    Mat x = rng.normal_matrix(30, 3);
    CHECK(metrics::mmd_rbf(x, x, metrics::median_heuristic_bandwidth(x, x)) <=
          1e-9);
    Mat y = rng.normal_matrix(30, 3).array() + 10.0;
    double bw = metrics::median_heuristic_bandwidth(x, y);
    CHECK(metrics::mmd_rbf(x, y, bw) > 0.1);
    CHECK(metrics::mmd_bruteforce(x, y, bw) > 0.1);
}

TEST_CASE("flip-noise monotonicity for every distance and divergence") {
    Rng rng(31);
    const int n = 240, d = 8;
    auto real = random_binary_dataset(rng, n, d);

    // Nested flips: a cell flipped at p=0.1 is also flipped at p=0.3.
    Mat u(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) u(i, j) = rng.uniform();

    std::vector<metrics::FidelityScores> runs;
    for (double p : {0.0, 0.1, 0.3}) {
        TabularDataset noisy = real;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                if (u(i, j) < p)
                    noisy.features(i, j) = 1.0 - noisy.features(i, j);
        runs.push_back(metrics::fidelity_scores(real, noisy, 11));
    }

    CHECK(runs[0].euclidean <= 1e-9);
    CHECK(runs[0].js_divergence <= 1e-9);
    for (int step = 0; step + 1 < int(runs.size()); ++step) {
        const auto& a = runs[std::size_t(step)];
        const auto& b = runs[std::size_t(step) + 1];
        CHECK(a.euclidean <= b.euclidean + 1e-12);
        CHECK(a.hellinger <= b.hellinger + 1e-12);
        CHECK(a.manhattan <= b.manhattan + 1e-12);
        CHECK(a.hamming <= b.hamming + 1e-12);
        CHECK(a.jaccard <= b.jaccard + 1e-12);
        CHECK(a.js_divergence <= b.js_divergence + 1e-12);
        CHECK(a.wasserstein <= b.wasserstein + 1e-12);
        CHECK(a.mmd <= b.mmd + 1e-12);
    }
}

TEST_CASE("fidelity json round trip") {
    metrics::FidelityScores f;
    f.euclidean = 1.5;
    f.mmd = 0.25;
    auto back = metrics::FidelityScores::from_json(f.to_json());
    CHECK(back.euclidean == 1.5);
    CHECK(back.mmd == 0.25);
}
