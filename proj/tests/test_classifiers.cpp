#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <tabsynth/classifiers.hpp>
#include <tabsynth/rng.hpp>

#include <algorithm>
#include <numeric>
#include <vector>

using namespace tabsynth;
using clf::Mat;

namespace {

// Two well-separated Gaussian blobs (margin far beyond 4 sigma).
void make_blobs(Rng& rng, int n, int d, Mat& X, Eigen::VectorXi& y) {
    X.resize(n, d);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
        y(i) = i % 2;
        double center = y(i) == 0 ? 0.25 : 0.75;
        for (int j = 0; j < d; ++j) X(i, j) = center + 0.04 * rng.normal();
    }
}

double training_accuracy(const clf::TrainedClassifier& model, const Mat& X,
                         const Eigen::VectorXi& y) {
    auto batch = model.predict(X);
    int hit = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        hit += batch.labels(i) == y(i);
    return double(hit) / double(y.size());
}

} // namespace

TEST_CASE("conformance: every kind fits, predicts, and separates the blobs") {
    Rng rng(1234);
    Mat X;
    Eigen::VectorXi y;
    make_blobs(rng, 120, 5, X, y);
    Mat probe = X.topRows(20);

    for (const auto& kind : clf::classifier_kinds()) {
        CAPTURE(kind);
        clf::ClassifierSpec spec;
        spec.kind = kind;
        spec.seed = 7;
        auto model = clf::fit_classifier(spec, X, y);

        auto batch = model.predict(probe);
        REQUIRE(batch.labels.size() == 20);
        REQUIRE(batch.scores.size() == 20);
        CHECK(batch.scores.allFinite());
        for (int i = 0; i < 20; ++i) {
            CHECK((batch.labels(i) == 0 || batch.labels(i) == 1));
            CHECK(batch.labels(i) == (batch.scores(i) >= 0.5 ? 1 : 0));
        }
        CHECK(training_accuracy(model, X, y) >= 0.99);

        // determinism under identical seed
        auto again = clf::fit_classifier(spec, X, y).predict(probe);
        CHECK((again.scores - batch.scores).cwiseAbs().maxCoeff() == 0.0);

        // permutation invariance of the training rows
        std::vector<int> perm(X.rows());
        std::iota(perm.begin(), perm.end(), 0);
        Rng shuffler(99);
        shuffler.shuffle(perm);
        Mat Xp(X.rows(), X.cols());
        Eigen::VectorXi yp(y.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            Xp.row(Eigen::Index(i)) = X.row(perm[i]);
            yp(Eigen::Index(i)) = y(perm[i]);
        }
        auto permuted = clf::fit_classifier(spec, Xp, yp).predict(probe);
        CHECK((permuted.scores - batch.scores).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("knn with k=1 memorizes any conflict-free training set") {
    Rng rng(5);
    Mat X = rng.uniform_matrix(40, 4);
    Eigen::VectorXi y(40);
    for (int i = 0; i < 40; ++i) y(i) = int(rng.below(2));
    y(0) = 0;
    y(1) = 1;

    clf::ClassifierSpec spec;
    spec.kind = "knn";
    spec.hyperparameters = {{"k", 1}};
    auto model = clf::fit_classifier(spec, X, y);
    CHECK(training_accuracy(model, X, y) == doctest::Approx(1.0));
}

TEST_CASE("error cases") {
    Rng rng(2);
    Mat X = rng.uniform_matrix(10, 3);
    Eigen::VectorXi ones = Eigen::VectorXi::Ones(10);
    clf::ClassifierSpec spec;
    spec.kind = "logistic";
    CHECK_THROWS_WITH_AS(clf::fit_classifier(spec, X, ones),
                         doctest::Contains("SingleClassTrainingSet"), Error);

    Eigen::VectorXi y(10);
    for (int i = 0; i < 10; ++i) y(i) = i % 2;
    auto model = clf::fit_classifier(spec, X, y);
    CHECK_THROWS_WITH_AS(model.predict(rng.uniform_matrix(3, 4)),
                         doctest::Contains("DimensionMismatch"), Error);

    auto empty = model.predict(Mat(0, 3));
    CHECK(empty.labels.size() == 0);
    CHECK(empty.scores.size() == 0);

    clf::ClassifierSpec bad;
    bad.kind = "xgboost";
    CHECK_THROWS_WITH_AS(clf::fit_classifier(bad, X, y),
                         doctest::Contains("UnknownClassifier"), Error);
    try {
        bad.validate();
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("svm") != std::string::npos);
        CHECK(std::string(e.what()).find("naive_bayes") != std::string::npos);
    }

    clf::ClassifierSpec odd;
    odd.kind = "knn";
    odd.hyperparameters = {{"neighbors", 3}};
    CHECK_THROWS_WITH_AS(odd.validate(), doctest::Contains("ConfigInvalid"),
                         Error);
}

TEST_CASE("majority-degenerate training data yields majority predictions") {
    // Constant features force every kind to fall back to the label balance.
    Mat X = Mat::Constant(12, 3, 0.5);
    Eigen::VectorXi y(12);
    for (int i = 0; i < 12; ++i) y(i) = i < 9 ? 1 : 0; // 3:1 majority of 1

    Mat probe = Mat::Constant(4, 3, 0.5);
    for (const std::string kind :
         {"knn", "decision_tree", "naive_bayes", "logistic", "random_forest",
          "mlp"}) {
        CAPTURE(kind);
        clf::ClassifierSpec spec;
        spec.kind = kind;
        spec.seed = 3;
        auto batch = clf::fit_classifier(spec, X, y).predict(probe);
        for (int i = 0; i < 4; ++i) CHECK(batch.labels(i) == 1);
    }
}

TEST_CASE("spec json round trip") {
    clf::ClassifierSpec spec;
    spec.kind = "random_forest";
    spec.hyperparameters = {{"n_trees", 10}, {"max_depth", 4}};
    spec.seed = 99;
    auto j = spec.to_json();
    auto back = clf::ClassifierSpec::from_json(j);
    CHECK(back.kind == spec.kind);
    CHECK(back.seed == spec.seed);
    CHECK(back.hyperparameters == spec.hyperparameters);
}

TEST_CASE("svm separates a nonlinear ring from its center") {
    // RBF kernel sanity: linearly inseparable, radially separable.
    Rng rng(77);
    const int n = 160;
    Mat X(n, 2);
    Eigen::VectorXi y(n);
    for (int i = 0; i < n; ++i) {
        y(i) = i % 2;
        double radius = y(i) == 0 ? 0.1 : 0.45;
        double angle = 2 * M_PI * rng.uniform();
        X(i, 0) = 0.5 + radius * std::cos(angle) + 0.01 * rng.normal();
        X(i, 1) = 0.5 + radius * std::sin(angle) + 0.01 * rng.normal();
    }
    clf::ClassifierSpec spec;
    spec.kind = "svm";
    spec.hyperparameters = {{"C", 5.0}};
    auto model = clf::fit_classifier(spec, X, y);
    CHECK(training_accuracy(model, X, y) >= 0.97);
}
