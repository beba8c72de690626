#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "tabsynth/data_io.hpp"
#include "tabsynth/error.hpp"
#include "tabsynth/evaluation.hpp"

using tabsynth::AccessLog;
using tabsynth::Error;
using tabsynth::ErrorCode;
using tabsynth::FeatureKind;
using tabsynth::FeatureSchema;
using tabsynth::Rng;
using tabsynth::TabularDataset;

namespace eval = tabsynth::eval;
namespace dataio = tabsynth::dataio;
namespace clf = tabsynth::clf;
namespace gen = tabsynth::gen;
namespace monitor = tabsynth::monitor;

namespace {

// Two well-separated continuous blobs in (0,1)^d, one per class.
TabularDataset make_blobs(int per_class, int d, double center0, double center1,
                          double spread, std::uint64_t seed) {
    TabularDataset data;
    for (int j = 0; j < d; ++j) {
        data.schema.names.push_back("f" + std::to_string(j));
        data.schema.kinds.push_back(FeatureKind::continuous);
    }
    data.features.resize(2 * per_class, d);
    data.labels.resize(2 * per_class);
    Rng rng(seed);
    for (int i = 0; i < 2 * per_class; ++i) {
        const int label = i < per_class ? 0 : 1;
        const double center = label == 0 ? center0 : center1;
        data.labels(i) = label;
        for (int j = 0; j < d; ++j) {
            data.features(i, j) =
                std::clamp(center + spread * rng.normal(), 0.001, 0.999);
        }
    }
    data.validate();
    return data;
}

std::string temp_path(const std::string& name) {
    const auto path = std::filesystem::temp_directory_path() / ("tabsynth_" + name);
    std::filesystem::remove_all(path);
    return path.string();
}

// Writes a separable blob dataset to a CSV and returns its path.
std::string write_blobs_csv(const std::string& name, int per_class, int d,
                            std::uint64_t seed) {
    const auto path = temp_path(name);
    dataio::save_dataset(make_blobs(per_class, d, 0.25, 0.75, 0.05, seed), path);
    return path;
}

eval::GeneratorEntry tiny_entry(const std::string& family) {
    eval::GeneratorEntry entry;
    entry.name = family;
    entry.config.family = family;
    entry.config.latent_dim = 2;
    entry.config.hidden_widths = {8};
    entry.config.epochs = 1;
    entry.config.batch_size = 16;
    return entry;
}

clf::ClassifierSpec spec_of(const std::string& kind) {
    clf::ClassifierSpec spec;
    spec.kind = kind;
    spec.seed = 11;
    return spec;
}

eval::ExperimentPlan basic_plan(const std::string& dataset_path, int k) {
    eval::ExperimentPlan plan;
    plan.dataset_path = dataset_path;
    plan.k = k;
    plan.seed = 404;
    plan.generators = {tiny_entry("copy"), tiny_entry("noise")};
    plan.classifiers = {spec_of("logistic"), spec_of("decision_tree")};
    return plan;
}

const std::vector<std::string> kUtilityMetricNames = {
    "accuracy", "precision", "recall", "f1", "auc", "mcc"};
const std::vector<std::string> kFidelityMetricNames = {
    "euclidean", "hellinger", "manhattan", "hamming",
    "jaccard",   "js_divergence", "wasserstein", "mmd"};

} // namespace

TEST_CASE("aggregate_values computes mean and population stddev") {
    const auto stats = eval::aggregate_values({0.8, 1.0}, 1);
    CHECK(stats.mean == doctest::Approx(0.9));
    CHECK(stats.stddev == doctest::Approx(0.1));
    CHECK(stats.folds_used == 2);
    CHECK(stats.folds_failed == 1);

    const auto flat = eval::aggregate_values({0.4, 0.4, 0.4});
    CHECK(flat.mean == doctest::Approx(0.4));
    CHECK(flat.stddev == doctest::Approx(0.0));
    CHECK(flat.folds_failed == 0);

    CHECK_THROWS_AS(eval::aggregate_values({}, 5), Error);
    try {
        eval::aggregate_values({}, 5);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AllFoldsFailed);
    }
}

TEST_CASE("experiment plan validation") {
    const auto csv = write_blobs_csv("plan_validation.csv", 20, 4, 1);
    const auto expect_invalid = [](const eval::ExperimentPlan& plan) {
        try {
            plan.validate();
            FAIL_CHECK("expected plan validation to throw");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ConfigInvalid);
        }
    };

    eval::ExperimentPlan good = basic_plan(csv, 3);
    CHECK_NOTHROW(good.validate());

    expect_invalid([&] { auto p = good; p.dataset_path.clear(); return p; }());
    expect_invalid([&] { auto p = good; p.k = 1; return p; }());
    expect_invalid([&] { auto p = good; p.generators.clear(); return p; }());
    expect_invalid([&] { auto p = good; p.classifiers.clear(); return p; }());
    expect_invalid([&] { auto p = good; p.synthetic_per_class = -1; return p; }());
    expect_invalid([&] { auto p = good; p.preprocess.chi_square_top_k = -2; return p; }());
    expect_invalid([&] {
        auto p = good;
        p.generators.push_back(tiny_entry("copy")); // duplicate name
        return p;
    }());
    expect_invalid([&] {
        auto p = good;
        p.generators[0].name.clear();
        return p;
    }());
    expect_invalid([&] {
        auto p = good;
        p.classifiers.push_back(spec_of("logistic")); // duplicate kind
        return p;
    }());
    expect_invalid([&] {
        auto p = good;
        p.generators[0].config.latent_dim = 0; // invalid generator config
        return p;
    }());

    auto bad_clf = good;
    bad_clf.classifiers[0].kind = "perceptron9000";
    CHECK_THROWS_AS(bad_clf.validate(), Error);
}

TEST_CASE("experiment plan json round trip") {
    eval::ExperimentPlan plan = basic_plan("data.csv", 4);
    plan.preprocess.chi_square_top_k = 3;
    plan.preprocess.balance_per_class = 12;
    plan.synthetic_per_class = 9;
    plan.parallel_folds = true;
    eval::GeneratorEntry external;
    external.name = "imported";
    external.external_path = "synth.csv";
    plan.generators.push_back(external);

    const auto j = plan.to_json();
    const auto back = eval::ExperimentPlan::from_json(j);
    CHECK(back.to_json() == j);

    // Entry names default to the family (or "external") when omitted.
    const auto unnamed = eval::GeneratorEntry::from_json(
        nlohmann::json{{"config", tiny_entry("vae").config.to_json()}});
    CHECK(unnamed.name == "vae");
    const auto unnamed_ext = eval::GeneratorEntry::from_json(
        nlohmann::json{{"external_path", "s.csv"}});
    CHECK(unnamed_ext.name == "external");
}

TEST_CASE("full run: structure, copy oracle, noise chance level, leakage audit") {
    const auto csv = write_blobs_csv("full_run.csv", 100, 6, 7);
    eval::ExperimentPlan plan = basic_plan(csv, 5);

    eval::RunHooks hooks;
    hooks.clock = monitor::fixed_clock_fn();
    hooks.access_log = std::make_shared<AccessLog>();
    monitor::RunLog log(monitor::fixed_clock_fn());
    hooks.log = &log;

    const auto report = eval::run_experiment(plan, hooks);

    // --- structural completeness: k folds x generators x classifiers x 2.
    CHECK(report.folds.size() == 5);
    CHECK(report.seed == plan.seed);
    CHECK(report.version == eval::kLibraryVersion);
    CHECK_FALSE(report.parallel);
    for (const auto& fold : report.folds) {
        CHECK(fold.baseline.size() == 2);
        CHECK(fold.by_generator.size() == 2);
        for (const auto& spec : plan.classifiers) {
            CHECK(fold.baseline.count(spec.kind) == 1);
        }
        for (const auto& entry : plan.generators) {
            const auto& outcome = fold.by_generator.at(entry.name);
            CHECK_FALSE(outcome.failed);
            CHECK_FALSE(outcome.fidelity_failed);
            CHECK(outcome.by_classifier.size() == 2);
        }
    }
    for (const auto& entry : plan.generators) {
        const auto& by_clf = report.utility_aggregates.at(entry.name);
        CHECK(by_clf.size() == 2);
        for (const auto& spec : plan.classifiers) {
            const auto& by_protocol = by_clf.at(spec.kind);
            CHECK(by_protocol.size() == 2);
            for (const char* protocol : {"tr_ts", "ts_tr"}) {
                const auto& cell = by_protocol.at(protocol);
                CHECK_FALSE(cell.all_failed);
                CHECK(cell.metrics.size() == kUtilityMetricNames.size());
                for (const auto& name : kUtilityMetricNames) {
                    const auto& stats = cell.metrics.at(name);
                    CHECK(stats.folds_used == 5);
                    CHECK(stats.folds_failed == 0);
                }
            }
        }
        const auto& fidelity = report.fidelity_aggregates.at(entry.name);
        CHECK_FALSE(fidelity.all_failed);
        CHECK(fidelity.metrics.size() == kFidelityMetricNames.size());
    }

    // --- real/real baseline is near-perfect on well-separated blobs.
    CHECK(report.baseline_aggregates.at("logistic").metrics.at("accuracy").mean >=
          0.99);
    CHECK(report.baseline_aggregates.at("decision_tree")
              .metrics.at("accuracy")
              .mean >= 0.95);

    // --- copy oracle: a classifier fit on a verbatim copy of the train split
    // is the same model, so synthetic-train/real-test equals the baseline
    // exactly, cell by cell.
    for (const auto& fold : report.folds) {
        const auto& outcome = fold.by_generator.at("copy");
        for (const auto& spec : plan.classifiers) {
            const auto& pair = outcome.by_classifier.at(spec.kind);
            const auto& base = fold.baseline.at(spec.kind);
            CHECK(pair.ts_tr.scores.to_json() == base.scores.to_json());
            CHECK(pair.ts_tr.confusion.to_json() == base.confusion.to_json());
            // Real-train/synthetic-test scores the model on its own training
            // rows, which separable blobs make near-perfect.
            CHECK(pair.tr_ts.scores.accuracy >= 0.98);
        }
        // A verbatim copy has zero pairwise distance to its source.
        CHECK(outcome.fidelity.euclidean == doctest::Approx(0.0));
        CHECK(outcome.fidelity.manhattan == doctest::Approx(0.0));
    }

    // --- noise scores at chance when real-trained classifiers predict its
    // label-independent rows, and far below the baseline the other way.
    // (Synthetic-train/real-test accuracy per fold is noisy on tightly
    // clustered continuous blobs because one arbitrary decision surface
    // scores whole clusters at once; the binary-feature case below pins the
    // chance-level window for that direction.)
    for (const auto& spec : plan.classifiers) {
        const auto& by_protocol =
            report.utility_aggregates.at("noise").at(spec.kind);
        CHECK(by_protocol.at("tr_ts").metrics.at("accuracy").mean >= 0.4);
        CHECK(by_protocol.at("tr_ts").metrics.at("accuracy").mean <= 0.6);
        CHECK(by_protocol.at("ts_tr").metrics.at("accuracy").mean <=
              report.baseline_aggregates.at(spec.kind).metrics.at("accuracy").mean -
                  0.2);
    }

    // --- leakage audit: each fitting phase touched exactly the fold's train
    // rows and each scoring phase exactly its test rows.
    const auto data = dataio::load_dataset(csv);
    const auto fold_plan = dataio::stratified_k_fold(data, plan.k, plan.seed);
    const auto phases = hooks.access_log->phases();
    CHECK(phases.size() == 2 * static_cast<std::size_t>(plan.k));
    for (int i = 0; i < plan.k; ++i) {
        const auto& fold = fold_plan.folds[static_cast<std::size_t>(i)];
        const std::set<int> train(fold.train.begin(), fold.train.end());
        const std::set<int> test(fold.test.begin(), fold.test.end());
        const std::string tag = "fold" + std::to_string(i);
        CHECK(hooks.access_log->accessed(tag + ":fit") == train);
        CHECK(hooks.access_log->accessed(tag + ":eval") == test);
        std::vector<int> overlap;
        std::set_intersection(train.begin(), train.end(), test.begin(),
                              test.end(), std::back_inserter(overlap));
        CHECK(overlap.empty());
    }

    // --- the run log collected per-fold phase timings.
    const auto phase_seconds = log.phase_seconds();
    for (int i = 0; i < plan.k; ++i) {
        CHECK(phase_seconds.count("fold" + std::to_string(i)) == 1);
    }

    // --- report json round trip.
    const auto j = report.to_json();
    const auto back = eval::EvaluationReport::from_json(j);
    CHECK(back.to_json() == j);
    auto stale = j;
    stale["schema_version"] = 999;
    CHECK_THROWS_AS(eval::EvaluationReport::from_json(stale), Error);
}

TEST_CASE("noise generator scores at chance on a balanced binary set") {
    // Binary rows decorrelate a noise-trained tree's predictions across the
    // test split, so 5-fold mean accuracy concentrates near one half.
    TabularDataset data;
    const int d = 16;
    const int per_class = 500;
    for (int j = 0; j < d; ++j) {
        data.schema.names.push_back("b" + std::to_string(j));
        data.schema.kinds.push_back(FeatureKind::binary);
    }
    data.features.resize(2 * per_class, d);
    data.labels.resize(2 * per_class);
    Rng rng(5);
    for (int i = 0; i < 2 * per_class; ++i) {
        const int label = i < per_class ? 0 : 1;
        data.labels(i) = label;
        for (int j = 0; j < d; ++j) {
            const double p = label == 0 ? 0.15 : 0.8;
            data.features(i, j) = rng.uniform() < p ? 1.0 : 0.0;
        }
    }
    const auto csv = temp_path("binary_noise.csv");
    dataio::save_dataset(data, csv);

    eval::ExperimentPlan plan;
    plan.dataset_path = csv;
    plan.k = 5;
    plan.seed = 404;
    plan.generators = {tiny_entry("noise")};
    plan.classifiers = {spec_of("decision_tree")};

    const auto report = eval::run_experiment(plan);
    const auto& by_protocol =
        report.utility_aggregates.at("noise").at("decision_tree");
    CHECK(by_protocol.at("ts_tr").metrics.at("accuracy").mean >= 0.4);
    CHECK(by_protocol.at("ts_tr").metrics.at("accuracy").mean <= 0.6);
    CHECK(by_protocol.at("tr_ts").metrics.at("accuracy").mean >= 0.45);
    CHECK(by_protocol.at("tr_ts").metrics.at("accuracy").mean <= 0.55);
    // The real/real baseline dominates chance-level synthetic data.
    CHECK(report.baseline_aggregates.at("decision_tree").metrics.at("accuracy").mean >
          by_protocol.at("ts_tr").metrics.at("accuracy").mean);
}

TEST_CASE("fixed clock makes repeated runs byte-identical") {
    const auto csv = write_blobs_csv("determinism.csv", 40, 4, 21);
    eval::ExperimentPlan plan;
    plan.dataset_path = csv;
    plan.k = 2;
    plan.seed = 1234;
    auto vae = tiny_entry("vae");
    vae.config.epochs = 2;
    plan.generators = {tiny_entry("copy"), vae};
    plan.classifiers = {spec_of("logistic")};

    eval::RunHooks hooks;
    hooks.clock = monitor::fixed_clock_fn();
    const auto first = eval::run_experiment(plan, hooks).to_json().dump(2);
    const auto second = eval::run_experiment(plan, hooks).to_json().dump(2);
    CHECK(first == second);
}

TEST_CASE("a failing generator is flagged and the run continues") {
    const auto csv = write_blobs_csv("continue_flag.csv", 30, 4, 33);
    eval::ExperimentPlan plan = basic_plan(csv, 2);
    eval::GeneratorEntry broken;
    broken.name = "broken";
    broken.external_path = temp_path("missing_external.csv"); // never written
    plan.generators.push_back(broken);

    const auto report = eval::run_experiment(plan);

    for (const auto& fold : report.folds) {
        const auto& outcome = fold.by_generator.at("broken");
        CHECK(outcome.failed);
        CHECK_FALSE(outcome.error.empty());
        CHECK(outcome.fidelity_failed);
        for (const auto& spec : plan.classifiers) {
            const auto& pair = outcome.by_classifier.at(spec.kind);
            CHECK(pair.tr_ts.failed);
            CHECK(pair.ts_tr.failed);
            CHECK(pair.tr_ts.error == outcome.error);
        }
        // The healthy generators are untouched by the failure.
        CHECK_FALSE(fold.by_generator.at("copy").failed);
    }
    for (const auto& spec : plan.classifiers) {
        const auto& by_protocol = report.utility_aggregates.at("broken").at(spec.kind);
        CHECK(by_protocol.at("tr_ts").all_failed);
        CHECK(by_protocol.at("ts_tr").all_failed);
        CHECK(by_protocol.at("tr_ts").metrics.empty());
        CHECK_FALSE(
            report.utility_aggregates.at("copy").at(spec.kind).at("ts_tr").all_failed);
    }
    CHECK(report.fidelity_aggregates.at("broken").all_failed);
}

TEST_CASE("external synthetic data flows through the protocol") {
    const auto csv = write_blobs_csv("external_real.csv", 60, 4, 55);
    // A fresh draw from the same two blobs stands in for an externally
    // produced synthetic set. Features already live in [0, 1].
    const auto synth_csv = write_blobs_csv("external_synth.csv", 80, 4, 56);

    eval::ExperimentPlan plan;
    plan.dataset_path = csv;
    plan.k = 2;
    plan.seed = 77;
    plan.preprocess.normalize = false; // keep the raw column ranges
    eval::GeneratorEntry external;
    external.name = "imported";
    external.external_path = synth_csv;
    plan.generators = {external};
    plan.classifiers = {spec_of("logistic")};

    const auto report = eval::run_experiment(plan);
    for (const auto& fold : report.folds) {
        const auto& outcome = fold.by_generator.at("imported");
        CHECK_FALSE(outcome.failed);
        CHECK(outcome.trace.empty());
        CHECK_FALSE(outcome.by_classifier.at("logistic").ts_tr.failed);
    }
    // Same-distribution data transfers almost perfectly to the real test split.
    CHECK(report.utility_aggregates.at("imported")
              .at("logistic")
              .at("ts_tr")
              .metrics.at("accuracy")
              .mean >= 0.9);
}

TEST_CASE("preprocessing knobs and the synthetic size override") {
    const auto csv = write_blobs_csv("preprocess_run.csv", 90, 6, 91);
    eval::ExperimentPlan plan = basic_plan(csv, 2);
    plan.generators = {tiny_entry("copy")};
    plan.classifiers = {spec_of("logistic")};
    plan.preprocess.chi_square_top_k = 4;
    plan.preprocess.balance_per_class = 30;
    plan.synthetic_per_class = 7;

    const auto report = eval::run_experiment(plan);
    // Separable signal survives feature selection and downsampling.
    CHECK(report.baseline_aggregates.at("logistic").metrics.at("accuracy").mean >=
          0.95);
    for (const auto& fold : report.folds) {
        const auto& pair =
            fold.by_generator.at("copy").by_classifier.at("logistic");
        // Real-train/synthetic-test scores exactly the drawn synthetic rows.
        CHECK(pair.tr_ts.confusion.total() == 14);
    }
}

TEST_CASE("parallel folds reproduce the serial per-fold results") {
    const auto csv = write_blobs_csv("parallel_run.csv", 45, 4, 13);
    eval::ExperimentPlan plan = basic_plan(csv, 3);

    eval::RunHooks hooks;
    hooks.clock = monitor::fixed_clock_fn();
    const auto serial = eval::run_experiment(plan, hooks);
    plan.parallel_folds = true;
    const auto parallel = eval::run_experiment(plan, hooks);

    CHECK(parallel.parallel);
    REQUIRE(parallel.folds.size() == serial.folds.size());
    for (std::size_t i = 0; i < serial.folds.size(); ++i) {
        CHECK(parallel.folds[i].to_json() == serial.folds[i].to_json());
    }
    for (const auto& [name, cell] : serial.fidelity_aggregates) {
        CHECK(parallel.fidelity_aggregates.at(name).to_json() == cell.to_json());
    }
}

TEST_CASE("real_baseline flags classifier-level failures") {
    const auto data = make_blobs(25, 4, 0.25, 0.75, 0.05, 3);
    const auto train_rows = data.class_indices(0);
    const TabularDataset single = data.take_rows(train_rows); // one class only

    const auto cells =
        eval::real_baseline(single, data, {spec_of("logistic")});
    CHECK(cells.at("logistic").failed);
    CHECK_FALSE(cells.at("logistic").error.empty());

    const auto healthy = eval::real_baseline(data, data, {spec_of("logistic")});
    CHECK_FALSE(healthy.at("logistic").failed);
    CHECK(healthy.at("logistic").scores.accuracy >= 0.99);
}
