#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabsynth/classifiers.hpp"
#include "tabsynth/dataset.hpp"
#include "tabsynth/generators.hpp"
#include "tabsynth/metrics.hpp"
#include "tabsynth/monitoring.hpp"

namespace tabsynth::eval {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kLibraryVersion = "0.1.0";

// Train-split preprocessing, applied per fold with statistics fitted on the
// train split only: min-max normalization, then optional chi-square feature
// selection, then optional per-class downsampling of the train split.
struct PreprocessSettings {
    bool normalize = true;
    int chi_square_top_k = 0;  // 0 keeps every column
    int balance_per_class = 0; // 0 keeps the natural class balance

    nlohmann::json to_json() const;
    static PreprocessSettings from_json(const nlohmann::json& j);
};

// One synthetic-data source: either a generator config trained per fold or
// an external CSV replayed through the import pathway. `name` keys every
// report cell; it defaults to the family (or "external").
struct GeneratorEntry {
    std::string name;
    gen::GeneratorConfig config;
    std::string external_path; // non-empty marks an external entry

    bool is_external() const { return !external_path.empty(); }
    nlohmann::json to_json() const;
    static GeneratorEntry from_json(const nlohmann::json& j);
};

struct ExperimentPlan {
    std::string dataset_path;
    PreprocessSettings preprocess;
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<GeneratorEntry> generators;
    std::vector<clf::ClassifierSpec> classifiers;
    int synthetic_per_class = 0; // 0 = match the train-split class sizes
    bool parallel_folds = false; // relaxes byte determinism; flagged in the report

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentPlan from_json(const nlohmann::json& j);
};

// One (generator, classifier, protocol) measurement. Failed cells keep their
// default scores and carry the error text instead.
struct UtilityCell {
    metrics::UtilityScores scores;
    metrics::ConfusionCounts confusion;
    bool failed = false;
    std::string error;

    nlohmann::json to_json() const;
    static UtilityCell from_json(const nlohmann::json& j);
};

struct CellPair {
    UtilityCell tr_ts; // classifier fit on real train, tested on the synthetic set
    UtilityCell ts_tr; // classifier fit on the synthetic set, tested on real test
};

// Everything one generator produced within one fold.
struct GeneratorFoldOutcome {
    bool failed = false; // generator fit/sample failure: all cells failed
    std::string error;
    std::map<std::string, CellPair> by_classifier;
    metrics::FidelityScores fidelity;
    bool fidelity_failed = false;
    gen::TrainingTrace trace;

    nlohmann::json to_json() const;
    static GeneratorFoldOutcome from_json(const nlohmann::json& j);
};

struct FoldResult {
    int fold_index = 0;
    std::map<std::string, UtilityCell> baseline; // per classifier: real/real
    std::map<std::string, GeneratorFoldOutcome> by_generator;

    nlohmann::json to_json() const;
    static FoldResult from_json(const nlohmann::json& j);
};

// Unweighted mean and population standard deviation over the non-failed fold
// values of one metric.
struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;
    int folds_used = 0;
    int folds_failed = 0;

    nlohmann::json to_json() const;
    static MetricStats from_json(const nlohmann::json& j);
};

using StatsByMetric = std::map<std::string, MetricStats>;

struct AggregateCell {
    bool all_failed = false;
    StatsByMetric metrics;

    nlohmann::json to_json() const;
    static AggregateCell from_json(const nlohmann::json& j);
};

struct EvaluationReport {
    ExperimentPlan plan;
    std::vector<FoldResult> folds;
    // utility[generator][classifier][protocol] with protocol in {tr_ts, ts_tr}
    std::map<std::string, std::map<std::string, std::map<std::string, AggregateCell>>>
        utility_aggregates;
    std::map<std::string, AggregateCell> fidelity_aggregates; // per generator
    std::map<std::string, AggregateCell> baseline_aggregates; // per classifier
    std::uint64_t seed = 0;
    double timestamp = 0.0;
    std::string version = kLibraryVersion;
    bool parallel = false;

    nlohmann::json to_json() const;
    static EvaluationReport from_json(const nlohmann::json& j);
};

// Optional observers for a run: a RunLog receiving per-epoch generator losses
// and per-fold phase timings, a clock for the report timestamp (fixed clock
// => byte-identical reports for a fixed plan seed), and an access log that,
// when set, is attached to the loaded dataset so callers can audit which rows
// each fold phase touched.
struct RunHooks {
    monitor::RunLog* log = nullptr;
    monitor::ClockFn clock;
    std::shared_ptr<AccessLog> access_log;
};

// Mean + population standard deviation of `values`; throws AllFoldsFailed
// when no values survive.
MetricStats aggregate_values(const std::vector<double>& values,
                             int folds_failed = 0);

// Fits every classifier on the train split and scores it on the test split.
std::map<std::string, UtilityCell> real_baseline(
    const TabularDataset& train, const TabularDataset& test,
    const std::vector<clf::ClassifierSpec>& classifiers);

// Runs the full protocol: per fold, preprocess (statistics fitted on the
// train split), train or import every generator, draw a class-conditional
// synthetic set, score TR-TS and TS-TR with every classifier, compute
// fidelity against the real train split, and aggregate across folds. A
// failing generator or classifier marks its cells failed and the run
// continues.
EvaluationReport run_experiment(const ExperimentPlan& plan,
                                const RunHooks& hooks = {});

} // namespace tabsynth::eval
