#include "tabsynth/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <thread>
#include <utility>

#include "tabsynth/data_io.hpp"
#include "tabsynth/error.hpp"
#include "tabsynth/rng.hpp"

namespace tabsynth::eval {

namespace {

using Mat = Eigen::MatrixXd;

// Seed-stream tags for the per-fold derived seeds.
constexpr std::uint64_t kBalanceStream = 0x62616c61; // "bala"
constexpr std::uint64_t kFitStream = 0x67666974;     // "gfit"
constexpr std::uint64_t kSampleStream = 0x6773616d;  // "gsam"
constexpr std::uint64_t kFidelityStream = 0x66696465; // "fide"

using UtilityField = std::pair<const char*, double metrics::UtilityScores::*>;
constexpr std::array<UtilityField, 6> kUtilityFields{{
    {"accuracy", &metrics::UtilityScores::accuracy},
    {"precision", &metrics::UtilityScores::precision},
    {"recall", &metrics::UtilityScores::recall},
    {"f1", &metrics::UtilityScores::f1},
    {"auc", &metrics::UtilityScores::auc},
    {"mcc", &metrics::UtilityScores::mcc},
}};

using FidelityField = std::pair<const char*, double metrics::FidelityScores::*>;
constexpr std::array<FidelityField, 8> kFidelityFields{{
    {"euclidean", &metrics::FidelityScores::euclidean},
    {"hellinger", &metrics::FidelityScores::hellinger},
    {"manhattan", &metrics::FidelityScores::manhattan},
    {"hamming", &metrics::FidelityScores::hamming},
    {"jaccard", &metrics::FidelityScores::jaccard},
    {"js_divergence", &metrics::FidelityScores::js_divergence},
    {"wasserstein", &metrics::FidelityScores::wasserstein},
    {"mmd", &metrics::FidelityScores::mmd},
}};

} // namespace

// ------------------------------------------------------------------- json

nlohmann::json PreprocessSettings::to_json() const {
    return nlohmann::json{{"normalize", normalize},
                          {"chi_square_top_k", chi_square_top_k},
                          {"balance_per_class", balance_per_class}};
}

PreprocessSettings PreprocessSettings::from_json(const nlohmann::json& j) {
    PreprocessSettings s;
    s.normalize = j.value("normalize", s.normalize);
    s.chi_square_top_k = j.value("chi_square_top_k", s.chi_square_top_k);
    s.balance_per_class = j.value("balance_per_class", s.balance_per_class);
    return s;
}

nlohmann::json GeneratorEntry::to_json() const {
    nlohmann::json j{{"name", name}};
    if (is_external()) {
        j["external_path"] = external_path;
    } else {
        j["config"] = config.to_json();
    }
    return j;
}

GeneratorEntry GeneratorEntry::from_json(const nlohmann::json& j) {
    GeneratorEntry entry;
    entry.external_path = j.value("external_path", "");
    if (j.contains("config")) {
        entry.config = gen::GeneratorConfig::from_json(j.at("config"));
    }
    entry.name = j.value("name", "");
    if (entry.name.empty()) {
        entry.name = entry.is_external() ? "external" : entry.config.family;
    }
    return entry;
}

void ExperimentPlan::validate() const {
    if (dataset_path.empty()) {
        throw Error(ErrorCode::ConfigInvalid, "plan needs a dataset path");
    }
    if (k < 2) {
        throw Error(ErrorCode::ConfigInvalid,
                    "cross-validation needs k >= 2 folds, got " +
                        std::to_string(k));
    }
    if (generators.empty()) {
        throw Error(ErrorCode::ConfigInvalid, "plan needs at least one generator");
    }
    if (classifiers.empty()) {
        throw Error(ErrorCode::ConfigInvalid, "plan needs at least one classifier");
    }
    if (synthetic_per_class < 0) {
        throw Error(ErrorCode::ConfigInvalid,
                    "synthetic_per_class must be non-negative");
    }
    if (preprocess.chi_square_top_k < 0 || preprocess.balance_per_class < 0) {
        throw Error(ErrorCode::ConfigInvalid,
                    "preprocessing sizes must be non-negative");
    }
    std::set<std::string> names;
    for (const auto& entry : generators) {
        if (entry.name.empty()) {
            throw Error(ErrorCode::ConfigInvalid, "every generator needs a name");
        }
        if (!names.insert(entry.name).second) {
            throw Error(ErrorCode::ConfigInvalid,
                        "duplicate generator name '" + entry.name + "'");
        }
        if (!entry.is_external()) {
            entry.config.validate();
        }
    }
    std::set<std::string> kinds;
    for (const auto& spec : classifiers) {
        spec.validate();
        if (!kinds.insert(spec.kind).second) {
            throw Error(ErrorCode::ConfigInvalid,
                        "duplicate classifier kind '" + spec.kind + "'");
        }
    }
}

nlohmann::json ExperimentPlan::to_json() const {
    nlohmann::json gens = nlohmann::json::array();
    for (const auto& entry : generators) gens.push_back(entry.to_json());
    nlohmann::json clfs = nlohmann::json::array();
    for (const auto& spec : classifiers) clfs.push_back(spec.to_json());
    return nlohmann::json{{"dataset_path", dataset_path},
                          {"preprocess", preprocess.to_json()},
                          {"k", k},
                          {"seed", seed},
                          {"generators", gens},
                          {"classifiers", clfs},
                          {"synthetic_per_class", synthetic_per_class},
                          {"parallel_folds", parallel_folds}};
}

ExperimentPlan ExperimentPlan::from_json(const nlohmann::json& j) {
    ExperimentPlan plan;
    plan.dataset_path = j.value("dataset_path", "");
    if (j.contains("preprocess")) {
        plan.preprocess = PreprocessSettings::from_json(j.at("preprocess"));
    }
    plan.k = j.value("k", plan.k);
    plan.seed = j.value("seed", plan.seed);
    if (j.contains("generators")) {
        for (const auto& item : j.at("generators")) {
            plan.generators.push_back(GeneratorEntry::from_json(item));
        }
    }
    if (j.contains("classifiers")) {
        for (const auto& item : j.at("classifiers")) {
            plan.classifiers.push_back(clf::ClassifierSpec::from_json(item));
        }
    }
    plan.synthetic_per_class = j.value("synthetic_per_class", 0);
    plan.parallel_folds = j.value("parallel_folds", false);
    return plan;
}

nlohmann::json UtilityCell::to_json() const {
    return nlohmann::json{{"failed", failed},
                          {"error", error},
                          {"scores", scores.to_json()},
                          {"confusion", confusion.to_json()}};
}

UtilityCell UtilityCell::from_json(const nlohmann::json& j) {
    UtilityCell cell;
    cell.failed = j.value("failed", false);
    cell.error = j.value("error", "");
    if (j.contains("scores")) {
        cell.scores = metrics::UtilityScores::from_json(j.at("scores"));
    }
    if (j.contains("confusion")) {
        cell.confusion = metrics::ConfusionCounts::from_json(j.at("confusion"));
    }
    return cell;
}

nlohmann::json GeneratorFoldOutcome::to_json() const {
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& [kind, pair] : by_classifier) {
        cells[kind] = nlohmann::json{{"tr_ts", pair.tr_ts.to_json()},
                                     {"ts_tr", pair.ts_tr.to_json()}};
    }
    return nlohmann::json{{"failed", failed},
                          {"error", error},
                          {"cells", cells},
                          {"fidelity", fidelity.to_json()},
                          {"fidelity_failed", fidelity_failed},
                          {"trace", trace.to_json()}};
}

GeneratorFoldOutcome GeneratorFoldOutcome::from_json(const nlohmann::json& j) {
    GeneratorFoldOutcome outcome;
    outcome.failed = j.value("failed", false);
    outcome.error = j.value("error", "");
    if (j.contains("cells")) {
        for (const auto& [kind, pair] : j.at("cells").items()) {
            CellPair cells;
            cells.tr_ts = UtilityCell::from_json(pair.at("tr_ts"));
            cells.ts_tr = UtilityCell::from_json(pair.at("ts_tr"));
            outcome.by_classifier[kind] = cells;
        }
    }
    if (j.contains("fidelity")) {
        outcome.fidelity = metrics::FidelityScores::from_json(j.at("fidelity"));
    }
    outcome.fidelity_failed = j.value("fidelity_failed", false);
    if (j.contains("trace")) {
        outcome.trace = gen::TrainingTrace::from_json(j.at("trace"));
    }
    return outcome;
}

nlohmann::json FoldResult::to_json() const {
    nlohmann::json base = nlohmann::json::object();
    for (const auto& [kind, cell] : baseline) base[kind] = cell.to_json();
    nlohmann::json gens = nlohmann::json::object();
    for (const auto& [name, outcome] : by_generator) gens[name] = outcome.to_json();
    return nlohmann::json{{"fold_index", fold_index},
                          {"baseline", base},
                          {"generators", gens}};
}

FoldResult FoldResult::from_json(const nlohmann::json& j) {
    FoldResult fold;
    fold.fold_index = j.at("fold_index").get<int>();
    if (j.contains("baseline")) {
        for (const auto& [kind, cell] : j.at("baseline").items()) {
            fold.baseline[kind] = UtilityCell::from_json(cell);
        }
    }
    if (j.contains("generators")) {
        for (const auto& [name, outcome] : j.at("generators").items()) {
            fold.by_generator[name] = GeneratorFoldOutcome::from_json(outcome);
        }
    }
    return fold;
}

nlohmann::json MetricStats::to_json() const {
    return nlohmann::json{{"mean", mean},
                          {"stddev", stddev},
                          {"folds_used", folds_used},
                          {"folds_failed", folds_failed}};
}

MetricStats MetricStats::from_json(const nlohmann::json& j) {
    MetricStats stats;
    stats.mean = j.value("mean", 0.0);
    stats.stddev = j.value("stddev", 0.0);
    stats.folds_used = j.value("folds_used", 0);
    stats.folds_failed = j.value("folds_failed", 0);
    return stats;
}

nlohmann::json AggregateCell::to_json() const {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [name, stats] : metrics) m[name] = stats.to_json();
    return nlohmann::json{{"all_failed", all_failed}, {"metrics", m}};
}

AggregateCell AggregateCell::from_json(const nlohmann::json& j) {
    AggregateCell cell;
    cell.all_failed = j.value("all_failed", false);
    if (j.contains("metrics")) {
        for (const auto& [name, stats] : j.at("metrics").items()) {
            cell.metrics[name] = MetricStats::from_json(stats);
        }
    }
    return cell;
}

nlohmann::json EvaluationReport::to_json() const {
    nlohmann::json fold_array = nlohmann::json::array();
    for (const auto& fold : folds) fold_array.push_back(fold.to_json());

    nlohmann::json utility = nlohmann::json::object();
    for (const auto& [generator, by_clf] : utility_aggregates) {
        nlohmann::json per_clf = nlohmann::json::object();
        for (const auto& [kind, by_protocol] : by_clf) {
            nlohmann::json per_protocol = nlohmann::json::object();
            for (const auto& [protocol, cell] : by_protocol) {
                per_protocol[protocol] = cell.to_json();
            }
            per_clf[kind] = per_protocol;
        }
        utility[generator] = per_clf;
    }
    nlohmann::json fidelity = nlohmann::json::object();
    for (const auto& [generator, cell] : fidelity_aggregates) {
        fidelity[generator] = cell.to_json();
    }
    nlohmann::json base = nlohmann::json::object();
    for (const auto& [kind, cell] : baseline_aggregates) {
        base[kind] = cell.to_json();
    }
    return nlohmann::json{
        {"schema_version", kReportSchemaVersion},
        {"environment", nlohmann::json{{"seed", seed},
                                       {"timestamp", timestamp},
                                       {"version", version},
                                       {"parallel", parallel}}},
        {"plan", plan.to_json()},
        {"folds", fold_array},
        {"aggregates", nlohmann::json{{"utility", utility},
                                      {"fidelity", fidelity},
                                      {"baseline", base}}}};
}

EvaluationReport EvaluationReport::from_json(const nlohmann::json& j) {
    if (j.value("schema_version", -1) != kReportSchemaVersion) {
        throw Error(ErrorCode::SchemaMismatch,
                    "unsupported report schema version");
    }
    EvaluationReport report;
    report.plan = ExperimentPlan::from_json(j.at("plan"));
    for (const auto& fold : j.at("folds")) {
        report.folds.push_back(FoldResult::from_json(fold));
    }
    const auto& aggregates = j.at("aggregates");
    for (const auto& [generator, by_clf] : aggregates.at("utility").items()) {
        for (const auto& [kind, by_protocol] : by_clf.items()) {
            for (const auto& [protocol, cell] : by_protocol.items()) {
                report.utility_aggregates[generator][kind][protocol] =
                    AggregateCell::from_json(cell);
            }
        }
    }
    for (const auto& [generator, cell] : aggregates.at("fidelity").items()) {
        report.fidelity_aggregates[generator] = AggregateCell::from_json(cell);
    }
    for (const auto& [kind, cell] : aggregates.at("baseline").items()) {
        report.baseline_aggregates[kind] = AggregateCell::from_json(cell);
    }
    const auto& environment = j.at("environment");
    report.seed = environment.value("seed", std::uint64_t{0});
    report.timestamp = environment.value("timestamp", 0.0);
    report.version = environment.value("version", "");
    report.parallel = environment.value("parallel", false);
    return report;
}

// -------------------------------------------------------------- aggregation

MetricStats aggregate_values(const std::vector<double>& values,
                             int folds_failed) {
    if (values.empty()) {
        throw Error(ErrorCode::AllFoldsFailed,
                    "no fold produced a value for this cell");
    }
    MetricStats stats;
    stats.folds_used = static_cast<int>(values.size());
    stats.folds_failed = folds_failed;
    double sum = 0.0;
    for (const double v : values) sum += v;
    stats.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (const double v : values) sq += (v - stats.mean) * (v - stats.mean);
    stats.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return stats;
}

namespace {

UtilityCell score_cell(const clf::TrainedClassifier& model, const Mat& x,
                       const Eigen::VectorXi& y) {
    const auto pred = model.predict(x);
    UtilityCell cell;
    cell.confusion = metrics::confusion(y, pred.labels);
    cell.scores = metrics::utility_scores(cell.confusion, y, pred.scores);
    return cell;
}

UtilityCell failed_cell(const std::string& message) {
    UtilityCell cell;
    cell.failed = true;
    cell.error = message;
    return cell;
}

// Aggregates one metric across folds given a per-fold accessor returning
// nullptr for failed cells.
template <typename Accessor>
AggregateCell aggregate_cell(const std::vector<FoldResult>& folds,
                             const auto& fields, Accessor&& accessor) {
    AggregateCell cell;
    for (const auto& [name, member] : fields) {
        std::vector<double> values;
        int failed = 0;
        for (const auto& fold : folds) {
            const auto* scores = accessor(fold);
            if (scores == nullptr) {
                ++failed;
            } else {
                values.push_back(scores->*member);
            }
        }
        if (values.empty()) {
            cell.all_failed = true;
            cell.metrics.clear();
            return cell;
        }
        cell.metrics[name] = aggregate_values(values, failed);
    }
    return cell;
}

void build_aggregates(EvaluationReport& report) {
    for (const auto& entry : report.plan.generators) {
        const std::string& generator = entry.name;
        for (const auto& spec : report.plan.classifiers) {
            for (const char* protocol : {"tr_ts", "ts_tr"}) {
                const bool is_tr_ts = std::string(protocol) == "tr_ts";
                report.utility_aggregates[generator][spec.kind][protocol] =
                    aggregate_cell(
                        report.folds, kUtilityFields,
                        [&](const FoldResult& fold)
                            -> const metrics::UtilityScores* {
                            const auto git = fold.by_generator.find(generator);
                            if (git == fold.by_generator.end()) return nullptr;
                            const auto cit =
                                git->second.by_classifier.find(spec.kind);
                            if (cit == git->second.by_classifier.end()) {
                                return nullptr;
                            }
                            const UtilityCell& cell = is_tr_ts
                                                          ? cit->second.tr_ts
                                                          : cit->second.ts_tr;
                            return cell.failed ? nullptr : &cell.scores;
                        });
            }
        }
        report.fidelity_aggregates[generator] = aggregate_cell(
            report.folds, kFidelityFields,
            [&](const FoldResult& fold) -> const metrics::FidelityScores* {
                const auto git = fold.by_generator.find(generator);
                if (git == fold.by_generator.end()) return nullptr;
                if (git->second.failed || git->second.fidelity_failed) {
                    return nullptr;
                }
                return &git->second.fidelity;
            });
    }
    for (const auto& spec : report.plan.classifiers) {
        report.baseline_aggregates[spec.kind] = aggregate_cell(
            report.folds, kUtilityFields,
            [&](const FoldResult& fold) -> const metrics::UtilityScores* {
                const auto it = fold.baseline.find(spec.kind);
                if (it == fold.baseline.end() || it->second.failed) {
                    return nullptr;
                }
                return &it->second.scores;
            });
    }
}

} // namespace

// ----------------------------------------------------------------- baseline

std::map<std::string, UtilityCell> real_baseline(
    const TabularDataset& train, const TabularDataset& test,
    const std::vector<clf::ClassifierSpec>& classifiers) {
    std::map<std::string, UtilityCell> out;
    for (const auto& spec : classifiers) {
        try {
            const auto model =
                clf::fit_classifier(spec, train.features, train.labels);
            out[spec.kind] = score_cell(model, test.features, test.labels);
        } catch (const std::exception& e) {
            out[spec.kind] = failed_cell(e.what());
        }
    }
    return out;
}

// --------------------------------------------------------------------- run

namespace {

struct FoldData {
    TabularDataset train;
    TabularDataset test;
};

FoldData prepare_fold(const TabularDataset& base, const Fold& fold,
                      int fold_index, const PreprocessSettings& settings,
                      std::uint64_t seed) {
    const std::string tag = "fold" + std::to_string(fold_index);
    FoldData data;
    data.train = base.take_rows(fold.train, tag + ":fit");
    data.test = base.take_rows(fold.test, tag + ":eval");
    if (settings.normalize) {
        const auto stats = dataio::fit_normalization(data.train);
        data.train = dataio::apply_normalization(stats, data.train);
        // Test rows can fall outside the train split's range; clamp so every
        // downstream consumer sees the unit cube.
        data.test = dataio::apply_normalization(stats, data.test, true);
    }
    if (settings.chi_square_top_k > 0) {
        const auto keep =
            dataio::chi_square_top_indices(data.train, settings.chi_square_top_k);
        data.train = dataio::select_columns(data.train, keep);
        data.test = dataio::select_columns(data.test, keep);
    }
    if (settings.balance_per_class > 0) {
        data.train = dataio::downsample_balance(
            data.train, settings.balance_per_class,
            derive_seed(seed, kBalanceStream,
                        static_cast<std::uint64_t>(fold_index)));
    }
    return data;
}

gen::FitHooks make_fit_hooks(monitor::RunLog* log, const std::string& model_id) {
    gen::FitHooks hooks;
    if (log != nullptr) {
        hooks.on_epoch = [log, model_id](const monitor::TraceEvent& event) {
            log->append(model_id, event.series, monitor::EventKind::step_loss,
                        nlohmann::json{{"step", event.step},
                                       {"value", event.value}});
        };
    }
    return hooks;
}

TabularDataset assemble_synthetic(const gen::TrainedGenerator& model, int n0,
                                  int n1, std::uint64_t seed,
                                  const FeatureSchema& schema) {
    const Mat x0 = model.sample(n0, 0, seed);
    const Mat x1 = model.sample(n1, 1, seed);
    TabularDataset synth;
    synth.schema = schema;
    synth.features.resize(n0 + n1, x0.cols());
    synth.features.topRows(n0) = x0;
    synth.features.bottomRows(n1) = x1;
    synth.labels.resize(n0 + n1);
    synth.labels.head(n0).setZero();
    synth.labels.tail(n1).setOnes();
    return synth;
}

FoldResult evaluate_fold(const TabularDataset& base, const Fold& fold,
                         int fold_index, const ExperimentPlan& plan,
                         monitor::RunLog* log) {
    FoldResult result;
    result.fold_index = fold_index;
    const FoldData data =
        prepare_fold(base, fold, fold_index, plan.preprocess, plan.seed);

    // Real-train/real-test baseline; the trained classifiers double as the
    // TR-TS models.
    std::map<std::string, clf::TrainedClassifier> on_real;
    for (const auto& spec : plan.classifiers) {
        try {
            auto model =
                clf::fit_classifier(spec, data.train.features, data.train.labels);
            result.baseline[spec.kind] =
                score_cell(model, data.test.features, data.test.labels);
            on_real.emplace(spec.kind, std::move(model));
        } catch (const std::exception& e) {
            result.baseline[spec.kind] = failed_cell(e.what());
        }
    }

    for (std::size_t g = 0; g < plan.generators.size(); ++g) {
        const auto& entry = plan.generators[g];
        GeneratorFoldOutcome outcome;
        TabularDataset synth;
        bool have_synth = false;
        try {
            const std::string model_id =
                entry.name + ":fold" + std::to_string(fold_index);
            const gen::TrainedGenerator model =
                entry.is_external()
                    ? gen::import_external_synthetic(entry.external_path,
                                                     data.train.schema)
                    : gen::fit(entry.config, data.train,
                               derive_seed(plan.seed, kFitStream,
                                           static_cast<std::uint64_t>(fold_index),
                                           g),
                               make_fit_hooks(log, model_id));
            outcome.trace = model.trace();
            const int n0 = plan.synthetic_per_class > 0
                               ? plan.synthetic_per_class
                               : data.train.class_count(0);
            const int n1 = plan.synthetic_per_class > 0
                               ? plan.synthetic_per_class
                               : data.train.class_count(1);
            synth = assemble_synthetic(
                model, n0, n1,
                derive_seed(plan.seed, kSampleStream,
                            static_cast<std::uint64_t>(fold_index), g),
                data.train.schema);
            have_synth = true;
        } catch (const std::exception& e) {
            outcome.failed = true;
            outcome.error = e.what();
        }

        if (have_synth) {
            try {
                outcome.fidelity = metrics::fidelity_scores(
                    data.train, synth,
                    derive_seed(plan.seed, kFidelityStream,
                                static_cast<std::uint64_t>(fold_index), g));
            } catch (const std::exception&) {
                outcome.fidelity_failed = true;
            }
        } else {
            outcome.fidelity_failed = true;
        }

        for (const auto& spec : plan.classifiers) {
            CellPair pair;
            if (!have_synth) {
                pair.tr_ts = failed_cell(outcome.error);
                pair.ts_tr = failed_cell(outcome.error);
            } else {
                const auto it = on_real.find(spec.kind);
                if (it == on_real.end()) {
                    pair.tr_ts = failed_cell("real-train classifier unavailable");
                } else {
                    try {
                        pair.tr_ts = score_cell(it->second, synth.features,
                                                synth.labels);
                    } catch (const std::exception& e) {
                        pair.tr_ts = failed_cell(e.what());
                    }
                }
                try {
                    const auto model = clf::fit_classifier(
                        spec, synth.features, synth.labels);
                    pair.ts_tr =
                        score_cell(model, data.test.features, data.test.labels);
                } catch (const std::exception& e) {
                    pair.ts_tr = failed_cell(e.what());
                }
            }
            outcome.by_classifier[spec.kind] = pair;
        }
        result.by_generator[entry.name] = outcome;
    }
    return result;
}

} // namespace

EvaluationReport run_experiment(const ExperimentPlan& plan,
                                const RunHooks& hooks) {
    plan.validate();
    const monitor::ClockFn clock =
        hooks.clock ? hooks.clock : monitor::system_clock_fn();

    TabularDataset data = dataio::load_dataset(plan.dataset_path);
    data.validate();
    if (hooks.access_log) {
        data = data.with_access_log(hooks.access_log);
    }
    const FoldPlan fold_plan = dataio::stratified_k_fold(data, plan.k, plan.seed);

    EvaluationReport report;
    report.plan = plan;
    report.seed = plan.seed;
    report.parallel = plan.parallel_folds;
    report.timestamp = clock();
    report.folds.resize(static_cast<std::size_t>(plan.k));

    auto run_fold = [&](int i) {
        const double started = clock();
        report.folds[static_cast<std::size_t>(i)] = evaluate_fold(
            data, fold_plan.folds[static_cast<std::size_t>(i)], i, plan,
            hooks.log);
        if (hooks.log != nullptr) {
            hooks.log->record_phase("fold" + std::to_string(i),
                                    clock() - started);
        }
    };

    if (plan.parallel_folds) {
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(
            static_cast<std::size_t>(plan.k));
        workers.reserve(static_cast<std::size_t>(plan.k));
        for (int i = 0; i < plan.k; ++i) {
            workers.emplace_back([&, i]() {
                try {
                    run_fold(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            });
        }
        for (auto& worker : workers) worker.join();
        for (const auto& error : errors) {
            if (error) std::rethrow_exception(error);
        }
    } else {
        for (int i = 0; i < plan.k; ++i) run_fold(i);
    }

    build_aggregates(report);
    return report;
}

} // namespace tabsynth::eval
