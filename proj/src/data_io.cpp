#include "tabsynth/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tabsynth/rng.hpp"

namespace tabsynth {

void FeatureSchema::validate() const {
    if (names.empty()) throw Error(ErrorCode::SchemaMismatch, "schema has no features");
    if (kinds.size() != names.size())
        throw Error(ErrorCode::SchemaMismatch, "kinds/names length mismatch");
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty()) throw Error(ErrorCode::SchemaMismatch, "empty feature name");
        if (!seen.insert(n).second)
            throw Error(ErrorCode::SchemaMismatch, "duplicate feature name '" + n + "'");
    }
    if (seen.contains(label_name))
        throw Error(ErrorCode::SchemaMismatch, "label column '" + label_name + "' also listed as feature");
}

void AccessLog::record(std::string_view phase, std::span<const int> indices) {
    std::lock_guard lock(mutex_);
    auto& s = by_phase_[std::string(phase)];
    s.insert(indices.begin(), indices.end());
}

std::set<int> AccessLog::accessed(const std::string& phase) const {
    std::lock_guard lock(mutex_);
    auto it = by_phase_.find(phase);
    return it == by_phase_.end() ? std::set<int>{} : it->second;
}

std::vector<std::string> AccessLog::phases() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [k, v] : by_phase_) out.push_back(k);
    return out;
}

void TabularDataset::validate() const {
    schema.validate();
    if (rows() < 1) throw Error(ErrorCode::MalformedData, "dataset has no rows");
    if (cols() < 1) throw Error(ErrorCode::MalformedData, "dataset has no features");
    if (labels.size() != rows())
        throw Error(ErrorCode::DimensionMismatch, "labels length differs from row count");
    if (static_cast<Eigen::Index>(schema.width()) != cols())
        throw Error(ErrorCode::DimensionMismatch, "schema width differs from feature count");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        if (labels[i] != 0 && labels[i] != 1)
            throw Error(ErrorCode::NonBinaryLabel, "label at row " + std::to_string(i) + " is not 0/1");
    for (Eigen::Index j = 0; j < cols(); ++j) {
        if (schema.kinds[static_cast<std::size_t>(j)] != FeatureKind::binary) continue;
        for (Eigen::Index i = 0; i < rows(); ++i) {
            const double v = features(i, j);
            if (v != 0.0 && v != 1.0)
                throw Error(ErrorCode::MalformedData,
                            "binary column '" + schema.names[static_cast<std::size_t>(j)] +
                                "' holds non-binary value at row " + std::to_string(i));
        }
    }
}

int TabularDataset::class_count(int label) const {
    int c = 0;
    for (Eigen::Index i = 0; i < labels.size(); ++i) c += (labels[i] == label);
    return c;
}

std::vector<int> TabularDataset::class_indices(int label) const {
    std::vector<int> out;
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        if (labels[i] == label) out.push_back(static_cast<int>(i));
    return out;
}

TabularDataset TabularDataset::take_rows(std::span<const int> indices, std::string_view phase) const {
    if (access_log && !phase.empty()) access_log->record(phase, indices);
    TabularDataset out;
    out.schema = schema;
    out.features.resize(static_cast<Eigen::Index>(indices.size()), cols());
    out.labels.resize(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        if (src < 0 || src >= rows())
            throw Error(ErrorCode::DimensionMismatch, "row index " + std::to_string(src) + " out of range");
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(src);
        out.labels[static_cast<Eigen::Index>(i)] = labels[src];
    }
    return out;
}

TabularDataset TabularDataset::with_access_log(std::shared_ptr<AccessLog> log) const {
    TabularDataset out = *this;
    out.access_log = std::move(log);
    return out;
}

} // namespace tabsynth

namespace tabsynth::dataio {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string s = trim(raw);
    auto fail = [&](const char* what) -> Error {
        return Error(ErrorCode::MalformedData, std::string(what) + " at row " + std::to_string(row) +
                                                   ", column '" + column + "'");
    };
    if (s.empty()) throw fail("empty cell");
    double value = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) throw fail("non-numeric cell");
    if (!std::isfinite(value)) throw fail("non-finite cell");
    return value;
}

} // namespace

TabularDataset load_dataset(const std::string& path, const LoadOptions& options) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::MissingFile, "no such file: " + path);
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorCode::MalformedData, "file is empty: " + path);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);

    const std::string label_name =
        options.schema_hint ? options.schema_hint->label_name : options.label_column;
    int label_col = -1;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == label_name) label_col = static_cast<int>(j);
    if (label_col < 0)
        throw Error(ErrorCode::UnknownLabelColumn, "no column named '" + label_name + "' in " + path);
    if (header.size() < 2)
        throw Error(ErrorCode::MalformedData, "header has no feature columns");

    std::vector<std::string> feature_names;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (static_cast<int>(j) != label_col) feature_names.push_back(header[j]);

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw Error(ErrorCode::MalformedData, "ragged row at line " + std::to_string(line_no) +
                                                      " (" + std::to_string(cells.size()) + " cells, expected " +
                                                      std::to_string(header.size()) + ")");
        std::vector<double> row;
        row.reserve(feature_names.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const double v = parse_cell(cells[j], line_no, header[j]);
            if (static_cast<int>(j) == label_col) {
                if (v != 0.0 && v != 1.0)
                    throw Error(ErrorCode::NonBinaryLabel,
                                "label at row " + std::to_string(line_no) + " is " + cells[j]);
                labels.push_back(static_cast<int>(v));
            } else {
                row.push_back(v);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorCode::MalformedData, "no data rows in " + path);

    TabularDataset ds;
    ds.schema.names = feature_names;
    ds.schema.label_name = label_name;
    const std::size_t d = feature_names.size();
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    ds.labels.resize(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        ds.labels[static_cast<Eigen::Index>(i)] = labels[i];
    }

    if (options.schema_hint) {
        const auto& hint = *options.schema_hint;
        hint.validate();
        if (hint.names != feature_names)
            throw Error(ErrorCode::SchemaMismatch, "schema hint names do not match file header");
        ds.schema = hint;
    } else {
        ds.schema.kinds.resize(d, FeatureKind::continuous);
        for (std::size_t j = 0; j < d; ++j) {
            bool binary = true;
            for (Eigen::Index i = 0; i < ds.rows() && binary; ++i) {
                const double v = ds.features(i, static_cast<Eigen::Index>(j));
                binary = (v == 0.0 || v == 1.0);
            }
            ds.schema.kinds[j] = binary ? FeatureKind::binary : FeatureKind::continuous;
        }
    }
    ds.schema.validate();
    return ds;
}

void save_dataset(const TabularDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot write: " + path);
    for (std::size_t j = 0; j < dataset.schema.names.size(); ++j) out << dataset.schema.names[j] << ',';
    out << dataset.schema.label_name << '\n';
    out.precision(17);
    for (Eigen::Index i = 0; i < dataset.rows(); ++i) {
        for (Eigen::Index j = 0; j < dataset.cols(); ++j) {
            const double v = dataset.features(i, j);
            if (v == std::floor(v) && std::abs(v) < 1e15)
                out << static_cast<long long>(v);
            else
                out << v;
            out << ',';
        }
        out << dataset.labels[i] << '\n';
    }
}

NormalizationStats fit_normalization(const TabularDataset& dataset) {
    dataset.validate();
    NormalizationStats stats;
    stats.kinds = dataset.schema.kinds;
    stats.min = dataset.features.colwise().minCoeff();
    stats.max = dataset.features.colwise().maxCoeff();
    return stats;
}

TabularDataset apply_normalization(const NormalizationStats& stats, const TabularDataset& dataset, bool clamp) {
    if (static_cast<Eigen::Index>(stats.kinds.size()) != dataset.cols())
        throw Error(ErrorCode::DimensionMismatch, "normalization stats width differs from dataset");
    TabularDataset out = dataset;
    for (Eigen::Index j = 0; j < dataset.cols(); ++j) {
        if (stats.kinds[static_cast<std::size_t>(j)] == FeatureKind::binary) continue;
        const double lo = stats.min[j];
        const double hi = stats.max[j];
        const double span = hi - lo;
        if (span <= 0.0) {
            out.features.col(j).setZero();
            continue;
        }
        out.features.col(j) = (dataset.features.col(j).array() - lo) / span;
        if (clamp)
            out.features.col(j) = out.features.col(j).cwiseMax(0.0).cwiseMin(1.0);
    }
    return out;
}

TabularDataset invert_normalization(const NormalizationStats& stats, const TabularDataset& dataset) {
    if (static_cast<Eigen::Index>(stats.kinds.size()) != dataset.cols())
        throw Error(ErrorCode::DimensionMismatch, "normalization stats width differs from dataset");
    TabularDataset out = dataset;
    for (Eigen::Index j = 0; j < dataset.cols(); ++j) {
        if (stats.kinds[static_cast<std::size_t>(j)] == FeatureKind::binary) continue;
        const double lo = stats.min[j];
        const double span = stats.max[j] - lo;
        out.features.col(j) = dataset.features.col(j).array() * span + lo;
    }
    return out;
}

std::pair<TabularDataset, NormalizationStats> min_max_normalize(const TabularDataset& dataset) {
    NormalizationStats stats = fit_normalization(dataset);
    return {apply_normalization(stats, dataset, false), stats};
}

Eigen::VectorXd chi_square_scores(const TabularDataset& dataset) {
    dataset.validate();
    if ((dataset.features.array() < 0.0).any())
        throw Error(ErrorCode::NegativeFeatureValue, "chi-square needs nonnegative features");
    const Eigen::Index n = dataset.rows();
    const Eigen::Index d = dataset.cols();
    Eigen::VectorXd scores(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double colmax = dataset.features.col(j).maxCoeff();
        // 2x2 table: rows are feature mass / complement mass, columns are classes.
        double mass[2] = {0.0, 0.0};
        double comass[2] = {0.0, 0.0};
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = dataset.labels[i];
            const double v = dataset.features(i, j);
            mass[c] += v;
            comass[c] += colmax - v;
        }
        const double row_mass = mass[0] + mass[1];
        const double row_comass = comass[0] + comass[1];
        const double col0 = mass[0] + comass[0];
        const double col1 = mass[1] + comass[1];
        const double total = row_mass + row_comass;
        double chi2 = 0.0;
        if (total > 0.0) {
            const double obs[4] = {mass[0], mass[1], comass[0], comass[1]};
            const double exp[4] = {row_mass * col0 / total, row_mass * col1 / total,
                                   row_comass * col0 / total, row_comass * col1 / total};
            for (int c = 0; c < 4; ++c)
                if (exp[c] > 0.0) chi2 += (obs[c] - exp[c]) * (obs[c] - exp[c]) / exp[c];
        }
        scores[j] = chi2;
    }
    return scores;
}

std::vector<int> chi_square_top_indices(const TabularDataset& dataset, int top_k) {
    if (top_k <= 0) throw Error(ErrorCode::ZeroK, "top_k must be positive");
    const Eigen::VectorXd scores = chi_square_scores(dataset);
    const int d = static_cast<int>(dataset.cols());
    std::vector<int> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    // Higher score first; lower original index wins ties.
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    const int keep = std::min(top_k, d);
    std::vector<int> selected(order.begin(), order.begin() + keep);
    std::sort(selected.begin(), selected.end());
    return selected;
}

TabularDataset select_columns(const TabularDataset& dataset, const std::vector<int>& indices) {
    TabularDataset out;
    out.labels = dataset.labels;
    out.access_log = nullptr;
    out.schema.label_name = dataset.schema.label_name;
    out.features.resize(dataset.rows(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const int src = indices[j];
        if (src < 0 || src >= dataset.cols())
            throw Error(ErrorCode::DimensionMismatch, "column index out of range");
        out.features.col(static_cast<Eigen::Index>(j)) = dataset.features.col(src);
        out.schema.names.push_back(dataset.schema.names[static_cast<std::size_t>(src)]);
        out.schema.kinds.push_back(dataset.schema.kinds[static_cast<std::size_t>(src)]);
    }
    return out;
}

TabularDataset chi_square_select(const TabularDataset& dataset, int top_k) {
    if (top_k >= dataset.cols()) {
        if (top_k <= 0) throw Error(ErrorCode::ZeroK, "top_k must be positive");
        return dataset;
    }
    return select_columns(dataset, chi_square_top_indices(dataset, top_k));
}

TabularDataset downsample_balance(const TabularDataset& dataset, int n_per_class, std::uint64_t seed) {
    if (n_per_class <= 0)
        throw Error(ErrorCode::InsufficientClassSamples, "n_per_class must be positive");
    std::vector<int> keep;
    for (int c = 0; c < 2; ++c) {
        std::vector<int> idx = dataset.class_indices(c);
        if (static_cast<int>(idx.size()) < n_per_class)
            throw Error(ErrorCode::InsufficientClassSamples,
                        "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                            " samples, need " + std::to_string(n_per_class));
        Rng rng(derive_seed(seed, 0x6261lu, static_cast<std::uint64_t>(c)));
        rng.shuffle(idx);
        keep.insert(keep.end(), idx.begin(), idx.begin() + n_per_class);
    }
    std::sort(keep.begin(), keep.end());
    return dataset.take_rows(keep, "balance");
}

FoldPlan stratified_k_fold(const TabularDataset& dataset, int k, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorCode::KTooSmall, "k must be at least 2");
    for (int c = 0; c < 2; ++c) {
        const int count = dataset.class_count(c);
        if (count > 0 && count < k)
            throw Error(ErrorCode::KTooLarge,
                        "class " + std::to_string(c) + " has only " + std::to_string(count) + " samples");
    }
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.resize(static_cast<std::size_t>(k));
    std::vector<std::vector<int>> test_sets(static_cast<std::size_t>(k));
    for (int c = 0; c < 2; ++c) {
        std::vector<int> idx = dataset.class_indices(c);
        Rng rng(derive_seed(seed, 0x666flu, static_cast<std::uint64_t>(c)));
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i)
            test_sets[i % static_cast<std::size_t>(k)].push_back(idx[i]);
    }
    const int n = static_cast<int>(dataset.rows());
    for (int f = 0; f < k; ++f) {
        auto& fold = plan.folds[static_cast<std::size_t>(f)];
        fold.test = test_sets[static_cast<std::size_t>(f)];
        std::sort(fold.test.begin(), fold.test.end());
        std::vector<bool> in_test(static_cast<std::size_t>(n), false);
        for (int i : fold.test) in_test[static_cast<std::size_t>(i)] = true;
        for (int i = 0; i < n; ++i)
            if (!in_test[static_cast<std::size_t>(i)]) fold.train.push_back(i);
    }
    return plan;
}

std::string fold_plan_to_json(const FoldPlan& plan) {
    nlohmann::json j;
    j["k"] = plan.k;
    j["seed"] = plan.seed;
    j["folds"] = nlohmann::json::array();
    for (const auto& f : plan.folds) j["folds"].push_back({{"train", f.train}, {"test", f.test}});
    return j.dump();
}

FoldPlan fold_plan_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    FoldPlan plan;
    plan.k = j.at("k").get<int>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("folds")) {
        Fold fold;
        fold.train = f.at("train").get<std::vector<int>>();
        fold.test = f.at("test").get<std::vector<int>>();
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

} // namespace tabsynth::dataio
