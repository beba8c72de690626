#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tabsynth/error.hpp"

namespace tabsynth {

enum class FeatureKind { binary, continuous };

struct FeatureSchema {
    std::vector<std::string> names;
    std::vector<FeatureKind> kinds;
    std::string label_name = "label";

    std::size_t width() const { return names.size(); }
    void validate() const;
    bool operator==(const FeatureSchema&) const = default;
};

// Records which rows of a dataset were materialized, keyed by pipeline phase.
// The evaluation harness attaches one of these to the fold universe so tests
// can prove the test split never reaches a fitting phase.
class AccessLog {
public:
    void record(std::string_view phase, std::span<const int> indices);
    std::set<int> accessed(const std::string& phase) const;
    std::vector<std::string> phases() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::set<int>> by_phase_;
};

struct TabularDataset {
    Eigen::MatrixXd features;              // n x d
    Eigen::VectorXi labels;                // n entries, each 0 or 1
    FeatureSchema schema;
    std::shared_ptr<AccessLog> access_log; // optional; not inherited by row subsets

    Eigen::Index rows() const { return features.rows(); }
    Eigen::Index cols() const { return features.cols(); }

    void validate() const;

    // Count of rows carrying the given label.
    int class_count(int label) const;
    std::vector<int> class_indices(int label) const;

    // Materialize a row subset. When an access log is attached the request is
    // recorded under `phase`. The subset does not carry the log.
    TabularDataset take_rows(std::span<const int> indices, std::string_view phase = "") const;

    TabularDataset with_access_log(std::shared_ptr<AccessLog> log) const;
};

struct Fold {
    std::vector<int> train;
    std::vector<int> test;
};

struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<Fold> folds;
};

} // namespace tabsynth
