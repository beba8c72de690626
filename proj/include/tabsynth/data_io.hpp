#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tabsynth/dataset.hpp"

namespace tabsynth::dataio {

struct LoadOptions {
    std::optional<FeatureSchema> schema_hint;
    std::string label_column = "label";
};

// Reads a CSV with a mandatory header row into a dataset. Column order follows
// the header. Without a schema hint, a column is tagged binary iff every
// observed value is exactly 0 or 1.
TabularDataset load_dataset(const std::string& path, const LoadOptions& options = {});

void save_dataset(const TabularDataset& dataset, const std::string& path);

// Per-feature min/max fitted on one dataset so the same affine map can be
// applied to another split or inverted later. Binary columns pass through.
struct NormalizationStats {
    Eigen::VectorXd min;
    Eigen::VectorXd max;
    std::vector<FeatureKind> kinds;
};

NormalizationStats fit_normalization(const TabularDataset& dataset);

// Continuous columns map through (x - min) / (max - min); constant columns go
// to zero. `clamp` bounds outputs to [0, 1], which matters when the stats came
// from a different split.
TabularDataset apply_normalization(const NormalizationStats& stats, const TabularDataset& dataset,
                                   bool clamp = false);

TabularDataset invert_normalization(const NormalizationStats& stats, const TabularDataset& dataset);

std::pair<TabularDataset, NormalizationStats> min_max_normalize(const TabularDataset& dataset);

// Chi-square statistic of each feature against the label, computed on the
// 2x2 table of per-class feature mass vs. complement mass (mass = column sum,
// complement = column-max minus value). Matches the classic contingency-table
// statistic for binary columns.
Eigen::VectorXd chi_square_scores(const TabularDataset& dataset);

// Indices of the top_k features by score, ties broken by lower column index,
// returned in original column order.
std::vector<int> chi_square_top_indices(const TabularDataset& dataset, int top_k);

TabularDataset select_columns(const TabularDataset& dataset, const std::vector<int>& indices);

TabularDataset chi_square_select(const TabularDataset& dataset, int top_k);

TabularDataset downsample_balance(const TabularDataset& dataset, int n_per_class, std::uint64_t seed);

FoldPlan stratified_k_fold(const TabularDataset& dataset, int k, std::uint64_t seed);

std::string fold_plan_to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const std::string& text);

} // namespace tabsynth::dataio
