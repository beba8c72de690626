#pragma once

#include <cstdint>

#include <Eigen/Core>

#include <nlohmann/json.hpp>

#include "tabsynth/dataset.hpp"
#include "tabsynth/error.hpp"

namespace tabsynth::metrics {

using Mat = Eigen::MatrixXd;

struct ConfusionCounts {
    long tp = 0, fp = 0, fn = 0, tn = 0;

    long total() const { return tp + fp + fn + tn; }
    nlohmann::json to_json() const;
    static ConfusionCounts from_json(const nlohmann::json& j);
};

struct UtilityScores {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0, auc = 0, mcc = 0;

    nlohmann::json to_json() const;
    static UtilityScores from_json(const nlohmann::json& j);
};

struct FidelityScores {
    // row-pair distances
    double euclidean = 0, hellinger = 0, manhattan = 0, hamming = 0,
           jaccard = 0;
    // distributional divergences
    double js_divergence = 0, wasserstein = 0, mmd = 0;

    nlohmann::json to_json() const;
    static FidelityScores from_json(const nlohmann::json& j);
};

ConfusionCounts confusion(const Eigen::VectorXi& y_true,
                          const Eigen::VectorXi& y_pred);

// accuracy/precision/recall/f1/mcc from the counts; auc from the scores via
// the rank statistic (ties get half credit). Any 0/0 becomes 0.
UtilityScores utility_scores(const ConfusionCounts& cm,
                             const Eigen::VectorXi& y_true,
                             const Eigen::VectorXd& scores);

// The five row-pair distances. Synthetic rows are paired with same-class
// real rows without replacement, cycling when the synthetic side is larger:
// any block that consumes the full real class pairs positionally (identical
// datasets therefore self-pair and score zero), and a trailing partial block
// is drawn uniformly under `seed`. hellinger is histogram-based (summed over
// features) rather than pair-based.
struct DistanceBundle {
    double euclidean = 0, hellinger = 0, manhattan = 0, hamming = 0,
           jaccard = 0;
};
DistanceBundle dataset_distances(const TabularDataset& real,
                                 const TabularDataset& synth,
                                 std::uint64_t seed);

struct DivergenceBundle {
    double js_divergence = 0, wasserstein = 0, mmd = 0;
};
DivergenceBundle divergence_scores(const TabularDataset& real,
                                   const TabularDataset& synth);

FidelityScores fidelity_scores(const TabularDataset& real,
                               const TabularDataset& synth,
                               std::uint64_t seed);

// RBF-kernel two-sample machinery. Bandwidth is the kernel sigma in
// k(a, b) = exp(-||a-b||^2 / (2 sigma^2)).
double median_heuristic_bandwidth(const Mat& x, const Mat& y);
// Unbiased squared-MMD estimate, clamped at 0.
double mmd_rbf(const Mat& x, const Mat& y, double bandwidth);
// Direct O(n^2) double-sum oracle; same estimator, independent arithmetic.
double mmd_bruteforce(const Mat& x, const Mat& y, double bandwidth);

} // namespace tabsynth::metrics
