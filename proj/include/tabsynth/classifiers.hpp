#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include <nlohmann/json.hpp>

#include "tabsynth/error.hpp"

namespace tabsynth::clf {

using Mat = Eigen::MatrixXd;

inline const std::vector<std::string>& classifier_kinds() {
    static const std::vector<std::string> kinds = {
        "svm",           "random_forest", "mlp",        "knn",
        "decision_tree", "logistic",      "naive_bayes"};
    return kinds;
}

struct ClassifierSpec {
    std::string kind;
    nlohmann::json hyperparameters = nlohmann::json::object();
    std::uint64_t seed = 0;

    void validate() const; // UnknownClassifier / ConfigInvalid
    nlohmann::json to_json() const;
    static ClassifierSpec from_json(const nlohmann::json& j);
};

struct PredictionBatch {
    Eigen::VectorXi labels; // {0, 1}
    Eigen::VectorXd scores; // positive-class score; label = score >= 0.5
};

class TrainedClassifier {
public:
    struct Impl;

    const ClassifierSpec& spec() const { return spec_; }
    int feature_dim() const { return feature_dim_; }
    PredictionBatch predict(const Mat& X) const;

private:
    friend TrainedClassifier fit_classifier(const ClassifierSpec&, const Mat&,
                                            const Eigen::VectorXi&);
    ClassifierSpec spec_;
    int feature_dim_ = 0;
    std::shared_ptr<const Impl> impl_;
};

// Training rows are put in a canonical lexicographic order internally, so
// predictions do not depend on the caller's row order.
TrainedClassifier fit_classifier(const ClassifierSpec& spec, const Mat& X,
                                 const Eigen::VectorXi& y);

} // namespace tabsynth::clf
