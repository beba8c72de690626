#include "tabsynth/classifiers.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "tabsynth/nets.hpp"
#include "tabsynth/rng.hpp"

namespace tabsynth::clf {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

void check_hyperparameter_keys(const nlohmann::json& params,
                               const std::set<std::string>& allowed,
                               const std::string& kind) {
    if (!params.is_object())
        throw Error(ErrorCode::ConfigInvalid,
                    "hyperparameters for " + kind + " must be an object");
    for (auto it = params.begin(); it != params.end(); ++it) {
        if (!allowed.count(it.key()))
            throw Error(ErrorCode::ConfigInvalid,
                        "unknown hyperparameter '" + it.key() + "' for " +
                            kind);
    }
}

double get_number(const nlohmann::json& params, const std::string& key,
                  double fallback) {
    if (!params.contains(key)) return fallback;
    if (!params.at(key).is_number())
        throw Error(ErrorCode::ConfigInvalid,
                    "hyperparameter '" + key + "' must be numeric");
    return params.at(key).get<double>();
}

int get_int(const nlohmann::json& params, const std::string& key,
            int fallback) {
    double v = get_number(params, key, fallback);
    if (v != std::floor(v))
        throw Error(ErrorCode::ConfigInvalid,
                    "hyperparameter '" + key + "' must be an integer");
    return static_cast<int>(v);
}

} // namespace

void ClassifierSpec::validate() const {
    const auto& kinds = classifier_kinds();
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
        std::string names;
        for (const auto& k : kinds) names += (names.empty() ? "" : ", ") + k;
        throw Error(ErrorCode::UnknownClassifier,
                    "unknown classifier '" + kind + "' (expected one of " +
                        names + ")");
    }
    static const std::map<std::string, std::set<std::string>> allowed = {
        {"svm", {"C", "gamma", "tol", "max_passes", "max_iter"}},
        {"random_forest", {"n_trees", "max_depth", "min_samples_leaf"}},
        {"mlp", {"hidden", "epochs", "learning_rate", "batch_size"}},
        {"knn", {"k"}},
        {"decision_tree", {"max_depth", "min_samples_leaf"}},
        {"logistic", {"max_iter", "l2", "tol"}},
        {"naive_bayes", {"var_smoothing"}},
    };
    check_hyperparameter_keys(hyperparameters, allowed.at(kind), kind);
}

nlohmann::json ClassifierSpec::to_json() const {
    return nlohmann::json{{"kind", kind},
                          {"hyperparameters", hyperparameters},
                          {"seed", seed}};
}

ClassifierSpec ClassifierSpec::from_json(const nlohmann::json& j) {
    ClassifierSpec spec;
    spec.kind = j.at("kind").get<std::string>();
    if (j.contains("hyperparameters"))
        spec.hyperparameters = j.at("hyperparameters");
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

// ------------------------------------------------------------------ shared

struct TrainedClassifier::Impl {
    virtual ~Impl() = default;
    virtual Eigen::VectorXd score(const Mat& X) const = 0;
};

namespace {

using Impl = TrainedClassifier::Impl;

// Lexicographic row order over (features, label); makes every kind
// independent of the caller's row order.
std::vector<int> canonical_order(const Mat& X, const Eigen::VectorXi& y) {
    std::vector<int> idx(X.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
        }
        return y(a) < y(b);
    });
    return idx;
}

// ------------------------------------------------------------- naive bayes

struct NaiveBayesImpl : Impl {
    Eigen::VectorXd mean[2], var[2];
    double log_prior[2] = {0, 0};

    static std::shared_ptr<Impl> fit(const nlohmann::json& params,
                                     const Mat& X, const Eigen::VectorXi& y) {
        double smoothing = get_number(params, "var_smoothing", 1e-9);
        auto impl = std::make_shared<NaiveBayesImpl>();
        double max_var = 0.0;
        for (int c = 0; c < 2; ++c) {
            std::vector<int> rows;
            for (int i = 0; i < y.size(); ++i)
                if (y(i) == c) rows.push_back(i);
            Mat Xc(rows.size(), X.cols());
            for (std::size_t r = 0; r < rows.size(); ++r)
                Xc.row(r) = X.row(rows[r]);
            impl->mean[c] = Xc.colwise().mean();
            Mat centered = Xc.rowwise() - impl->mean[c].transpose();
            impl->var[c] =
                centered.array().square().colwise().mean().transpose();
            max_var = std::max(max_var, impl->var[c].maxCoeff());
            impl->log_prior[c] =
                std::log(double(rows.size()) / double(y.size()));
        }
        double floor = smoothing * std::max(max_var, 1.0);
        for (int c = 0; c < 2; ++c)
            impl->var[c] = impl->var[c].cwiseMax(floor);
        return impl;
    }

    Eigen::VectorXd score(const Mat& X) const override {
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            double ll[2];
            for (int c = 0; c < 2; ++c) {
                double acc = log_prior[c];
                for (Eigen::Index j = 0; j < X.cols(); ++j) {
                    double d = X(i, j) - mean[c](j);
                    acc += -0.5 * (std::log(2 * M_PI * var[c](j)) +
                                   d * d / var[c](j));
                }
                ll[c] = acc;
            }
            out(i) = sigmoid(ll[1] - ll[0]);
        }
        return out;
    }
};

// ---------------------------------------------------------------- logistic

struct LogisticImpl : Impl {
    Eigen::VectorXd w; // includes intercept at index d

    static std::shared_ptr<Impl> fit(const nlohmann::json& params,
                                     const Mat& X, const Eigen::VectorXi& y) {
        int max_iter = get_int(params, "max_iter", 100);
        double l2 = get_number(params, "l2", 1e-6);
        double tol = get_number(params, "tol", 1e-10);

        const Eigen::Index n = X.rows(), d = X.cols();
        Mat A(n, d + 1);
        A.leftCols(d) = X;
        A.col(d).setOnes();
        Eigen::VectorXd t(n);
        for (Eigen::Index i = 0; i < n; ++i) t(i) = y(i);

        auto impl = std::make_shared<LogisticImpl>();
        impl->w = Eigen::VectorXd::Zero(d + 1);
        for (int iter = 0; iter < max_iter; ++iter) {
            Eigen::VectorXd z = A * impl->w;
            Eigen::VectorXd p(n);
            for (Eigen::Index i = 0; i < n; ++i) p(i) = sigmoid(z(i));
            Eigen::VectorXd g = A.transpose() * (t - p) - l2 * impl->w;
            Eigen::VectorXd r = (p.array() * (1 - p.array())).cwiseMax(1e-9);
            Mat H = A.transpose() * r.asDiagonal() * A;
            H.diagonal().array() += l2 + 1e-12;
            Eigen::VectorXd delta = H.ldlt().solve(g);
            impl->w += delta;
            if (delta.norm() < tol) break;
        }
        return impl;
    }

    Eigen::VectorXd score(const Mat& X) const override {
        Eigen::VectorXd z =
            X * w.head(X.cols()) + Eigen::VectorXd::Constant(X.rows(), w(X.cols()));
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
        return z;
    }
};

// --------------------------------------------------------------------- knn

struct KnnImpl : Impl {
    Mat train;
    Eigen::VectorXi labels;
    int k = 5;

    static std::shared_ptr<Impl> fit(const nlohmann::json& params,
                                     const Mat& X, const Eigen::VectorXi& y) {
        auto impl = std::make_shared<KnnImpl>();
        impl->k = get_int(params, "k", 5);
        if (impl->k < 1)
            throw Error(ErrorCode::ConfigInvalid, "knn k must be >= 1");
        impl->train = X;
        impl->labels = y;
        return impl;
    }

    Eigen::VectorXd score(const Mat& X) const override {
        int kk = std::min<int>(k, int(train.rows()));
        Eigen::VectorXd out(X.rows());
        std::vector<std::pair<double, int>> dist(train.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            for (Eigen::Index j = 0; j < train.rows(); ++j)
                dist[j] = {(train.row(j) - X.row(i)).squaredNorm(), int(j)};
            std::nth_element(dist.begin(), dist.begin() + (kk - 1),
                             dist.end());
            double cutoff = dist[kk - 1].first;
            // Rows strictly closer than the k-th distance always count; the
            // tied group at the cutoff contributes its average label for the
            // remaining slots, so exact ties cannot bias the vote.
            double pos_strict = 0, pos_tied = 0;
            int n_strict = 0, n_tied = 0;
            for (const auto& [d, j] : dist) {
                if (d < cutoff) {
                    pos_strict += labels(j);
                    ++n_strict;
                } else if (d == cutoff) {
                    pos_tied += labels(j);
                    ++n_tied;
                }
            }
            double slots = kk - n_strict;
            out(i) = (pos_strict + slots * pos_tied / n_tied) / kk;
        }
        return out;
    }
};

// ----------------------------------------------------------- decision tree

struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double score = 0.0; // positive fraction at a leaf
};

struct TreeGrower {
    const Mat& X;
    const Eigen::VectorXi& y;
    int max_depth;
    int min_leaf;
    Rng* feature_rng = nullptr; // when set, split candidates are subsampled
    int features_per_split = 0;
    std::vector<TreeNode> nodes;

    static double gini(int pos, int count) {
        if (count == 0) return 0.0;
        double p = double(pos) / count;
        return 2.0 * p * (1.0 - p);
    }

    int grow(std::vector<int>& rows, int depth) {
        int pos = 0;
        for (int r : rows) pos += y(r);
        TreeNode node;
        node.score = rows.empty() ? 0.0 : double(pos) / rows.size();
        int id = int(nodes.size());
        nodes.push_back(node);
        if (depth >= max_depth || int(rows.size()) < 2 * min_leaf ||
            pos == 0 || pos == int(rows.size()))
            return id;

        // Candidate feature set (all, or a seeded subset for forests).
        std::vector<int> features(X.cols());
        std::iota(features.begin(), features.end(), 0);
        if (feature_rng && features_per_split < int(features.size())) {
            feature_rng->shuffle(features);
            features.resize(features_per_split);
            std::sort(features.begin(), features.end());
        }

        double parent = gini(pos, int(rows.size()));
        double best_gain = 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;

        std::vector<std::pair<double, int>> order(rows.size());
        for (int f : features) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                order[i] = {X(rows[i], f), y(rows[i])};
            std::sort(order.begin(), order.end());
            int left_pos = 0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                left_pos += order[i].second;
                if (order[i].first == order[i + 1].first) continue;
                int nl = int(i) + 1, nr = int(order.size()) - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                double gain = parent -
                              (nl * gini(left_pos, nl) +
                               nr * gini(pos - left_pos, nr)) /
                                  double(order.size());
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold =
                        0.5 * (order[i].first + order[i + 1].first);
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<int> left, right;
        for (int r : rows)
            (X(r, best_feature) <= best_threshold ? left : right).push_back(r);
        if (left.empty() || right.empty()) return id;
        nodes[id].feature = best_feature;
        nodes[id].threshold = best_threshold;
        int l = grow(left, depth + 1);
        int r = grow(right, depth + 1);
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    }
};

double tree_score(const std::vector<TreeNode>& nodes, const Mat& X,
                  Eigen::Index row) {
    int id = 0;
    while (nodes[id].feature >= 0) {
        id = X(row, nodes[id].feature) <= nodes[id].threshold
                 ? nodes[id].left
                 : nodes[id].right;
    }
    return nodes[id].score;
}

struct DecisionTreeImpl : Impl {
    std::vector<TreeNode> nodes;

    static std::shared_ptr<Impl> fit(const nlohmann::json& params,
                                     const Mat& X, const Eigen::VectorXi& y) {
        auto impl = std::make_shared<DecisionTreeImpl>();
        TreeGrower grower{X,
                          y,
                          get_int(params, "max_depth", 10),
                          get_int(params, "min_samples_leaf", 1),
                          nullptr,
                          0,
                          {}};
        std::vector<int> rows(X.rows());
        std::iota(rows.begin(), rows.end(), 0);
        grower.grow(rows, 0);
        impl->nodes = std::move(grower.nodes);
        return impl;
    }

    Eigen::VectorXd score(const Mat& X) const override {
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            out(i) = tree_score(nodes, X, i);
        return out;
    }
};

// ------------------------------------------------------------ random forest

struct RandomForestImpl : Impl {
    std::vector<std::vector<TreeNode>> trees;

    static std::shared_ptr<Impl> fit(const nlohmann::json& params,
                                     const Mat& X, const Eigen::VectorXi& y,
                                     std::uint64_t seed) {
        int n_trees = get_int(params, "n_trees", 25);
        int max_depth = get_int(params, "max_depth", 10);
        int min_leaf = get_int(params, "min_samples_leaf", 1);
        if (n_trees < 1)
            throw Error(ErrorCode::ConfigInvalid, "n_trees must be >= 1");
        auto impl = std::make_shared<RandomForestImpl>();
        int per_split =
            std::max(1, int(std::lround(std::sqrt(double(X.cols())))));
        for (int t = 0; t < n_trees; ++t) {
            Rng rng(derive_seed(seed, 0x7472, std::uint64_t(t)));
            // bootstrap sample
            std::vector<int> rows(X.rows());
            bool both = false;
            while (!both) {
                for (auto& r : rows) r = int(rng.below(std::uint64_t(X.rows())));
                int pos = 0;
                for (int r : rows) pos += y(r);
                both = pos > 0 && pos < int(rows.size());
            }
            TreeGrower grower{X,    y,    max_depth, min_leaf,
                              &rng, per_split, {}};
            grower.grow(rows, 0);
            impl->trees.push_back(std::move(grower.nodes));
        }
        return impl;
    }

    Eigen::VectorXd score(const Mat& X) const override {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(X.rows());
        for (const auto& tree : trees)
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                out(i) += tree_score(tree, X, i);
        return out / double(trees.size());
    }
};

// --------------------------------------------------------------------- mlp

struct MlpImpl : Impl {
    nets::Mlp net;

    static std::shared_ptr<Impl> fit(const nlohmann::json& params,
                                     const Mat& X, const Eigen::VectorXi& y,
                                     std::uint64_t seed) {
        int hidden = get_int(params, "hidden", 32);
        int epochs = get_int(params, "epochs", 80);
        double lr = get_number(params, "learning_rate", 0.01);
        int batch_size = get_int(params, "batch_size", 32);

        auto impl = std::make_shared<MlpImpl>();
        Rng rng(derive_seed(seed, 0x6d6c70, 0));
        impl->net = nets::Mlp({int(X.cols()), hidden, 1},
                              nets::Activation::tanh,
                              nets::Activation::linear, rng);
        blocks::OptimizerSpec spec;
        spec.learning_rate = lr;
        nets::Optimizer opt(spec);
        auto parameters = impl->net.parameters();

        Mat targets(X.rows(), 1);
        for (Eigen::Index i = 0; i < X.rows(); ++i) targets(i, 0) = y(i);

        std::vector<int> order(X.rows());
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < epochs; ++epoch) {
            rng.shuffle(order);
            for (std::size_t start = 0; start < order.size();
                 start += std::size_t(batch_size)) {
                std::size_t stop =
                    std::min(order.size(), start + std::size_t(batch_size));
                Mat xb(stop - start, X.cols());
                Mat tb(stop - start, 1);
                for (std::size_t i = start; i < stop; ++i) {
                    xb.row(i - start) = X.row(order[i]);
                    tb(i - start, 0) = targets(order[i], 0);
                }
                ad::Var logits = impl->net.forward(ad::constant(xb));
                ad::Var loss = ad::bce_with_logits(logits, ad::constant(tb));
                auto grads = ad::backward(loss, parameters);
                opt.step(parameters, grads);
            }
        }
        return impl;
    }

    Eigen::VectorXd score(const Mat& X) const override {
        Mat z = net.forward_value(X);
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = sigmoid(z(i, 0));
        return out;
    }
};

// --------------------------------------------------------------------- svm

// Soft-margin RBF-kernel machine trained by sequential minimal optimization
// with an error cache.
struct SvmImpl : Impl {
    Mat support;
    Eigen::VectorXd coeff; // alpha_i * y_i, y in {-1, +1}
    double bias = 0.0;
    double gamma = 1.0;

    static double kernel(const Eigen::RowVectorXd& a,
                         const Eigen::RowVectorXd& b, double gamma) {
        return std::exp(-gamma * (a - b).squaredNorm());
    }

    static std::shared_ptr<Impl> fit(const nlohmann::json& params,
                                     const Mat& X, const Eigen::VectorXi& y,
                                     std::uint64_t seed) {
        double C = get_number(params, "C", 1.0);
        double tol = get_number(params, "tol", 1e-3);
        int max_passes = get_int(params, "max_passes", 5);
        int max_iter = get_int(params, "max_iter", 200);
        double gamma = get_number(params, "gamma", 0.0);
        if (gamma <= 0.0) {
            double var = (X.rowwise() - X.colwise().mean())
                             .array()
                             .square()
                             .mean();
            gamma = 1.0 / (double(X.cols()) * std::max(var, 1e-12));
        }

        const int n = int(X.rows());
        Eigen::VectorXd t(n);
        for (int i = 0; i < n; ++i) t(i) = y(i) == 1 ? 1.0 : -1.0;

        Mat K(n, n);
        for (int i = 0; i < n; ++i) {
            K(i, i) = 1.0;
            for (int j = i + 1; j < n; ++j) {
                K(i, j) = kernel(X.row(i), X.row(j), gamma);
                K(j, i) = K(i, j);
            }
        }

        Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
        double b = 0.0;
        // error cache: E_i = f(x_i) - t_i
        Eigen::VectorXd E = -t;
        Rng rng(derive_seed(seed, 0x73766d, 0));

        int passes = 0, iter = 0;
        while (passes < max_passes && iter < max_iter) {
            int changed = 0;
            for (int i = 0; i < n; ++i) {
                double Ei = E(i);
                if (!((t(i) * Ei < -tol && alpha(i) < C) ||
                      (t(i) * Ei > tol && alpha(i) > 0)))
                    continue;
                int j = int(rng.below(std::uint64_t(n - 1)));
                if (j >= i) ++j;
                double Ej = E(j);
                double ai_old = alpha(i), aj_old = alpha(j);
                double L, H;
                if (t(i) != t(j)) {
                    L = std::max(0.0, aj_old - ai_old);
                    H = std::min(C, C + aj_old - ai_old);
                } else {
                    L = std::max(0.0, ai_old + aj_old - C);
                    H = std::min(C, ai_old + aj_old);
                }
                if (L >= H) continue;
                double eta = 2 * K(i, j) - K(i, i) - K(j, j);
                if (eta >= 0) continue;
                double aj = aj_old - t(j) * (Ei - Ej) / eta;
                aj = std::clamp(aj, L, H);
                if (std::abs(aj - aj_old) < 1e-5) continue;
                double ai = ai_old + t(i) * t(j) * (aj_old - aj);
                double b1 = b - Ei - t(i) * (ai - ai_old) * K(i, i) -
                            t(j) * (aj - aj_old) * K(i, j);
                double b2 = b - Ej - t(i) * (ai - ai_old) * K(i, j) -
                            t(j) * (aj - aj_old) * K(j, j);
                double b_new;
                if (ai > 0 && ai < C)
                    b_new = b1;
                else if (aj > 0 && aj < C)
                    b_new = b2;
                else
                    b_new = 0.5 * (b1 + b2);
                // refresh the error cache with the delta of f
                E += t(i) * (ai - ai_old) * K.col(i) +
                     t(j) * (aj - aj_old) * K.col(j);
                E.array() += b_new - b;
                alpha(i) = ai;
                alpha(j) = aj;
                b = b_new;
                ++changed;
            }
            passes = changed == 0 ? passes + 1 : 0;
            ++iter;
        }

        auto impl = std::make_shared<SvmImpl>();
        impl->gamma = gamma;
        impl->bias = b;
        std::vector<int> sv;
        for (int i = 0; i < n; ++i)
            if (alpha(i) > 1e-12) sv.push_back(i);
        impl->support.resize(sv.size(), X.cols());
        impl->coeff.resize(sv.size());
        for (std::size_t s = 0; s < sv.size(); ++s) {
            impl->support.row(s) = X.row(sv[s]);
            impl->coeff(s) = alpha(sv[s]) * t(sv[s]);
        }
        return impl;
    }

    Eigen::VectorXd score(const Mat& X) const override {
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            double f = bias;
            for (Eigen::Index s = 0; s < support.rows(); ++s)
                f += coeff(s) * kernel(support.row(s), X.row(i), gamma);
            out(i) = sigmoid(f);
        }
        return out;
    }
};

} // namespace

// -------------------------------------------------------------- interface

TrainedClassifier fit_classifier(const ClassifierSpec& spec, const Mat& X,
                                 const Eigen::VectorXi& y) {
    spec.validate();
    if (X.rows() != y.size())
        throw Error(ErrorCode::LengthMismatch,
                    "feature rows and label length differ");
    if (X.rows() < 2)
        throw Error(ErrorCode::InsufficientRows,
                    "need at least 2 training rows");
    if (!X.allFinite())
        throw Error(ErrorCode::NonFiniteInput,
                    "training features contain non-finite values");
    int pos = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y(i) != 0 && y(i) != 1)
            throw Error(ErrorCode::NonBinaryLabel, "labels must be 0 or 1");
        pos += y(i);
    }
    if (pos == 0 || pos == y.size())
        throw Error(ErrorCode::SingleClassTrainingSet,
                    "training set holds a single class");

    auto order = canonical_order(X, y);
    Mat Xs(X.rows(), X.cols());
    Eigen::VectorXi ys(y.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        Xs.row(Eigen::Index(i)) = X.row(order[i]);
        ys(Eigen::Index(i)) = y(order[i]);
    }

    TrainedClassifier out;
    out.spec_ = spec;
    out.feature_dim_ = int(X.cols());
    const auto& params = spec.hyperparameters;
    if (spec.kind == "naive_bayes")
        out.impl_ = NaiveBayesImpl::fit(params, Xs, ys);
    else if (spec.kind == "logistic")
        out.impl_ = LogisticImpl::fit(params, Xs, ys);
    else if (spec.kind == "knn")
        out.impl_ = KnnImpl::fit(params, Xs, ys);
    else if (spec.kind == "decision_tree")
        out.impl_ = DecisionTreeImpl::fit(params, Xs, ys);
    else if (spec.kind == "random_forest")
        out.impl_ = RandomForestImpl::fit(params, Xs, ys, spec.seed);
    else if (spec.kind == "mlp")
        out.impl_ = MlpImpl::fit(params, Xs, ys, spec.seed);
    else if (spec.kind == "svm")
        out.impl_ = SvmImpl::fit(params, Xs, ys, spec.seed);
    return out;
}

PredictionBatch TrainedClassifier::predict(const Mat& X) const {
    if (!impl_)
        throw Error(ErrorCode::UntrainedModel, "classifier is not fitted");
    if (X.cols() != feature_dim_)
        throw Error(ErrorCode::DimensionMismatch,
                    "expected width " + std::to_string(feature_dim_) +
                        ", got " + std::to_string(X.cols()));
    PredictionBatch batch;
    if (X.rows() == 0) {
        batch.labels.resize(0);
        batch.scores.resize(0);
        return batch;
    }
    batch.scores = impl_->score(X);
    if (!batch.scores.allFinite())
        throw Error(ErrorCode::NonFiniteInput,
                    "classifier produced non-finite scores");
    batch.labels.resize(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        batch.labels(i) = batch.scores(i) >= 0.5 ? 1 : 0;
    return batch;
}

} // namespace tabsynth::clf
