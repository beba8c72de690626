#include "tabsynth/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "tabsynth/rng.hpp"

namespace tabsynth::metrics {

namespace {

constexpr int kBins = 10;

// 10-bin histogram over [0, 1]; out-of-range values fall into the edge bins.
std::array<double, kBins> histogram(const Eigen::VectorXd& column) {
    std::array<double, kBins> h{};
    for (Eigen::Index i = 0; i < column.size(); ++i) {
        int bin = int(std::floor(column(i) * kBins));
        bin = std::clamp(bin, 0, kBins - 1);
        h[std::size_t(bin)] += 1.0;
    }
    for (auto& v : h) v /= double(column.size());
    return h;
}

double hellinger_1d(const std::array<double, kBins>& p,
                    const std::array<double, kBins>& q) {
    double acc = 0.0;
    for (int b = 0; b < kBins; ++b) {
        double d = std::sqrt(p[std::size_t(b)]) - std::sqrt(q[std::size_t(b)]);
        acc += d * d;
    }
    return std::sqrt(0.5 * acc);
}

// Base-2 Jensen-Shannon divergence between two histograms.
double js_1d(const std::array<double, kBins>& p,
             const std::array<double, kBins>& q) {
    auto kl_to_mid = [&](const std::array<double, kBins>& a) {
        double acc = 0.0;
        for (int b = 0; b < kBins; ++b) {
            double pa = a[std::size_t(b)];
            if (pa <= 0) continue;
            double m = 0.5 * (p[std::size_t(b)] + q[std::size_t(b)]);
            acc += pa * std::log2(pa / m);
        }
        return acc;
    };
    return 0.5 * kl_to_mid(p) + 0.5 * kl_to_mid(q);
}

// 1-D Wasserstein distance between empirical distributions.
double wasserstein_1d(Eigen::VectorXd a, Eigen::VectorXd b) {
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    // Integrate |F_a - F_b| over the merged support.
    std::vector<double> grid(std::size_t(a.size() + b.size()));
    std::merge(a.data(), a.data() + a.size(), b.data(), b.data() + b.size(),
               grid.begin());
    double acc = 0.0;
    for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
        double width = grid[g + 1] - grid[g];
        if (width <= 0) continue;
        double x = grid[g];
        double fa =
            double(std::upper_bound(a.data(), a.data() + a.size(), x) -
                   a.data()) /
            double(a.size());
        double fb =
            double(std::upper_bound(b.data(), b.data() + b.size(), x) -
                   b.data()) /
            double(b.size());
        acc += std::abs(fa - fb) * width;
    }
    return acc;
}

void require_same_schema(const TabularDataset& real,
                         const TabularDataset& synth) {
    if (!(real.schema == synth.schema))
        throw Error(ErrorCode::SchemaMismatch,
                    "real and synthetic datasets have different schemas");
}

} // namespace

nlohmann::json ConfusionCounts::to_json() const {
    return {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}};
}

ConfusionCounts ConfusionCounts::from_json(const nlohmann::json& j) {
    return {j.at("tp").get<long>(), j.at("fp").get<long>(),
            j.at("fn").get<long>(), j.at("tn").get<long>()};
}

nlohmann::json UtilityScores::to_json() const {
    return {{"accuracy", accuracy}, {"precision", precision},
            {"recall", recall},     {"f1", f1},
            {"auc", auc},           {"mcc", mcc}};
}

UtilityScores UtilityScores::from_json(const nlohmann::json& j) {
    UtilityScores u;
    u.accuracy = j.at("accuracy").get<double>();
    u.precision = j.at("precision").get<double>();
    u.recall = j.at("recall").get<double>();
    u.f1 = j.at("f1").get<double>();
    u.auc = j.at("auc").get<double>();
    u.mcc = j.at("mcc").get<double>();
    return u;
}

nlohmann::json FidelityScores::to_json() const {
    return {{"euclidean", euclidean},
            {"hellinger", hellinger},
            {"manhattan", manhattan},
            {"hamming", hamming},
            {"jaccard", jaccard},
            {"js_divergence", js_divergence},
            {"wasserstein", wasserstein},
            {"mmd", mmd}};
}

FidelityScores FidelityScores::from_json(const nlohmann::json& j) {
    FidelityScores f;
    f.euclidean = j.at("euclidean").get<double>();
    f.hellinger = j.at("hellinger").get<double>();
    f.manhattan = j.at("manhattan").get<double>();
    f.hamming = j.at("hamming").get<double>();
    f.jaccard = j.at("jaccard").get<double>();
    f.js_divergence = j.at("js_divergence").get<double>();
    f.wasserstein = j.at("wasserstein").get<double>();
    f.mmd = j.at("mmd").get<double>();
    return f;
}

ConfusionCounts confusion(const Eigen::VectorXi& y_true,
                          const Eigen::VectorXi& y_pred) {
    if (y_true.size() != y_pred.size())
        throw Error(ErrorCode::LengthMismatch,
                    "y_true and y_pred lengths differ");
    if (y_true.size() < 1)
        throw Error(ErrorCode::LengthMismatch, "need at least one sample");
    ConfusionCounts cm;
    for (Eigen::Index i = 0; i < y_true.size(); ++i) {
        if (y_true(i) == 1)
            (y_pred(i) == 1 ? cm.tp : cm.fn)++;
        else
            (y_pred(i) == 1 ? cm.fp : cm.tn)++;
    }
    return cm;
}

UtilityScores utility_scores(const ConfusionCounts& cm,
                             const Eigen::VectorXi& y_true,
                             const Eigen::VectorXd& scores) {
    if (y_true.size() != scores.size())
        throw Error(ErrorCode::LengthMismatch,
                    "y_true and scores lengths differ");
    auto ratio = [](double num, double den) {
        return den == 0.0 ? 0.0 : num / den;
    };
    UtilityScores u;
    double tp = double(cm.tp), fp = double(cm.fp), fn = double(cm.fn),
           tn = double(cm.tn);
    u.accuracy = ratio(tp + tn, tp + fp + fn + tn);
    u.precision = ratio(tp, tp + fp);
    u.recall = ratio(tp, tp + fn);
    u.f1 = ratio(2 * u.precision * u.recall, u.precision + u.recall);
    double mcc_den =
        std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    u.mcc = ratio(tp * tn - fp * fn, mcc_den);

    // Mann-Whitney rank statistic; tied scores share their average rank.
    Eigen::Index n = scores.size();
    long n_pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) n_pos += y_true(i);
    long n_neg = long(n) - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        u.auc = 0.0;
        return u;
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scores(a) < scores(b); });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() &&
               scores(order[j + 1]) == scores(order[i]))
            ++j;
        double avg_rank = 0.5 * (double(i + 1) + double(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (y_true(order[k]) == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    u.auc = (rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0) /
            (double(n_pos) * double(n_neg));
    return u;
}

DistanceBundle dataset_distances(const TabularDataset& real,
                                 const TabularDataset& synth,
                                 std::uint64_t seed) {
    require_same_schema(real, synth);
    if (real.rows() < 1 || synth.rows() < 1)
        throw Error(ErrorCode::InsufficientRows,
                    "both datasets must be nonempty");

    const Eigen::Index d = real.cols();
    double acc_l2 = 0, acc_l1 = 0, acc_ham = 0, acc_jac = 0;
    long pairs = 0;

    for (int c = 0; c <= 1; ++c) {
        std::vector<int> synth_rows = synth.class_indices(c);
        if (synth_rows.empty()) continue;
        std::vector<int> real_rows = real.class_indices(c);
        if (real_rows.empty())
            throw Error(ErrorCode::ClassAbsent,
                        "real data has no rows of class " + std::to_string(c));

        Rng rng(derive_seed(seed, 0x706169, std::uint64_t(c)));
        std::size_t s = 0;
        while (s < synth_rows.size()) {
            // Full blocks pair positionally (so equal-size per-class row
            // lists self-pair, and identical datasets score exactly zero);
            // a final partial block draws real rows without replacement.
            std::size_t block =
                std::min(synth_rows.size() - s, real_rows.size());
            std::vector<int> drawn = real_rows;
            if (block < real_rows.size()) {
                rng.shuffle(drawn);
                drawn.resize(block);
            }
            for (std::size_t i = 0; i < block; ++i, ++s) {
                auto sr = synth.features.row(synth_rows[s]);
                auto rr = real.features.row(drawn[i]);
                acc_l2 += (sr - rr).norm();
                acc_l1 += (sr - rr).cwiseAbs().sum();
                long diff = 0, inter = 0, uni = 0;
                for (Eigen::Index j = 0; j < d; ++j) {
                    bool a = sr(j) >= 0.5, b = rr(j) >= 0.5;
                    diff += a != b;
                    inter += a && b;
                    uni += a || b;
                }
                acc_ham += double(diff);
                acc_jac += uni == 0 ? 0.0 : 1.0 - double(inter) / double(uni);
                ++pairs;
            }
        }
    }
    if (pairs == 0)
        throw Error(ErrorCode::ClassAbsent,
                    "no class present in the synthetic dataset");

    DistanceBundle out;
    out.euclidean = acc_l2 / double(pairs);
    out.manhattan = acc_l1 / double(pairs);
    out.hamming = acc_ham / double(pairs);
    out.jaccard = acc_jac / double(pairs);
    for (Eigen::Index j = 0; j < d; ++j)
        out.hellinger += hellinger_1d(histogram(real.features.col(j)),
                                      histogram(synth.features.col(j)));
    return out;
}

DivergenceBundle divergence_scores(const TabularDataset& real,
                                   const TabularDataset& synth) {
    require_same_schema(real, synth);
    if (real.rows() < 1 || synth.rows() < 1)
        throw Error(ErrorCode::InsufficientRows,
                    "both datasets must be nonempty");
    DivergenceBundle out;
    const Eigen::Index d = real.cols();
    for (Eigen::Index j = 0; j < d; ++j) {
        out.js_divergence += js_1d(histogram(real.features.col(j)),
                                   histogram(synth.features.col(j)));
        out.wasserstein +=
            wasserstein_1d(real.features.col(j), synth.features.col(j));
    }
    out.js_divergence /= double(d);
    out.wasserstein /= double(d);
    double bw = median_heuristic_bandwidth(real.features, synth.features);
    out.mmd = mmd_rbf(real.features, synth.features, bw);
    return out;
}

FidelityScores fidelity_scores(const TabularDataset& real,
                               const TabularDataset& synth,
                               std::uint64_t seed) {
    DistanceBundle dist = dataset_distances(real, synth, seed);
    DivergenceBundle div = divergence_scores(real, synth);
    FidelityScores f;
    f.euclidean = dist.euclidean;
    f.hellinger = dist.hellinger;
    f.manhattan = dist.manhattan;
    f.hamming = dist.hamming;
    f.jaccard = dist.jaccard;
    f.js_divergence = div.js_divergence;
    f.wasserstein = div.wasserstein;
    f.mmd = div.mmd;
    return f;
}

double median_heuristic_bandwidth(const Mat& x, const Mat& y) {
    Mat pooled(x.rows() + y.rows(), x.cols());
    pooled << x, y;
    std::vector<double> dists;
    dists.reserve(std::size_t(pooled.rows()) * std::size_t(pooled.rows() - 1) /
                  2);
    for (Eigen::Index i = 0; i < pooled.rows(); ++i)
        for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
            dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    if (dists.empty()) return 1.0;
    std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + long(mid), dists.end());
    double median = dists[mid];
    return median > 1e-12 ? median : 1.0;
}

namespace {

double mmd_unbiased(const Mat& x, const Mat& y, double bandwidth,
                    bool bruteforce) {
    if (x.cols() != y.cols())
        throw Error(ErrorCode::DimensionMismatch,
                    "samples must share a feature width");
    const Eigen::Index m = x.rows(), n = y.rows();
    if (m < 2 || n < 2)
        throw Error(ErrorCode::TooFewSamples,
                    "unbiased estimate needs at least 2 rows per side");
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);

    double xx = 0, yy = 0, xy = 0;
    if (bruteforce) {
        // Plain double sums, one term at a time.
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                if (i != j)
                    xx += std::exp(-(x.row(i) - x.row(j)).squaredNorm() * inv);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j)
                    yy += std::exp(-(y.row(i) - y.row(j)).squaredNorm() * inv);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                xy += std::exp(-(x.row(i) - y.row(j)).squaredNorm() * inv);
    } else {
        // Symmetry-aware accumulation.
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i + 1; j < m; ++j)
                xx += 2.0 *
                      std::exp(-(x.row(i) - x.row(j)).squaredNorm() * inv);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j)
                yy += 2.0 *
                      std::exp(-(y.row(i) - y.row(j)).squaredNorm() * inv);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                xy += std::exp(-(x.row(i) - y.row(j)).squaredNorm() * inv);
    }
    double est = xx / (double(m) * double(m - 1)) +
                 yy / (double(n) * double(n - 1)) -
                 2.0 * xy / (double(m) * double(n));
    return std::max(0.0, est);
}

} // namespace

double mmd_rbf(const Mat& x, const Mat& y, double bandwidth) {
    return mmd_unbiased(x, y, bandwidth, false);
}

double mmd_bruteforce(const Mat& x, const Mat& y, double bandwidth) {
    return mmd_unbiased(x, y, bandwidth, true);
}

} // namespace tabsynth::metrics
