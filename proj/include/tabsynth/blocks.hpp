#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tabsynth/autodiff.hpp"
#include "tabsynth/error.hpp"

#include <nlohmann/json_fwd.hpp>

namespace tabsynth::blocks {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// ------------------------------------------------------------- optimizers

enum class OptimizerKind { adam, nadam, sgd };

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;   // first-moment decay (adam/nadam) or sgd momentum
    double beta2 = 0.999; // second-moment decay
    double epsilon = 1e-8;

    void validate() const;
};

OptimizerKind optimizer_kind_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

// ------------------------------------------------------------- schedules

struct DiffusionSchedule {
    int T = 0;
    std::vector<double> betas;      // 1..T, stored 0-based
    std::vector<double> alphas;     // 1 - beta_t
    std::vector<double> alpha_bars; // running product of alphas

    static DiffusionSchedule linear(int T, double beta_min = 1e-4,
                                    double beta_max = 2e-2);
    void validate() const;
    nlohmann::json to_json() const;
    static DiffusionSchedule from_json(const nlohmann::json& j);
};

// ------------------------------------------------------------- codebook

struct Codebook {
    Mat entries; // K x D
    double commitment_cost = 0.25;

    int K() const { return static_cast<int>(entries.rows()); }
    int D() const { return static_cast<int>(entries.cols()); }
    void validate() const;
};

// ------------------------------------------------------------- callbacks

struct EarlyStopPolicy {
    std::string monitored_loss = "total";
    int patience = 10;
    double min_delta = 0.0;

    void validate() const;
};

// ------------------------------------------------------------- operations

// mu + exp(0.5 * log_var) .* eps
Vec reparameterize(const Vec& mu, const Vec& log_var, const Vec& eps);
Mat reparameterize(const Mat& mu, const Mat& log_var, const Mat& eps);
ad::Var reparameterize(const ad::Var& mu, const ad::Var& log_var,
                       const Mat& eps);

// KL(N(mu, diag exp log_var) || N(0, I)), summed over coordinates.
double gaussian_kl(const Vec& mu, const Vec& log_var);
// Graph form: sums over all entries, then divides by the row count (batch
// mean of per-row KL).
ad::Var gaussian_kl_mean(const ad::Var& mu, const ad::Var& log_var);

// lambda * mean_rows (||d critic / d xhat||_2 - 1)^2 evaluated at the
// interpolates xhat = mix .* real + (1 - mix) .* fake. The Var form remains
// differentiable w.r.t. the critic parameters (gradient-of-gradient).
using CriticFn = std::function<ad::Var(const ad::Var&)>;
ad::Var gradient_penalty_var(const CriticFn& critic, const Mat& real_batch,
                             const Mat& fake_batch, double lambda_gp,
                             const Vec& mix);
double gradient_penalty(const CriticFn& critic, const Mat& real_batch,
                        const Mat& fake_batch, double lambda_gp,
                        const Vec& mix);

// First dim/2 coordinates sin(t * w_j), last dim/2 cos(t * w_j), with the
// frequency ladder w_j = 10000^(-j / (dim/2 - 1)).
Vec sinusoidal_time_embedding(long t, int dim);

struct QuantizeResult {
    Mat quantized;
    std::vector<int> indices;
    double codebook_loss = 0.0;   // mean_rows ||sg(z) - e||^2
    double commitment_loss = 0.0; // beta_c * mean_rows ||z - sg(e)||^2
};
QuantizeResult quantize(const Codebook& codebook, const Mat& z);

// Graph form used in training: nearest-neighbor indices are computed from
// values, the quantized output carries the straight-through contract
// (gradients flow to z unchanged), and the two losses are differentiable
// w.r.t. the codebook entries / encoder respectively.
struct QuantizeGraph {
    ad::Var quantized;
    std::vector<int> indices;
    ad::Var codebook_loss;
    ad::Var commitment_loss;
};
QuantizeGraph quantize_st(const ad::Var& entries, const ad::Var& z,
                          double commitment_cost);

// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, t in 1..T.
Mat diffusion_forward(const Mat& x0, int t, const DiffusionSchedule& schedule,
                      const Mat& eps);

// Loss evaluator factory over plain matrices. For kind "kl" the two
// arguments are (mu, log_var) and the evaluator delegates to gaussian_kl
// averaged over rows.
using LossFn = std::function<double(const Mat&, const Mat&)>;
LossFn losses(const std::string& kind);

// Scaled dot-product attention, softmax(q k^T / sqrt(D)) v. Optional block;
// no default preset uses it.
ad::Var attention(const ad::Var& q, const ad::Var& k, const ad::Var& v);

} // namespace tabsynth::blocks
