#include "tabsynth/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace tabsynth::blocks {

namespace {

void require_finite(const Mat& m, const char* what) {
    if (!m.allFinite())
        throw Error(ErrorCode::NonFiniteInput,
                    std::string(what) + " contains a non-finite value");
}

} // namespace

// ---------------------------------------------------------------- specs

void OptimizerSpec::validate() const {
    if (!(learning_rate > 0))
        throw Error(ErrorCode::ConfigInvalid, "learning_rate must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw Error(ErrorCode::ConfigInvalid,
                    "momentum terms must lie in [0, 1)");
    if (!(epsilon > 0))
        throw Error(ErrorCode::ConfigInvalid, "epsilon must be positive");
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "nadam") return OptimizerKind::nadam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw Error(ErrorCode::UnknownKind, "unknown optimizer kind: " + name);
}

std::string to_string(OptimizerKind kind) {
    switch (kind) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::nadam: return "nadam";
    case OptimizerKind::sgd: return "sgd";
    }
    return "adam";
}

// ------------------------------------------------------------- schedules

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_min,
                                            double beta_max) {
    if (T < 1)
        throw Error(ErrorCode::ConfigInvalid, "diffusion step count must be >= 1");
    DiffusionSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double bar = 1.0;
    for (int t = 0; t < T; ++t) {
        double frac = T == 1 ? 0.0 : double(t) / (T - 1);
        s.betas[t] = beta_min + frac * (beta_max - beta_min);
        s.alphas[t] = 1.0 - s.betas[t];
        bar *= s.alphas[t];
        s.alpha_bars[t] = bar;
    }
    s.validate();
    return s;
}

void DiffusionSchedule::validate() const {
    if (T < 1 || int(betas.size()) != T || int(alphas.size()) != T ||
        int(alpha_bars.size()) != T)
        throw Error(ErrorCode::ConfigInvalid, "inconsistent schedule lengths");
    double prev_beta = 0.0;
    double prev_bar = 1.0;
    for (int t = 0; t < T; ++t) {
        if (!(betas[t] > 0.0) || !(betas[t] < 1.0))
            throw Error(ErrorCode::ConfigInvalid,
                        "betas must lie strictly inside (0, 1)");
        if (betas[t] < prev_beta)
            throw Error(ErrorCode::ConfigInvalid, "betas must be nondecreasing");
        if (std::abs(alphas[t] - (1.0 - betas[t])) > 1e-12)
            throw Error(ErrorCode::ConfigInvalid, "alphas must equal 1 - beta");
        if (!(alpha_bars[t] < prev_bar))
            throw Error(ErrorCode::ConfigInvalid,
                        "alpha_bars must be strictly decreasing");
        prev_beta = betas[t];
        prev_bar = alpha_bars[t];
    }
}

nlohmann::json DiffusionSchedule::to_json() const {
    return nlohmann::json{{"T", T}, {"betas", betas}};
}

DiffusionSchedule DiffusionSchedule::from_json(const nlohmann::json& j) {
    DiffusionSchedule s;
    s.T = j.at("T").get<int>();
    s.betas = j.at("betas").get<std::vector<double>>();
    if (int(s.betas.size()) != s.T)
        throw Error(ErrorCode::ConfigInvalid,
                    "schedule JSON: betas length != T");
    s.alphas.resize(s.T);
    s.alpha_bars.resize(s.T);
    double bar = 1.0;
    for (int t = 0; t < s.T; ++t) {
        s.alphas[t] = 1.0 - s.betas[t];
        bar *= s.alphas[t];
        s.alpha_bars[t] = bar;
    }
    s.validate();
    return s;
}

// -------------------------------------------------------------- codebook

void Codebook::validate() const {
    if (K() < 2)
        throw Error(ErrorCode::ConfigInvalid, "codebook needs at least 2 entries");
    if (!entries.allFinite())
        throw Error(ErrorCode::NonFiniteInput, "codebook entries must be finite");
    if (commitment_cost < 0)
        throw Error(ErrorCode::ConfigInvalid, "commitment cost must be >= 0");
}

void EarlyStopPolicy::validate() const {
    if (patience < 1)
        throw Error(ErrorCode::ConfigInvalid, "patience must be >= 1");
    if (min_delta < 0)
        throw Error(ErrorCode::ConfigInvalid, "min_delta must be >= 0");
}

// ------------------------------------------------------------ operations

Vec reparameterize(const Vec& mu, const Vec& log_var, const Vec& eps) {
    Mat out = reparameterize(Mat(mu.transpose()), Mat(log_var.transpose()),
                             Mat(eps.transpose()));
    return out.transpose();
}

Mat reparameterize(const Mat& mu, const Mat& log_var, const Mat& eps) {
    require_finite(mu, "mu");
    require_finite(log_var, "log_var");
    require_finite(eps, "eps");
    if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols() ||
        mu.rows() != eps.rows() || mu.cols() != eps.cols())
        throw Error(ErrorCode::DimensionMismatch,
                    "reparameterize arguments must share a shape");
    return mu.array() + (0.5 * log_var.array()).exp() * eps.array();
}

ad::Var reparameterize(const ad::Var& mu, const ad::Var& log_var,
                       const Mat& eps) {
    ad::Var std_dev = ad::exp_fn(ad::cmul(log_var, 0.5));
    return ad::add(mu, ad::mul(std_dev, ad::constant(eps)));
}

double gaussian_kl(const Vec& mu, const Vec& log_var) {
    require_finite(mu, "mu");
    require_finite(log_var, "log_var");
    if (mu.size() != log_var.size())
        throw Error(ErrorCode::DimensionMismatch,
                    "mu and log_var must share a length");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        acc += 1.0 + log_var(i) - mu(i) * mu(i) - std::exp(log_var(i));
    return -0.5 * acc;
}

ad::Var gaussian_kl_mean(const ad::Var& mu, const ad::Var& log_var) {
    ad::Var term = ad::sub(ad::add(ad::cadd(log_var, 1.0),
                                   ad::neg(ad::square(mu))),
                           ad::exp_fn(log_var));
    return ad::cmul(ad::sum(term), -0.5 / double(mu.rows()));
}

ad::Var gradient_penalty_var(const CriticFn& critic, const Mat& real_batch,
                             const Mat& fake_batch, double lambda_gp,
                             const Vec& mix) {
    if (real_batch.rows() != fake_batch.rows() ||
        real_batch.cols() != fake_batch.cols())
        throw Error(ErrorCode::DimensionMismatch,
                    "real and fake batches must share a shape");
    if (mix.size() != real_batch.rows())
        throw Error(ErrorCode::DimensionMismatch,
                    "mix must have one entry per row");
    if (!(lambda_gp > 0))
        throw Error(ErrorCode::ConfigInvalid, "lambda_gp must be positive");

    Mat xhat_value(real_batch.rows(), real_batch.cols());
    for (Eigen::Index i = 0; i < real_batch.rows(); ++i)
        xhat_value.row(i) =
            mix(i) * real_batch.row(i) + (1.0 - mix(i)) * fake_batch.row(i);

    ad::Var xhat = ad::param(xhat_value);
    ad::Var score = critic(xhat);
    ad::Var total = ad::sum(score);
    std::vector<ad::Var> wrt{xhat};
    ad::Var grad = ad::backward(total, wrt)[0];
    if (!grad.value().allFinite())
        throw Error(ErrorCode::NonFiniteGradient,
                    "critic gradient is non-finite at an interpolate");

    ad::Var norms =
        ad::sqrt_fn(ad::cadd(ad::row_sum(ad::square(grad)), 1e-12));
    return ad::cmul(ad::mean(ad::square(ad::cadd(norms, -1.0))), lambda_gp);
}

double gradient_penalty(const CriticFn& critic, const Mat& real_batch,
                        const Mat& fake_batch, double lambda_gp,
                        const Vec& mix) {
    return gradient_penalty_var(critic, real_batch, fake_batch, lambda_gp, mix)
        .scalar();
}

Vec sinusoidal_time_embedding(long t, int dim) {
    if (dim <= 0 || dim % 2 != 0)
        throw Error(ErrorCode::OddDim,
                    "embedding dimension must be even and positive, got " +
                        std::to_string(dim));
    int half = dim / 2;
    Vec out(dim);
    for (int j = 0; j < half; ++j) {
        double omega =
            half == 1 ? 1.0 : std::pow(10000.0, -double(j) / (half - 1));
        out(j) = std::sin(double(t) * omega);
        out(half + j) = std::cos(double(t) * omega);
    }
    return out;
}

namespace {

std::vector<int> nearest_entries(const Mat& entries, const Mat& z) {
    if (z.cols() != entries.cols())
        throw Error(ErrorCode::DimensionMismatch,
                    "latent width " + std::to_string(z.cols()) +
                        " != code dimension " + std::to_string(entries.cols()));
    std::vector<int> indices(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index k = 0; k < entries.rows(); ++k) {
            double d = (z.row(i) - entries.row(k)).squaredNorm();
            if (d < best) {
                best = d;
                arg = static_cast<int>(k);
            }
        }
        indices[i] = arg;
    }
    return indices;
}

} // namespace

QuantizeResult quantize(const Codebook& codebook, const Mat& z) {
    require_finite(z, "z");
    QuantizeResult out;
    out.indices = nearest_entries(codebook.entries, z);
    out.quantized.resize(z.rows(), z.cols());
    double dist = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        out.quantized.row(i) = codebook.entries.row(out.indices[i]);
        dist += (z.row(i) - out.quantized.row(i)).squaredNorm();
    }
    dist /= double(z.rows());
    out.codebook_loss = dist;
    out.commitment_loss = codebook.commitment_cost * dist;
    return out;
}

QuantizeGraph quantize_st(const ad::Var& entries, const ad::Var& z,
                          double commitment_cost) {
    QuantizeGraph out;
    out.indices = nearest_entries(entries.value(), z.value());
    ad::Var selected = ad::gather_rows(entries, out.indices);
    double batch = double(z.rows());

    ad::Var code_diff = ad::sub(ad::detach(z), selected);
    out.codebook_loss = ad::cmul(ad::sum(ad::square(code_diff)), 1.0 / batch);

    ad::Var commit_diff = ad::sub(z, ad::detach(selected));
    out.commitment_loss = ad::cmul(ad::sum(ad::square(commit_diff)),
                                   commitment_cost / batch);

    // Straight-through: value equals the selected entries, gradient passes
    // through to z untouched.
    out.quantized = ad::add(z, ad::detach(ad::sub(selected, z)));
    return out;
}

Mat diffusion_forward(const Mat& x0, int t, const DiffusionSchedule& schedule,
                      const Mat& eps) {
    if (t < 1 || t > schedule.T)
        throw Error(ErrorCode::StepOutOfRange,
                    "step " + std::to_string(t) + " outside 1.." +
                        std::to_string(schedule.T));
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
        throw Error(ErrorCode::DimensionMismatch,
                    "x0 and eps must share a shape");
    double bar = schedule.alpha_bars[t - 1];
    return std::sqrt(bar) * x0 + std::sqrt(1.0 - bar) * eps;
}

LossFn losses(const std::string& kind) {
    if (kind == "mse") {
        return [](const Mat& y, const Mat& yhat) {
            if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
                throw Error(ErrorCode::DimensionMismatch,
                            "mse arguments must share a shape");
            return (y - yhat).array().square().mean();
        };
    }
    if (kind == "binary_cross_entropy") {
        return [](const Mat& y, const Mat& p) {
            if (y.rows() != p.rows() || y.cols() != p.cols())
                throw Error(ErrorCode::DimensionMismatch,
                            "bce arguments must share a shape");
            constexpr double eps = 1e-12;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < y.rows(); ++i)
                for (Eigen::Index j = 0; j < y.cols(); ++j) {
                    double q = std::clamp(p(i, j), eps, 1.0 - eps);
                    acc -= y(i, j) * std::log(q) +
                           (1.0 - y(i, j)) * std::log(1.0 - q);
                }
            return acc / double(y.size());
        };
    }
    if (kind == "kl") {
        return [](const Mat& mu, const Mat& log_var) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < mu.rows(); ++i)
                acc += gaussian_kl(mu.row(i).transpose(),
                                   log_var.row(i).transpose());
            return acc / double(mu.rows());
        };
    }
    throw Error(ErrorCode::UnknownKind, "unknown loss kind: " + kind);
}

ad::Var attention(const ad::Var& q, const ad::Var& k, const ad::Var& v) {
    if (q.cols() != k.cols() || k.rows() != v.rows())
        throw Error(ErrorCode::DimensionMismatch,
                    "attention shapes are inconsistent");
    double scale = 1.0 / std::sqrt(double(q.cols()));
    ad::Var scores = ad::cmul(ad::matmul(q, ad::transpose(k)), scale);
    return ad::matmul(ad::softmax_rows(scores), v);
}

} // namespace tabsynth::blocks
