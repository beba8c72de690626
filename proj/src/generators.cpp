#include "tabsynth/generators.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>

#include "tabsynth/data_io.hpp"
#include "tabsynth/error.hpp"

namespace tabsynth::gen {

namespace {

using Vec = Eigen::VectorXd;

constexpr int kSchemaVersion = 1;
constexpr const char* kExternalFamily = "external";

// Seed-stream tags so init / training / sampling never share a stream.
constexpr std::uint64_t kInitStream = 0x696e6974;   // "init"
constexpr std::uint64_t kTrainStream = 0x74726169;  // "trai"
constexpr std::uint64_t kSampleStream = 0x73616d70; // "samp"

std::uint64_t family_tag(const std::string& family) {
    std::uint64_t h = 1469598103934665603ULL; // FNV-1a
    for (const char c : family) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<int> stack_widths(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> widths;
    widths.reserve(hidden.size() + 2);
    widths.push_back(in);
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(out);
    return widths;
}

std::vector<int> reversed(std::vector<int> v) {
    std::reverse(v.begin(), v.end());
    return v;
}

bool family_is_conditional(const std::string& family) {
    return family == "cgan" || family == "vae" || family == "vq_vae" ||
           family == "ldm";
}

int encoder_output_width(const GeneratorConfig& config) {
    if (config.family == "vae" || config.family == "ldm") {
        return 2 * config.latent_dim; // (mu | log_var)
    }
    if (config.family == "vq_vae") {
        return config.params.code_dim;
    }
    return config.latent_dim; // ae
}

int decoder_input_width(const GeneratorConfig& config) {
    return config.family == "vq_vae" ? config.params.code_dim
                                     : config.latent_dim;
}

std::vector<int> generator_widths(const GeneratorConfig& config, int d) {
    const int extra = config.family == "cgan" ? config.params.embed_dim : 0;
    return stack_widths(config.latent_dim + extra, config.hidden_widths, d);
}

std::vector<int> critic_widths(const GeneratorConfig& config, int d) {
    const int extra = config.family == "cgan" ? config.params.embed_dim : 0;
    return stack_widths(d + extra, config.hidden_widths, 1);
}

std::vector<int> encoder_widths(const GeneratorConfig& config, int d) {
    const bool embed = config.family == "vae" || config.family == "vq_vae";
    const int extra = embed ? config.params.embed_dim : 0;
    return stack_widths(d + extra, config.hidden_widths,
                        encoder_output_width(config));
}

std::vector<int> decoder_widths(const GeneratorConfig& config, int d) {
    const bool embed = config.family == "vae" || config.family == "vq_vae";
    const int extra = embed ? config.params.embed_dim : 0;
    return stack_widths(decoder_input_width(config) + extra,
                        reversed(config.hidden_widths), d);
}

Mat rows_of(const Mat& x, const std::vector<int>& indices) {
    Mat out(static_cast<Eigen::Index>(indices.size()), x.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(indices[i]);
    }
    return out;
}

std::vector<std::vector<int>> epoch_batches(long n, int batch_size, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    const long step = std::max(1L, std::min<long>(batch_size, n));
    for (long start = 0; start < n; start += step) {
        const long count = std::min(step, n - start);
        batches.emplace_back(order.begin() + start,
                             order.begin() + start + count);
    }
    return batches;
}

Mat with_label_columns(const Mat& z, const Mat& table, int label) {
    Mat out(z.rows(), z.cols() + table.cols());
    out.leftCols(z.cols()) = z;
    out.rightCols(table.cols()) = table.row(label).replicate(z.rows(), 1);
    return out;
}

std::vector<Mat> parameter_values(const std::vector<ad::Var>& params) {
    std::vector<Mat> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.value());
    return out;
}

void clip_parameters(const std::vector<ad::Var>& params, double c) {
    for (const auto& p : params) {
        Mat& value = const_cast<ad::Var&>(p).mutable_value();
        value = value.cwiseMax(-c).cwiseMin(c);
    }
}

// Per-epoch recorder: forwards every value to the monitor hook, rejects
// non-finite values as DivergedTraining (the hook has seen the fault first),
// and appends finite values to the trace.
class EpochRecorder {
public:
    EpochRecorder(TrainingTrace& trace, const FitHooks& hooks,
                  std::string family)
        : trace_(trace), hooks_(hooks), family_(std::move(family)) {}

    void record(long epoch, const std::string& series, double value) {
        if (hooks_.on_epoch) {
            hooks_.on_epoch(monitor::TraceEvent{epoch, series, value});
        }
        if (!std::isfinite(value)) {
            throw Error(ErrorCode::DivergedTraining,
                        family_ + ": " + series + " became non-finite at epoch " +
                            std::to_string(epoch));
        }
        trace_.add(series, epoch, value);
    }

private:
    TrainingTrace& trace_;
    const FitHooks& hooks_;
    std::string family_;
};

nlohmann::json optimizer_to_json(const blocks::OptimizerSpec& spec) {
    return nlohmann::json{{"kind", blocks::to_string(spec.kind)},
                          {"learning_rate", spec.learning_rate},
                          {"beta1", spec.beta1},
                          {"beta2", spec.beta2},
                          {"epsilon", spec.epsilon}};
}

blocks::OptimizerSpec optimizer_from_json(const nlohmann::json& j) {
    blocks::OptimizerSpec spec;
    if (j.contains("kind")) {
        spec.kind = blocks::optimizer_kind_from_string(j.at("kind").get<std::string>());
    }
    spec.learning_rate = j.value("learning_rate", spec.learning_rate);
    spec.beta1 = j.value("beta1", spec.beta1);
    spec.beta2 = j.value("beta2", spec.beta2);
    spec.epsilon = j.value("epsilon", spec.epsilon);
    return spec;
}

} // namespace

// ----------------------------------------------------------------- families

const std::vector<std::string>& family_names() {
    static const std::vector<std::string> names = {
        "gan", "wgan", "wgan_gp", "cgan", "ae",
        "vae", "vq_vae", "ldm",   "copy", "noise"};
    return names;
}

bool family_is_adversarial(const std::string& family) {
    return family == "gan" || family == "wgan" || family == "wgan_gp" ||
           family == "cgan";
}

bool family_is_autoencoding(const std::string& family) {
    return family == "ae" || family == "vae" || family == "vq_vae";
}

bool family_uses_label_embedding(const std::string& family) {
    return family_is_conditional(family);
}

// ------------------------------------------------------------------- config

nlohmann::json FamilyParams::to_json() const {
    return nlohmann::json{{"clip_value", clip_value},
                          {"lambda_gp", lambda_gp},
                          {"embed_dim", embed_dim},
                          {"codebook_size", codebook_size},
                          {"code_dim", code_dim},
                          {"commitment_cost", commitment_cost},
                          {"kl_weight", kl_weight},
                          {"diffusion_steps", diffusion_steps},
                          {"denoiser_widths", denoiser_widths},
                          {"time_embed_dim", time_embed_dim}};
}

FamilyParams FamilyParams::from_json(const nlohmann::json& j) {
    FamilyParams p;
    p.clip_value = j.value("clip_value", p.clip_value);
    p.lambda_gp = j.value("lambda_gp", p.lambda_gp);
    p.embed_dim = j.value("embed_dim", p.embed_dim);
    p.codebook_size = j.value("codebook_size", p.codebook_size);
    p.code_dim = j.value("code_dim", p.code_dim);
    p.commitment_cost = j.value("commitment_cost", p.commitment_cost);
    p.kl_weight = j.value("kl_weight", p.kl_weight);
    if (j.contains("denoiser_widths")) {
        p.denoiser_widths = j.at("denoiser_widths").get<std::vector<int>>();
    }
    p.diffusion_steps = j.value("diffusion_steps", p.diffusion_steps);
    p.time_embed_dim = j.value("time_embed_dim", p.time_embed_dim);
    return p;
}

void GeneratorConfig::validate(int feature_dim, long train_rows) const {
    const auto& names = family_names();
    if (std::find(names.begin(), names.end(), family) == names.end()) {
        std::string valid;
        for (const auto& name : names) {
            if (!valid.empty()) valid += ", ";
            valid += name;
        }
        throw Error(ErrorCode::ConfigInvalid,
                    "unknown model family '" + family + "' (valid: " + valid + ")");
    }
    if (latent_dim < 1) {
        throw Error(ErrorCode::ConfigInvalid, "latent_dim must be positive");
    }
    for (const int w : hidden_widths) {
        if (w < 1) {
            throw Error(ErrorCode::ConfigInvalid,
                        "hidden widths must be positive");
        }
    }
    if (epochs < 1) {
        throw Error(ErrorCode::ConfigInvalid, "epochs must be positive");
    }
    if (batch_size < 1) {
        throw Error(ErrorCode::ConfigInvalid, "batch_size must be positive");
    }
    if (train_rows >= 0 && batch_size > train_rows) {
        throw Error(ErrorCode::ConfigInvalid,
                    "batch_size " + std::to_string(batch_size) +
                        " exceeds the training-set size " +
                        std::to_string(train_rows));
    }
    optimizer.validate();

    if (family == "wgan" && params.clip_value <= 0.0) {
        throw Error(ErrorCode::ConfigInvalid, "clip_value must be positive");
    }
    if (family == "wgan_gp" && params.lambda_gp <= 0.0) {
        throw Error(ErrorCode::ConfigInvalid, "lambda_gp must be positive");
    }
    if (family == "cgan" && params.embed_dim < 1) {
        throw Error(ErrorCode::ConfigInvalid, "embed_dim must be positive");
    }
    if (family == "vq_vae") {
        if (params.codebook_size < 1 || params.code_dim < 1) {
            throw Error(ErrorCode::ConfigInvalid,
                        "codebook shape must be positive");
        }
        if (params.commitment_cost < 0.0) {
            throw Error(ErrorCode::ConfigInvalid,
                        "commitment cost must be non-negative");
        }
    }
    if ((family == "vae" || family == "ldm") && params.kl_weight < 0.0) {
        throw Error(ErrorCode::ConfigInvalid, "kl_weight must be non-negative");
    }
    if (family == "ldm") {
        if (params.diffusion_steps < 1) {
            throw Error(ErrorCode::ConfigInvalid,
                        "diffusion_steps must be positive");
        }
        if (params.denoiser_widths.empty()) {
            throw Error(ErrorCode::ConfigInvalid,
                        "denoiser needs at least one width");
        }
        for (const int w : params.denoiser_widths) {
            if (w < 1) {
                throw Error(ErrorCode::ConfigInvalid,
                            "denoiser widths must be positive");
            }
        }
        if (params.time_embed_dim < 2 || params.time_embed_dim % 2 != 0) {
            throw Error(ErrorCode::ConfigInvalid,
                        "time_embed_dim must be even and at least 2");
        }
        if (feature_dim >= 0 && latent_dim >= feature_dim) {
            throw Error(ErrorCode::ConfigInvalid,
                        "ldm latent_dim must be smaller than the feature "
                        "dimension (" +
                            std::to_string(latent_dim) + " >= " +
                            std::to_string(feature_dim) + ")");
        }
    }
}

nlohmann::json GeneratorConfig::to_json() const {
    return nlohmann::json{{"family", family},
                          {"latent_dim", latent_dim},
                          {"hidden_widths", hidden_widths},
                          {"epochs", epochs},
                          {"batch_size", batch_size},
                          {"optimizer", optimizer_to_json(optimizer)},
                          {"conditional", conditional},
                          {"params", params.to_json()}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.family = j.value("family", c.family);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    if (j.contains("hidden_widths")) {
        c.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("optimizer")) {
        c.optimizer = optimizer_from_json(j.at("optimizer"));
    }
    c.conditional = j.value("conditional", c.conditional);
    if (j.contains("params")) {
        c.params = FamilyParams::from_json(j.at("params"));
    }
    return c;
}

// -------------------------------------------------------------------- trace

void TrainingTrace::add(const std::string& series, long step, double value) {
    for (auto& s : series_) {
        if (s.name == series) {
            if (!s.points.empty() && s.points.back().first >= step) {
                throw Error(ErrorCode::ConfigInvalid,
                            "trace steps must be strictly increasing in series " +
                                series);
            }
            s.points.emplace_back(step, value);
            return;
        }
    }
    series_.push_back(Series{series, {{step, value}}});
}

const TrainingTrace::Series* TrainingTrace::find(const std::string& name) const {
    for (const auto& s : series_) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

std::vector<std::string> TrainingTrace::names() const {
    std::vector<std::string> out;
    out.reserve(series_.size());
    for (const auto& s : series_) out.push_back(s.name);
    return out;
}

nlohmann::json TrainingTrace::to_json() const {
    nlohmann::json series = nlohmann::json::array();
    for (const auto& s : series_) {
        nlohmann::json steps = nlohmann::json::array();
        nlohmann::json values = nlohmann::json::array();
        for (const auto& [step, value] : s.points) {
            steps.push_back(step);
            values.push_back(value);
        }
        series.push_back(nlohmann::json{
            {"name", s.name}, {"steps", steps}, {"values", values}});
    }
    return nlohmann::json{{"series", series}};
}

TrainingTrace TrainingTrace::from_json(const nlohmann::json& j) {
    TrainingTrace trace;
    for (const auto& s : j.at("series")) {
        const auto steps = s.at("steps").get<std::vector<long>>();
        const auto values = s.at("values").get<std::vector<double>>();
        if (steps.size() != values.size()) {
            throw Error(ErrorCode::SchemaMismatch,
                        "trace steps and values differ in length");
        }
        const std::string name = s.at("name").get<std::string>();
        for (std::size_t i = 0; i < steps.size(); ++i) {
            trace.add(name, steps[i], values[i]);
        }
    }
    return trace;
}

// ------------------------------------------------------------ architectures

ad::Var AdversarialNets::generate(const ad::Var& z,
                                  const std::vector<int>& labels) const {
    if (!conditional) return generator.forward(z);
    return generator.forward(ad::concat_cols(z, generator_label.forward(labels)));
}

ad::Var AdversarialNets::criticize(const ad::Var& x,
                                   const std::vector<int>& labels) const {
    if (!conditional) return critic.forward(x);
    return critic.forward(ad::concat_cols(x, critic_label.forward(labels)));
}

std::vector<ad::Var> AdversarialNets::generator_parameters() const {
    auto params = generator.parameters();
    if (conditional) params.push_back(generator_label.table);
    return params;
}

std::vector<ad::Var> AdversarialNets::critic_parameters() const {
    auto params = critic.parameters();
    if (conditional) params.push_back(critic_label.table);
    return params;
}

AdversarialNets build_adversarial(const GeneratorConfig& config, int feature_dim,
                                  Rng& rng) {
    if (!family_is_adversarial(config.family)) {
        throw Error(ErrorCode::ConfigInvalid,
                    "family '" + config.family + "' is not adversarial");
    }
    config.validate(feature_dim);
    AdversarialNets nets;
    nets.conditional = config.family == "cgan";
    nets.latent_dim = config.latent_dim;
    nets.feature_dim = feature_dim;
    nets.generator = nets::Mlp(generator_widths(config, feature_dim),
                               nets::Activation::relu,
                               nets::Activation::sigmoid, rng);
    const bool sigmoid_critic = config.family == "gan" || config.family == "cgan";
    nets.critic = nets::Mlp(critic_widths(config, feature_dim),
                            nets::Activation::leaky_relu,
                            sigmoid_critic ? nets::Activation::sigmoid
                                           : nets::Activation::linear,
                            rng);
    if (nets.conditional) {
        nets.generator_label = nets::Embedding(2, config.params.embed_dim, rng);
        nets.critic_label = nets::Embedding(2, config.params.embed_dim, rng);
    }
    return nets;
}

ad::Var AutoencodingNets::encode(const ad::Var& x,
                                 const std::vector<int>& labels) const {
    if (!conditional) return encoder.forward(x);
    return encoder.forward(ad::concat_cols(x, encoder_label.forward(labels)));
}

ad::Var AutoencodingNets::decode(const ad::Var& z,
                                 const std::vector<int>& labels) const {
    if (!conditional) return decoder.forward(z);
    return decoder.forward(ad::concat_cols(z, decoder_label.forward(labels)));
}

std::vector<ad::Var> AutoencodingNets::parameters() const {
    auto params = encoder.parameters();
    const auto dec = decoder.parameters();
    params.insert(params.end(), dec.begin(), dec.end());
    if (conditional) {
        params.push_back(encoder_label.table);
        params.push_back(decoder_label.table);
    }
    if (codebook.defined()) params.push_back(codebook);
    return params;
}

AutoencodingNets build_autoencoding(const GeneratorConfig& config,
                                    int feature_dim, Rng& rng) {
    if (!family_is_autoencoding(config.family)) {
        throw Error(ErrorCode::ConfigInvalid,
                    "family '" + config.family + "' is not autoencoding");
    }
    config.validate(feature_dim);
    AutoencodingNets nets;
    nets.conditional = config.family != "ae";
    nets.code_width = decoder_input_width(config);
    nets.feature_dim = feature_dim;
    nets.encoder = nets::Mlp(encoder_widths(config, feature_dim),
                             nets::Activation::leaky_relu,
                             nets::Activation::linear, rng);
    nets.decoder = nets::Mlp(decoder_widths(config, feature_dim),
                             nets::Activation::relu,
                             nets::Activation::sigmoid, rng);
    if (nets.conditional) {
        nets.encoder_label = nets::Embedding(2, config.params.embed_dim, rng);
        nets.decoder_label = nets::Embedding(2, config.params.embed_dim, rng);
    }
    if (config.family == "vq_vae") {
        nets.codebook = ad::param(
            rng.normal_matrix(config.params.codebook_size, config.params.code_dim) *
            0.1);
    }
    return nets;
}

DenoiserUnet::DenoiserUnet(int latent_dim, const std::vector<int>& widths,
                           int time_dim, Rng& rng)
    : latent_dim_(latent_dim), time_dim_(time_dim) {
    if (latent_dim < 1) {
        throw Error(ErrorCode::ConfigInvalid, "latent width must be positive");
    }
    if (widths.empty()) {
        throw Error(ErrorCode::ConfigInvalid, "denoiser needs at least one width");
    }
    if (time_dim < 2 || time_dim % 2 != 0) {
        throw Error(ErrorCode::OddDim,
                    "time embedding width must be even and at least 2");
    }
    in_ = nets::Dense(latent_dim, widths[0], nets::Activation::linear, rng);
    time_in_ = nets::Dense(time_dim, widths[0], nets::Activation::linear, rng);
    for (std::size_t i = 1; i < widths.size(); ++i) {
        down_.emplace_back(widths[i - 1], widths[i], nets::Activation::linear, rng);
        time_down_.emplace_back(time_dim, widths[i], nets::Activation::linear, rng);
    }
    for (std::size_t i = widths.size(); i-- > 1;) {
        up_.emplace_back(widths[i], widths[i - 1], nets::Activation::linear, rng);
        time_up_.emplace_back(time_dim, widths[i - 1], nets::Activation::linear, rng);
    }
    out_ = nets::Dense(widths[0], latent_dim, nets::Activation::linear, rng);
    label_ = nets::Embedding(2, time_dim, rng);
}

ad::Var DenoiserUnet::conditioning(long t, const std::vector<int>& labels,
                                   Eigen::Index batch) const {
    const Vec temb = blocks::sinusoidal_time_embedding(t, time_dim_);
    ad::Var cond = ad::rep_rows(ad::constant(Mat(temb.transpose())), batch);
    if (!labels.empty()) {
        cond = ad::add(cond, label_.forward(labels));
    }
    return cond;
}

ad::Var DenoiserUnet::forward(const ad::Var& x, long t,
                              const std::vector<int>& labels) const {
    if (!in_.W.defined()) {
        throw Error(ErrorCode::UntrainedModel, "denoiser has no layers");
    }
    if (x.cols() != latent_dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "denoiser input width " + std::to_string(x.cols()) +
                        " != latent width " + std::to_string(latent_dim_));
    }
    if (!labels.empty() &&
        static_cast<Eigen::Index>(labels.size()) != x.rows()) {
        throw Error(ErrorCode::LengthMismatch,
                    "one label per denoiser input row");
    }
    const ad::Var cond = conditioning(t, labels, x.rows());
    ad::Var h = ad::relu(ad::add(in_.forward(x), time_in_.forward(cond)));
    std::vector<ad::Var> skips{h};
    for (std::size_t i = 0; i < down_.size(); ++i) {
        h = ad::relu(ad::add(down_[i].forward(h), time_down_[i].forward(cond)));
        skips.push_back(h);
    }
    for (std::size_t j = 0; j < up_.size(); ++j) {
        h = ad::relu(ad::add(up_[j].forward(h), time_up_[j].forward(cond)));
        h = ad::add(h, skips[up_.size() - 1 - j]); // mirrored-level skip
    }
    return out_.forward(h);
}

Mat DenoiserUnet::forward_value(const Mat& x, long t,
                                const std::vector<int>& labels) const {
    return forward(ad::constant(x), t, labels).value();
}

std::vector<ad::Var> DenoiserUnet::parameters() const {
    std::vector<ad::Var> params;
    auto push = [&params](const nets::Dense& dense) {
        params.push_back(dense.W);
        params.push_back(dense.b);
    };
    push(in_);
    push(time_in_);
    for (const auto& d : down_) push(d);
    for (const auto& d : time_down_) push(d);
    for (const auto& d : up_) push(d);
    for (const auto& d : time_up_) push(d);
    push(out_);
    params.push_back(label_.table);
    return params;
}

Mat ldm_ancestral(const DenoiserUnet& denoiser,
                  const blocks::DiffusionSchedule& schedule, Mat x,
                  const std::vector<int>& labels, Rng& rng) {
    schedule.validate();
    if (x.cols() != denoiser.latent_dim()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "latent width " + std::to_string(x.cols()) +
                        " does not match the denoiser");
    }
    for (int t = schedule.T; t >= 1; --t) {
        const Mat eps_hat = denoiser.forward_value(x, t, labels);
        const double beta = schedule.betas[static_cast<std::size_t>(t - 1)];
        const double alpha = schedule.alphas[static_cast<std::size_t>(t - 1)];
        const double abar = schedule.alpha_bars[static_cast<std::size_t>(t - 1)];
        x = (x - (beta / std::sqrt(1.0 - abar)) * eps_hat) / std::sqrt(alpha);
        if (t > 1) {
            x += std::sqrt(beta) * rng.normal_matrix(x.rows(), x.cols());
        }
    }
    return x;
}

LdmNets build_ldm(const GeneratorConfig& config, int feature_dim, Rng& rng) {
    if (config.family != "ldm") {
        throw Error(ErrorCode::ConfigInvalid,
                    "family '" + config.family + "' is not ldm");
    }
    config.validate(feature_dim);
    LdmNets nets;
    // Stage-1 VAE is unconditional; labels enter through the denoiser.
    nets.vae.conditional = false;
    nets.vae.code_width = config.latent_dim;
    nets.vae.feature_dim = feature_dim;
    nets.vae.encoder = nets::Mlp(
        stack_widths(feature_dim, config.hidden_widths, 2 * config.latent_dim),
        nets::Activation::leaky_relu, nets::Activation::linear, rng);
    nets.vae.decoder = nets::Mlp(
        stack_widths(config.latent_dim, reversed(config.hidden_widths),
                     feature_dim),
        nets::Activation::relu, nets::Activation::sigmoid, rng);
    nets.denoiser = DenoiserUnet(config.latent_dim, config.params.denoiser_widths,
                                 config.params.time_embed_dim, rng);
    nets.schedule = blocks::DiffusionSchedule::linear(config.params.diffusion_steps);
    return nets;
}

// -------------------------------------------------------------------- state

struct TrainedGenerator::State {
    GeneratorConfig config;
    FeatureSchema schema;
    int feature_dim = 0;
    TrainingTrace trace;

    // Family-specific sampling apparatus. Only what sampling needs is kept:
    // critics and encoders are discarded at the end of fit.
    std::vector<nets::Mlp> per_class_nets; // gan/wgan/wgan_gp generators, ae decoders
    nets::Mlp shared_net;                  // cgan generator; vae/vq_vae/ldm decoder
    nets::Embedding label_embed;           // decoder/generator label table
    Mat codebook;                          // vq_vae entries (K x D)
    Mat code_probs;                        // vq_vae per-class index distribution (2 x K)
    Mat latent_mean;                       // ae per-class latent means (2 x L)
    std::vector<Mat> latent_chol;          // ae per-class Cholesky factors
    DenoiserUnet denoiser;                 // ldm
    blocks::DiffusionSchedule schedule;    // ldm
    std::vector<Mat> class_rows;           // copy/external row stores
};

TrainedGenerator::TrainedGenerator(std::shared_ptr<const State> state)
    : state_(std::move(state)) {}

const TrainedGenerator::State& TrainedGenerator::state() const {
    if (!state_) {
        throw Error(ErrorCode::UntrainedModel, "generator has no trained state");
    }
    return *state_;
}

const GeneratorConfig& TrainedGenerator::config() const { return state().config; }
const FeatureSchema& TrainedGenerator::schema() const { return state().schema; }
int TrainedGenerator::feature_dim() const { return state().feature_dim; }
const TrainingTrace& TrainedGenerator::trace() const { return state().trace; }

namespace {

// Binary schema columns snap to exact {0, 1}; continuous columns clamp to
// the unit interval (a no-op for sigmoid outputs).
Mat postprocess_rows(Mat x, const FeatureSchema& schema) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (schema.kinds[static_cast<std::size_t>(j)] == FeatureKind::binary) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                x(i, j) = x(i, j) >= 0.5 ? 1.0 : 0.0;
            }
        } else {
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                x(i, j) = std::clamp(x(i, j), 0.0, 1.0);
            }
        }
    }
    return x;
}

Mat sample_replay(const Mat& stored, int n, Rng& rng) {
    const long available = stored.rows();
    if (n > available) {
        throw Error(ErrorCode::InsufficientRows,
                    "requested " + std::to_string(n) + " rows but only " +
                        std::to_string(available) + " are available");
    }
    if (n == available) return stored;
    std::vector<int> order(static_cast<std::size_t>(available));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    order.resize(static_cast<std::size_t>(n));
    return rows_of(stored, order);
}

} // namespace

Mat TrainedGenerator::sample(int n, int class_label, std::uint64_t seed) const {
    const State& s = state();
    if (n < 0) {
        throw Error(ErrorCode::ConfigInvalid, "sample count must be non-negative");
    }
    if (class_label != 0 && class_label != 1) {
        throw Error(ErrorCode::ConfigInvalid, "class label must be 0 or 1");
    }
    const int d = s.feature_dim;
    if (n == 0) return Mat(0, d);

    Rng rng(derive_seed(seed, kSampleStream,
                        static_cast<std::uint64_t>(class_label),
                        family_tag(s.config.family)));
    const std::string& family = s.config.family;
    const int latent = s.config.latent_dim;
    Mat raw;

    if (family == "gan" || family == "wgan" || family == "wgan_gp") {
        const Mat z = rng.normal_matrix(n, latent);
        raw = s.per_class_nets[static_cast<std::size_t>(class_label)].forward_value(z);
    } else if (family == "cgan") {
        const Mat z = rng.normal_matrix(n, latent);
        raw = s.shared_net.forward_value(
            with_label_columns(z, s.label_embed.table.value(), class_label));
    } else if (family == "ae") {
        const Mat eps = rng.normal_matrix(n, latent);
        const Mat& chol = s.latent_chol[static_cast<std::size_t>(class_label)];
        Mat z = eps * chol.transpose();
        z.rowwise() += s.latent_mean.row(class_label);
        raw = s.per_class_nets[static_cast<std::size_t>(class_label)].forward_value(z);
    } else if (family == "vae") {
        const Mat z = rng.normal_matrix(n, latent);
        raw = s.shared_net.forward_value(
            with_label_columns(z, s.label_embed.table.value(), class_label));
    } else if (family == "vq_vae") {
        const int K = static_cast<int>(s.codebook.rows());
        std::vector<double> cumulative(static_cast<std::size_t>(K), 0.0);
        double total = 0.0;
        for (int k = 0; k < K; ++k) {
            total += s.code_probs(class_label, k);
            cumulative[static_cast<std::size_t>(k)] = total;
        }
        Mat codes(n, s.codebook.cols());
        for (int i = 0; i < n; ++i) {
            const double u = rng.uniform() * total;
            const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
            const int k = static_cast<int>(
                std::min<std::ptrdiff_t>(it - cumulative.begin(), K - 1));
            codes.row(i) = s.codebook.row(k);
        }
        raw = s.shared_net.forward_value(
            with_label_columns(codes, s.label_embed.table.value(), class_label));
    } else if (family == "ldm") {
        Mat x = rng.normal_matrix(n, latent);
        const std::vector<int> labels(static_cast<std::size_t>(n), class_label);
        raw = s.shared_net.forward_value(
            ldm_ancestral(s.denoiser, s.schedule, std::move(x), labels, rng));
    } else if (family == "copy" || family == kExternalFamily) {
        raw = sample_replay(s.class_rows[static_cast<std::size_t>(class_label)], n, rng);
    } else if (family == "noise") {
        raw = rng.uniform_matrix(n, d);
    } else {
        throw Error(ErrorCode::ConfigInvalid, "unknown family: " + family);
    }
    return postprocess_rows(std::move(raw), s.schema);
}

// ----------------------------------------------------------------- training

namespace {

Mat generate_value(const AdversarialNets& nets, const Mat& z,
                   const std::vector<int>& labels) {
    if (!nets.conditional) return nets.generator.forward_value(z);
    Mat input(z.rows(), z.cols() + nets.generator_label.table.cols());
    input.leftCols(z.cols()) = z;
    const Mat& table = nets.generator_label.table.value();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        input.row(i).tail(table.cols()) = table.row(labels[static_cast<std::size_t>(i)]);
    }
    return nets.generator.forward_value(input);
}

struct AdvEpochStats {
    double critic = 0.0;
    double generator = 0.0;
    double penalty = 0.0;
    long critic_n = 0;
    long gen_n = 0;

    void merge(const AdvEpochStats& other) {
        critic += other.critic;
        generator += other.generator;
        penalty += other.penalty;
        critic_n += other.critic_n;
        gen_n += other.gen_n;
    }
};

AdvEpochStats adversarial_epoch(AdversarialNets& nets, nets::Optimizer& gen_opt,
                                nets::Optimizer& critic_opt, const Mat& x,
                                const std::vector<int>& labels,
                                const GeneratorConfig& config, Rng& rng,
                                const FitHooks& hooks) {
    const bool wasserstein =
        config.family == "wgan" || config.family == "wgan_gp";
    const int ratio = wasserstein ? 5 : 1; // critic steps per generator step
    const auto gen_params = nets.generator_parameters();
    const auto critic_params = nets.critic_parameters();
    AdvEpochStats stats;

    auto generator_step = [&](Eigen::Index batch, const std::vector<int>& lb) {
        const Mat z = rng.normal_matrix(batch, nets.latent_dim);
        const ad::Var fake = nets.generate(ad::constant(z), lb);
        const ad::Var score = nets.criticize(fake, lb);
        const ad::Var loss =
            wasserstein
                ? ad::neg(ad::mean(score))
                : ad::neg(ad::mean(ad::log_fn(ad::cadd(score, 1e-12))));
        const auto grads = ad::backward(loss, gen_params);
        gen_opt.step(gen_params, grads);
        stats.generator += loss.scalar();
        ++stats.gen_n;
    };

    long critic_steps = 0;
    for (const auto& batch : epoch_batches(x.rows(), config.batch_size, rng)) {
        const Mat xr = rows_of(x, batch);
        std::vector<int> lb;
        if (nets.conditional) {
            lb.reserve(batch.size());
            for (const int r : batch) lb.push_back(labels[static_cast<std::size_t>(r)]);
        }
        const Mat z = rng.normal_matrix(xr.rows(), nets.latent_dim);
        const Mat xf = generate_value(nets, z, lb);

        const ad::Var real_score = nets.criticize(ad::constant(xr), lb);
        const ad::Var fake_score = nets.criticize(ad::constant(xf), lb);
        ad::Var critic_loss;
        if (wasserstein) {
            critic_loss = ad::sub(ad::mean(fake_score), ad::mean(real_score));
            if (config.family == "wgan_gp") {
                Vec mix(xr.rows());
                for (Eigen::Index i = 0; i < mix.size(); ++i) {
                    mix(i) = rng.uniform();
                }
                const ad::Var penalty = blocks::gradient_penalty_var(
                    [&nets, &lb](const ad::Var& xhat) {
                        return nets.criticize(xhat, lb);
                    },
                    xr, xf, config.params.lambda_gp, mix);
                stats.penalty += penalty.scalar();
                critic_loss = ad::add(critic_loss, penalty);
            }
        } else {
            // Critic outputs probabilities; binary cross-entropy against
            // real=1 / fake=0, clamped away from log(0).
            const ad::Var real_term =
                ad::mean(ad::log_fn(ad::cadd(real_score, 1e-12)));
            const ad::Var fake_term = ad::mean(
                ad::log_fn(ad::cadd(ad::neg(fake_score), 1.0 + 1e-12)));
            critic_loss = ad::neg(ad::add(real_term, fake_term));
        }
        const auto grads = ad::backward(critic_loss, critic_params);
        critic_opt.step(critic_params, grads);
        if (config.family == "wgan") {
            clip_parameters(critic_params, config.params.clip_value);
        }
        if (hooks.after_critic_update) {
            hooks.after_critic_update(parameter_values(critic_params));
        }
        stats.critic += critic_loss.scalar();
        ++stats.critic_n;
        ++critic_steps;
        if (critic_steps % ratio == 0) {
            generator_step(xr.rows(), lb);
        }
    }
    if (stats.gen_n == 0) {
        // Fewer batches than the critic ratio: still give the generator one
        // step so the per-epoch series stays defined.
        const Eigen::Index batch =
            std::min<Eigen::Index>(config.batch_size, x.rows());
        std::vector<int> lb;
        if (nets.conditional) {
            lb.resize(static_cast<std::size_t>(batch));
            for (Eigen::Index i = 0; i < batch; ++i) {
                lb[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
            }
        }
        generator_step(batch, lb);
    }
    return stats;
}

void fit_adversarial(TrainedGenerator::State& state, const TabularDataset& train,
                     std::uint64_t seed, const FitHooks& hooks,
                     EpochRecorder& recorder) {
    const GeneratorConfig& config = state.config;
    const int d = state.feature_dim;
    const std::uint64_t tag = family_tag(config.family);

    if (config.family == "cgan") {
        Rng init_rng(derive_seed(seed, kInitStream, tag));
        AdversarialNets nets = build_adversarial(config, d, init_rng);
        nets::Optimizer gen_opt(config.optimizer);
        nets::Optimizer critic_opt(config.optimizer);
        std::vector<int> labels(static_cast<std::size_t>(train.rows()));
        for (Eigen::Index i = 0; i < train.rows(); ++i) {
            labels[static_cast<std::size_t>(i)] = train.labels(i);
        }
        Rng train_rng(derive_seed(seed, kTrainStream, tag));
        for (int epoch = 1; epoch <= config.epochs; ++epoch) {
            const auto stats =
                adversarial_epoch(nets, gen_opt, critic_opt, train.features,
                                  labels, config, train_rng, hooks);
            recorder.record(epoch, "critic",
                            stats.critic / static_cast<double>(stats.critic_n));
            recorder.record(epoch, "generator",
                            stats.generator / static_cast<double>(stats.gen_n));
        }
        state.shared_net = nets.generator;
        state.label_embed = nets.generator_label;
        return;
    }

    // Unconditional adversarial families: one submodel per class, trained in
    // lockstep so the trace carries one combined loss per epoch.
    std::vector<AdversarialNets> nets;
    std::vector<nets::Optimizer> gen_opts;
    std::vector<nets::Optimizer> critic_opts;
    std::vector<Mat> class_features;
    std::vector<Rng> train_rngs;
    for (int c = 0; c < 2; ++c) {
        Rng init_rng(derive_seed(seed, kInitStream, tag, static_cast<std::uint64_t>(c)));
        nets.push_back(build_adversarial(config, d, init_rng));
        gen_opts.emplace_back(config.optimizer);
        critic_opts.emplace_back(config.optimizer);
        class_features.push_back(rows_of(train.features, train.class_indices(c)));
        train_rngs.emplace_back(
            derive_seed(seed, kTrainStream, tag, static_cast<std::uint64_t>(c)));
    }
    const std::vector<int> no_labels;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        AdvEpochStats combined;
        for (int c = 0; c < 2; ++c) {
            combined.merge(adversarial_epoch(nets[static_cast<std::size_t>(c)],
                                             gen_opts[static_cast<std::size_t>(c)],
                                             critic_opts[static_cast<std::size_t>(c)],
                                             class_features[static_cast<std::size_t>(c)],
                                             no_labels, config,
                                             train_rngs[static_cast<std::size_t>(c)],
                                             hooks));
        }
        recorder.record(epoch, "critic",
                        combined.critic / static_cast<double>(combined.critic_n));
        recorder.record(epoch, "generator",
                        combined.generator / static_cast<double>(combined.gen_n));
        if (config.family == "wgan_gp") {
            recorder.record(epoch, "penalty",
                            combined.penalty /
                                static_cast<double>(combined.critic_n));
        }
    }
    state.per_class_nets = {nets[0].generator, nets[1].generator};
}

void fit_ae(TrainedGenerator::State& state, const TabularDataset& train,
            std::uint64_t seed, const FitHooks& /*hooks*/,
            EpochRecorder& recorder) {
    const GeneratorConfig& config = state.config;
    const int d = state.feature_dim;
    const int latent = config.latent_dim;
    const std::uint64_t tag = family_tag(config.family);

    std::vector<AutoencodingNets> nets;
    std::vector<nets::Optimizer> opts;
    std::vector<Mat> class_features;
    std::vector<Rng> train_rngs;
    for (int c = 0; c < 2; ++c) {
        Rng init_rng(derive_seed(seed, kInitStream, tag, static_cast<std::uint64_t>(c)));
        nets.push_back(build_autoencoding(config, d, init_rng));
        opts.emplace_back(config.optimizer);
        class_features.push_back(rows_of(train.features, train.class_indices(c)));
        train_rngs.emplace_back(
            derive_seed(seed, kTrainStream, tag, static_cast<std::uint64_t>(c)));
    }
    const std::vector<int> no_labels;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double loss_sum = 0.0;
        long batches = 0;
        for (int c = 0; c < 2; ++c) {
            auto& A = nets[static_cast<std::size_t>(c)];
            const auto params = A.parameters();
            const Mat& xc = class_features[static_cast<std::size_t>(c)];
            for (const auto& batch :
                 epoch_batches(xc.rows(), config.batch_size,
                               train_rngs[static_cast<std::size_t>(c)])) {
                const ad::Var x = ad::constant(rows_of(xc, batch));
                const ad::Var z = A.encode(x, no_labels);
                const ad::Var recon = A.decode(z, no_labels);
                const ad::Var loss = ad::mse(recon, x);
                const auto grads = ad::backward(loss, params);
                opts[static_cast<std::size_t>(c)].step(params, grads);
                loss_sum += loss.scalar();
                ++batches;
            }
        }
        recorder.record(epoch, "reconstruction",
                        loss_sum / static_cast<double>(batches));
    }

    // Sampling distribution: per-class full-covariance Gaussian over the
    // training latents.
    state.latent_mean = Mat::Zero(2, latent);
    state.latent_chol.assign(2, Mat::Identity(latent, latent));
    for (int c = 0; c < 2; ++c) {
        const Mat z = nets[static_cast<std::size_t>(c)].encoder.forward_value(
            class_features[static_cast<std::size_t>(c)]);
        const Eigen::RowVectorXd mean = z.colwise().mean();
        state.latent_mean.row(c) = mean;
        const Mat centered = z.rowwise() - mean;
        Mat cov = (centered.adjoint() * centered) / static_cast<double>(z.rows());
        double jitter = 1e-9;
        Eigen::LLT<Mat> llt(cov + jitter * Mat::Identity(latent, latent));
        while (llt.info() != Eigen::Success && jitter < 1.0) {
            jitter *= 10.0;
            llt.compute(cov + jitter * Mat::Identity(latent, latent));
        }
        state.latent_chol[static_cast<std::size_t>(c)] = llt.matrixL();
    }
    state.per_class_nets = {nets[0].decoder, nets[1].decoder};
}

// One VAE epoch over (features, labels); returns {recon, weighted kl, total}
// sums plus batch count. Shared by the vae family and the ldm first stage.
struct VaeEpochStats {
    double recon = 0.0;
    double kl = 0.0;
    double total = 0.0;
    long batches = 0;
};

VaeEpochStats vae_epoch(AutoencodingNets& nets, nets::Optimizer& opt,
                        const Mat& x, const std::vector<int>& labels,
                        const GeneratorConfig& config, int latent, Rng& rng) {
    VaeEpochStats stats;
    const auto params = nets.parameters();
    for (const auto& batch : epoch_batches(x.rows(), config.batch_size, rng)) {
        const Mat xb = rows_of(x, batch);
        std::vector<int> lb;
        if (nets.conditional) {
            lb.reserve(batch.size());
            for (const int r : batch) lb.push_back(labels[static_cast<std::size_t>(r)]);
        }
        const ad::Var xv = ad::constant(xb);
        const ad::Var h = nets.encode(xv, lb);
        const ad::Var mu = ad::slice_cols(h, 0, latent);
        const ad::Var log_var = ad::slice_cols(h, latent, 2 * latent);
        const Mat eps = rng.normal_matrix(xb.rows(), latent);
        const ad::Var z = blocks::reparameterize(mu, log_var, eps);
        const ad::Var recon_v = nets.decode(z, lb);
        const ad::Var recon = ad::mse(recon_v, xv);
        const ad::Var kl = blocks::gaussian_kl_mean(mu, log_var);
        const ad::Var total =
            ad::add(recon, ad::cmul(kl, config.params.kl_weight));
        const auto grads = ad::backward(total, params);
        opt.step(params, grads);
        stats.recon += recon.scalar();
        stats.kl += config.params.kl_weight * kl.scalar();
        stats.total += total.scalar();
        ++stats.batches;
    }
    return stats;
}

void fit_vae(TrainedGenerator::State& state, const TabularDataset& train,
             std::uint64_t seed, const FitHooks& /*hooks*/,
             EpochRecorder& recorder) {
    const GeneratorConfig& config = state.config;
    const std::uint64_t tag = family_tag(config.family);
    Rng init_rng(derive_seed(seed, kInitStream, tag));
    AutoencodingNets nets = build_autoencoding(config, state.feature_dim, init_rng);
    nets::Optimizer opt(config.optimizer);
    std::vector<int> labels(static_cast<std::size_t>(train.rows()));
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
        labels[static_cast<std::size_t>(i)] = train.labels(i);
    }
    Rng train_rng(derive_seed(seed, kTrainStream, tag));
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto stats = vae_epoch(nets, opt, train.features, labels, config,
                                     config.latent_dim, train_rng);
        const double denom = static_cast<double>(stats.batches);
        // The traced "kl" is the weighted term, so total = reconstruction + kl
        // holds within the trace itself.
        recorder.record(epoch, "total", stats.total / denom);
        recorder.record(epoch, "reconstruction", stats.recon / denom);
        recorder.record(epoch, "kl", stats.kl / denom);
    }
    state.shared_net = nets.decoder;
    state.label_embed = nets.decoder_label;
}

void fit_vq_vae(TrainedGenerator::State& state, const TabularDataset& train,
                std::uint64_t seed, const FitHooks& /*hooks*/,
                EpochRecorder& recorder) {
    const GeneratorConfig& config = state.config;
    const std::uint64_t tag = family_tag(config.family);
    Rng init_rng(derive_seed(seed, kInitStream, tag));
    AutoencodingNets nets = build_autoencoding(config, state.feature_dim, init_rng);
    nets::Optimizer opt(config.optimizer);
    const auto params = nets.parameters();
    std::vector<int> labels(static_cast<std::size_t>(train.rows()));
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
        labels[static_cast<std::size_t>(i)] = train.labels(i);
    }
    Rng train_rng(derive_seed(seed, kTrainStream, tag));
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double total_sum = 0.0, recon_sum = 0.0, quant_sum = 0.0;
        long batches = 0;
        for (const auto& batch :
             epoch_batches(train.rows(), config.batch_size, train_rng)) {
            const Mat xb = rows_of(train.features, batch);
            std::vector<int> lb;
            lb.reserve(batch.size());
            for (const int r : batch) lb.push_back(labels[static_cast<std::size_t>(r)]);
            const ad::Var xv = ad::constant(xb);
            const ad::Var codes = nets.encode(xv, lb);
            const auto q = blocks::quantize_st(nets.codebook, codes,
                                               config.params.commitment_cost);
            const ad::Var recon = ad::mse(nets.decode(q.quantized, lb), xv);
            const ad::Var quant = ad::add(q.codebook_loss, q.commitment_loss);
            const ad::Var total = ad::add(recon, quant);
            const auto grads = ad::backward(total, params);
            opt.step(params, grads);
            total_sum += total.scalar();
            recon_sum += recon.scalar();
            quant_sum += quant.scalar();
            ++batches;
        }
        const double denom = static_cast<double>(batches);
        recorder.record(epoch, "total", total_sum / denom);
        recorder.record(epoch, "reconstruction", recon_sum / denom);
        recorder.record(epoch, "quantization", quant_sum / denom);
    }

    // Sampling distribution: per-class categorical over the code indices the
    // trained encoder assigns to the training rows.
    const int K = config.params.codebook_size;
    state.code_probs = Mat::Zero(2, K);
    blocks::Codebook book{nets.codebook.value(), config.params.commitment_cost};
    for (int c = 0; c < 2; ++c) {
        const auto idx = train.class_indices(c);
        const Mat xc = rows_of(train.features, idx);
        const std::vector<int> lc(idx.size(), c);
        const Mat codes = nets.encode(ad::constant(xc), lc).value();
        const auto q = blocks::quantize(book, codes);
        for (const int k : q.indices) {
            state.code_probs(c, k) += 1.0;
        }
        state.code_probs.row(c) /= static_cast<double>(q.indices.size());
    }
    state.codebook = nets.codebook.value();
    state.shared_net = nets.decoder;
    state.label_embed = nets.decoder_label;
}

void fit_ldm(TrainedGenerator::State& state, const TabularDataset& train,
             std::uint64_t seed, const FitHooks& /*hooks*/,
             EpochRecorder& recorder) {
    const GeneratorConfig& config = state.config;
    const int latent = config.latent_dim;
    const std::uint64_t tag = family_tag(config.family);
    Rng init_rng(derive_seed(seed, kInitStream, tag));
    LdmNets nets = build_ldm(config, state.feature_dim, init_rng);
    std::vector<int> labels(static_cast<std::size_t>(train.rows()));
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
        labels[static_cast<std::size_t>(i)] = train.labels(i);
    }

    // Stage 1: the VAE that defines the latent space.
    {
        nets::Optimizer opt(config.optimizer);
        Rng stage_rng(derive_seed(seed, kTrainStream, tag, 1));
        const std::vector<int> no_labels;
        for (int epoch = 1; epoch <= config.epochs; ++epoch) {
            const auto stats = vae_epoch(nets.vae, opt, train.features,
                                         no_labels, config, latent, stage_rng);
            const double denom = static_cast<double>(stats.batches);
            recorder.record(epoch, "reconstruction", stats.recon / denom);
            recorder.record(epoch, "kl", stats.kl / denom);
        }
    }

    // Stage 2: noise-prediction denoiser over the (deterministic) encoder
    // means of the training rows.
    const Mat encoded =
        nets.vae.encoder.forward_value(train.features).leftCols(latent);
    {
        nets::Optimizer opt(config.optimizer);
        const auto params = nets.denoiser.parameters();
        Rng stage_rng(derive_seed(seed, kTrainStream, tag, 2));
        const int T = nets.schedule.T;
        for (int epoch = 1; epoch <= config.epochs; ++epoch) {
            double loss_sum = 0.0;
            long batches = 0;
            for (const auto& batch :
                 epoch_batches(encoded.rows(), config.batch_size, stage_rng)) {
                const Mat z0 = rows_of(encoded, batch);
                std::vector<int> lb;
                lb.reserve(batch.size());
                for (const int r : batch) lb.push_back(labels[static_cast<std::size_t>(r)]);
                const int t = 1 + static_cast<int>(stage_rng.below(
                                      static_cast<std::uint64_t>(T)));
                const Mat eps = stage_rng.normal_matrix(z0.rows(), latent);
                const Mat xt = blocks::diffusion_forward(z0, t, nets.schedule, eps);
                const ad::Var pred =
                    nets.denoiser.forward(ad::constant(xt), t, lb);
                const ad::Var loss = ad::mse(pred, ad::constant(eps));
                const auto grads = ad::backward(loss, params);
                opt.step(params, grads);
                loss_sum += loss.scalar();
                ++batches;
            }
            recorder.record(epoch, "diffusion_mse",
                            loss_sum / static_cast<double>(batches));
        }
    }
    state.shared_net = nets.vae.decoder;
    state.denoiser = nets.denoiser;
    state.schedule = nets.schedule;
}

void fit_copy(TrainedGenerator::State& state, const TabularDataset& train) {
    state.class_rows = {rows_of(train.features, train.class_indices(0)),
                        rows_of(train.features, train.class_indices(1))};
}

} // namespace

TrainedGenerator fit(const GeneratorConfig& config, const TabularDataset& train,
                     std::uint64_t seed, const FitHooks& hooks) {
    train.validate();
    const int d = static_cast<int>(train.cols());
    config.validate(d, train.rows());
    if (config.family != "noise") {
        if (train.features.size() > 0 &&
            (train.features.minCoeff() < 0.0 || train.features.maxCoeff() > 1.0)) {
            throw Error(ErrorCode::ConfigInvalid,
                        "training features must be normalized to [0, 1]");
        }
        if (train.class_count(0) == 0 || train.class_count(1) == 0) {
            throw Error(ErrorCode::ConfigInvalid,
                        "training data must contain both classes");
        }
    }

    auto state = std::make_shared<TrainedGenerator::State>();
    state->config = config;
    state->schema = train.schema;
    state->feature_dim = d;
    EpochRecorder recorder(state->trace, hooks, config.family);

    try {
        if (family_is_adversarial(config.family)) {
            fit_adversarial(*state, train, seed, hooks, recorder);
        } else if (config.family == "ae") {
            fit_ae(*state, train, seed, hooks, recorder);
        } else if (config.family == "vae") {
            fit_vae(*state, train, seed, hooks, recorder);
        } else if (config.family == "vq_vae") {
            fit_vq_vae(*state, train, seed, hooks, recorder);
        } else if (config.family == "ldm") {
            fit_ldm(*state, train, seed, hooks, recorder);
        } else if (config.family == "copy") {
            fit_copy(*state, train);
        } else if (config.family == "noise") {
            // Label-independent uniform rows; nothing to train.
        } else {
            throw Error(ErrorCode::ConfigInvalid,
                        "family '" + config.family + "' cannot be fitted");
        }
    } catch (const Error& err) {
        if (err.code() == ErrorCode::NonFiniteInput ||
            err.code() == ErrorCode::NonFiniteGradient) {
            // Numerical faults inside a training step surface through the
            // monitor before the run is abandoned.
            if (hooks.on_epoch) {
                hooks.on_epoch(monitor::TraceEvent{
                    0, "total", std::numeric_limits<double>::quiet_NaN()});
            }
            throw Error(ErrorCode::DivergedTraining,
                        config.family + ": " + err.what());
        }
        throw;
    }
    return TrainedGenerator(std::move(state));
}

// ------------------------------------------------------------ serialization

namespace {

struct Component {
    std::string name;
    Mat value;
};

Mat flat_row(const std::vector<ad::Var>& params) {
    const std::vector<double> data = nets::flatten(params);
    Mat row(1, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        row(0, static_cast<Eigen::Index>(i)) = data[i];
    }
    return row;
}

void unflatten_row(const Mat& row, const std::vector<ad::Var>& params) {
    std::vector<double> data(row.data(), row.data() + row.size());
    nets::unflatten(data, params);
}

std::vector<Component> collect_components(const TrainedGenerator::State& s) {
    const std::string& family = s.config.family;
    std::vector<Component> out;
    if (family == "gan" || family == "wgan" || family == "wgan_gp") {
        out.push_back({"generator0", flat_row(s.per_class_nets[0].parameters())});
        out.push_back({"generator1", flat_row(s.per_class_nets[1].parameters())});
    } else if (family == "cgan") {
        out.push_back({"generator", flat_row(s.shared_net.parameters())});
        out.push_back({"label_embed", s.label_embed.table.value()});
    } else if (family == "ae") {
        out.push_back({"decoder0", flat_row(s.per_class_nets[0].parameters())});
        out.push_back({"decoder1", flat_row(s.per_class_nets[1].parameters())});
        out.push_back({"latent_mean", s.latent_mean});
        out.push_back({"latent_chol0", s.latent_chol[0]});
        out.push_back({"latent_chol1", s.latent_chol[1]});
    } else if (family == "vae") {
        out.push_back({"decoder", flat_row(s.shared_net.parameters())});
        out.push_back({"label_embed", s.label_embed.table.value()});
    } else if (family == "vq_vae") {
        out.push_back({"decoder", flat_row(s.shared_net.parameters())});
        out.push_back({"label_embed", s.label_embed.table.value()});
        out.push_back({"codebook", s.codebook});
        out.push_back({"code_probs", s.code_probs});
    } else if (family == "ldm") {
        out.push_back({"decoder", flat_row(s.shared_net.parameters())});
        out.push_back({"denoiser", flat_row(s.denoiser.parameters())});
    } else if (family == "copy" || family == kExternalFamily) {
        out.push_back({"rows0", s.class_rows[0]});
        out.push_back({"rows1", s.class_rows[1]});
    }
    return out;
}

// Rebuilds the sampling skeleton (untrained nets of the right shapes) that
// assign_component fills from the parameter blob.
void build_skeleton(TrainedGenerator::State& s) {
    const GeneratorConfig& config = s.config;
    const std::string& family = config.family;
    const int d = s.feature_dim;
    Rng rng(0); // placeholder weights; overwritten by the blob
    if (family == "gan" || family == "wgan" || family == "wgan_gp") {
        s.per_class_nets.assign(
            2, nets::Mlp(generator_widths(config, d), nets::Activation::relu,
                         nets::Activation::sigmoid, rng));
        // Distinct parameter stores per class.
        s.per_class_nets[1] = nets::Mlp(generator_widths(config, d),
                                        nets::Activation::relu,
                                        nets::Activation::sigmoid, rng);
    } else if (family == "cgan") {
        s.shared_net = nets::Mlp(generator_widths(config, d),
                                 nets::Activation::relu,
                                 nets::Activation::sigmoid, rng);
    } else if (family == "ae") {
        s.per_class_nets.clear();
        for (int c = 0; c < 2; ++c) {
            s.per_class_nets.emplace_back(decoder_widths(config, d),
                                          nets::Activation::relu,
                                          nets::Activation::sigmoid, rng);
        }
        s.latent_chol.assign(2, Mat());
    } else if (family == "vae" || family == "vq_vae") {
        s.shared_net = nets::Mlp(decoder_widths(config, d),
                                 nets::Activation::relu,
                                 nets::Activation::sigmoid, rng);
    } else if (family == "ldm") {
        s.shared_net = nets::Mlp(
            stack_widths(config.latent_dim, reversed(config.hidden_widths), d),
            nets::Activation::relu, nets::Activation::sigmoid, rng);
        s.denoiser = DenoiserUnet(config.latent_dim, config.params.denoiser_widths,
                                  config.params.time_embed_dim, rng);
    } else if (family == "copy" || family == kExternalFamily) {
        s.class_rows.assign(2, Mat());
    }
}

void assign_component(TrainedGenerator::State& s, const std::string& name,
                      const Mat& value) {
    const std::string& family = s.config.family;
    auto fail = [&]() -> void {
        throw Error(ErrorCode::SchemaMismatch,
                    "unexpected component '" + name + "' for family " + family);
    };
    if (name == "generator0" || name == "decoder0") {
        unflatten_row(value, s.per_class_nets.at(0).parameters());
    } else if (name == "generator1" || name == "decoder1") {
        unflatten_row(value, s.per_class_nets.at(1).parameters());
    } else if (name == "generator" || name == "decoder") {
        unflatten_row(value, s.shared_net.parameters());
    } else if (name == "label_embed") {
        s.label_embed.table = ad::param(value);
    } else if (name == "latent_mean") {
        s.latent_mean = value;
    } else if (name == "latent_chol0") {
        s.latent_chol.at(0) = value;
    } else if (name == "latent_chol1") {
        s.latent_chol.at(1) = value;
    } else if (name == "codebook") {
        s.codebook = value;
    } else if (name == "code_probs") {
        s.code_probs = value;
    } else if (name == "denoiser") {
        unflatten_row(value, s.denoiser.parameters());
    } else if (name == "rows0") {
        s.class_rows.at(0) = value;
    } else if (name == "rows1") {
        s.class_rows.at(1) = value;
    } else {
        fail();
    }
}

nlohmann::json schema_to_json(const FeatureSchema& schema) {
    nlohmann::json kinds = nlohmann::json::array();
    for (const auto kind : schema.kinds) {
        kinds.push_back(kind == FeatureKind::binary ? "binary" : "continuous");
    }
    return nlohmann::json{{"names", schema.names},
                          {"kinds", kinds},
                          {"label_name", schema.label_name}};
}

FeatureSchema schema_from_json(const nlohmann::json& j) {
    FeatureSchema schema;
    schema.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& kind : j.at("kinds")) {
        schema.kinds.push_back(kind.get<std::string>() == "binary"
                                   ? FeatureKind::binary
                                   : FeatureKind::continuous);
    }
    schema.label_name = j.at("label_name").get<std::string>();
    schema.validate();
    return schema;
}

} // namespace

void TrainedGenerator::save(const std::string& dir) const {
    const State& s = state();
    std::filesystem::create_directories(dir);
    const auto components = collect_components(s);

    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& component : components) {
        manifest.push_back(nlohmann::json{{"name", component.name},
                                          {"rows", component.value.rows()},
                                          {"cols", component.value.cols()}});
    }
    nlohmann::json extra = nlohmann::json::object();
    if (s.config.family == "ldm") {
        extra["schedule"] = s.schedule.to_json();
    }
    const nlohmann::json header{{"schema_version", kSchemaVersion},
                                {"config", s.config.to_json()},
                                {"feature_dim", s.feature_dim},
                                {"schema", schema_to_json(s.schema)},
                                {"components", manifest},
                                {"extra", extra}};

    {
        std::ofstream out(dir + "/config.json");
        if (!out) {
            throw Error(ErrorCode::MissingFile, "cannot write " + dir + "/config.json");
        }
        out << header.dump(2) << '\n';
    }
    {
        std::ofstream out(dir + "/trace.json");
        if (!out) {
            throw Error(ErrorCode::MissingFile, "cannot write " + dir + "/trace.json");
        }
        out << s.trace.to_json().dump(2) << '\n';
    }
    {
        std::ofstream out(dir + "/parameters.bin", std::ios::binary);
        if (!out) {
            throw Error(ErrorCode::MissingFile,
                        "cannot write " + dir + "/parameters.bin");
        }
        for (const auto& component : components) {
            out.write(reinterpret_cast<const char*>(component.value.data()),
                      static_cast<std::streamsize>(
                          sizeof(double) *
                          static_cast<std::size_t>(component.value.size())));
        }
    }
}

TrainedGenerator TrainedGenerator::load(const std::string& dir) {
    std::ifstream config_in(dir + "/config.json");
    if (!config_in) {
        throw Error(ErrorCode::MissingFile, "cannot read " + dir + "/config.json");
    }
    nlohmann::json header;
    try {
        config_in >> header;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedData,
                    std::string("invalid model header: ") + e.what());
    }
    if (header.value("schema_version", -1) != kSchemaVersion) {
        throw Error(ErrorCode::SchemaMismatch,
                    "unsupported model schema version");
    }

    auto state = std::make_shared<State>();
    state->config = GeneratorConfig::from_json(header.at("config"));
    state->feature_dim = header.at("feature_dim").get<int>();
    state->schema = schema_from_json(header.at("schema"));
    if (header.at("extra").contains("schedule")) {
        state->schedule =
            blocks::DiffusionSchedule::from_json(header.at("extra").at("schedule"));
    }
    {
        std::ifstream trace_in(dir + "/trace.json");
        if (!trace_in) {
            throw Error(ErrorCode::MissingFile, "cannot read " + dir + "/trace.json");
        }
        nlohmann::json trace_json;
        try {
            trace_in >> trace_json;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::MalformedData,
                        std::string("invalid trace file: ") + e.what());
        }
        state->trace = TrainingTrace::from_json(trace_json);
    }

    build_skeleton(*state);

    std::ifstream blob(dir + "/parameters.bin", std::ios::binary);
    if (!blob) {
        throw Error(ErrorCode::MissingFile, "cannot read " + dir + "/parameters.bin");
    }
    for (const auto& entry : header.at("components")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        Mat value(rows, cols);
        blob.read(reinterpret_cast<char*>(value.data()),
                  static_cast<std::streamsize>(sizeof(double) *
                                               static_cast<std::size_t>(value.size())));
        if (!blob) {
            throw Error(ErrorCode::SchemaMismatch,
                        "parameter blob shorter than its manifest");
        }
        assign_component(*state, name, value);
    }
    if (blob.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::SchemaMismatch,
                    "parameter blob longer than its manifest");
    }
    return TrainedGenerator(std::move(state));
}

// ----------------------------------------------------------------- external

TrainedGenerator import_external_synthetic(const std::string& path,
                                           const FeatureSchema& schema) {
    schema.validate();
    dataio::LoadOptions options;
    options.label_column = schema.label_name;
    const TabularDataset loaded = dataio::load_dataset(path, options);

    if (loaded.schema.names != schema.names ||
        loaded.schema.label_name != schema.label_name) {
        throw Error(ErrorCode::SchemaMismatch,
                    "imported columns do not match the declared schema");
    }
    for (std::size_t j = 0; j < schema.kinds.size(); ++j) {
        // A binary-tagged column must hold exactly {0, 1} values; the loader
        // tags a column binary iff that holds. Continuous schema columns may
        // legitimately look binary in a small file.
        if (schema.kinds[j] == FeatureKind::binary &&
            loaded.schema.kinds[j] != FeatureKind::binary) {
            throw Error(ErrorCode::SchemaMismatch,
                        "column '" + schema.names[j] +
                            "' must be binary to match the declared schema");
        }
    }
    if (loaded.rows() == 0) {
        throw Error(ErrorCode::InsufficientRows, "imported file has no rows");
    }
    if (loaded.features.minCoeff() < 0.0 || loaded.features.maxCoeff() > 1.0) {
        throw Error(ErrorCode::SchemaMismatch,
                    "imported features must lie in [0, 1]");
    }

    auto state = std::make_shared<TrainedGenerator::State>();
    state->config.family = kExternalFamily;
    state->schema = schema;
    state->feature_dim = static_cast<int>(loaded.cols());
    state->class_rows = {rows_of(loaded.features, loaded.class_indices(0)),
                         rows_of(loaded.features, loaded.class_indices(1))};
    return TrainedGenerator(std::move(state));
}

} // namespace tabsynth::gen
