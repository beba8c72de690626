#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabsynth/autodiff.hpp"
#include "tabsynth/blocks.hpp"
#include "tabsynth/dataset.hpp"
#include "tabsynth/monitoring.hpp"
#include "tabsynth/nets.hpp"
#include "tabsynth/rng.hpp"

namespace tabsynth::gen {

using Mat = Eigen::MatrixXd;

// The model families the trainer understands. The first eight are the real
// generative families; "copy" and "noise" are diagnostic pseudo-generators
// (replay of training rows / label-independent uniform rows) used to sanity
// check the evaluation pipeline; "external" wraps an imported synthetic CSV.
const std::vector<std::string>& family_names();
bool family_is_adversarial(const std::string& family);
bool family_is_autoencoding(const std::string& family);
// Families that condition through a learned label embedding; the rest handle
// class labels by training one submodel per class.
bool family_uses_label_embedding(const std::string& family);

struct FamilyParams {
    double clip_value = 0.01;    // wgan: critic weights clamped to [-c, c]
    double lambda_gp = 10.0;     // wgan_gp penalty weight
    int embed_dim = 8;           // label-embedding width for cgan
    int codebook_size = 32;      // vq_vae: K entries
    int code_dim = 8;            // vq_vae: D-dimensional codes
    double commitment_cost = 0.25; // vq_vae beta_c
    double kl_weight = 1.0;      // vae/ldm stage-1 KL multiplier
    int diffusion_steps = 100;   // ldm: T
    std::vector<int> denoiser_widths = {64, 32}; // contracting half of the U-Net
    int time_embed_dim = 16;     // sinusoidal embedding width (even)

    nlohmann::json to_json() const;
    static FamilyParams from_json(const nlohmann::json& j);
};

struct GeneratorConfig {
    std::string family;
    int latent_dim = 16;
    std::vector<int> hidden_widths = {128, 64};
    int epochs = 100;
    int batch_size = 64;
    blocks::OptimizerSpec optimizer;
    bool conditional = false; // informational; the pathway follows the family
    FamilyParams params;

    // feature_dim / train_rows may be -1 when unknown (pure schema checks).
    void validate(int feature_dim = -1, long train_rows = -1) const;
    nlohmann::json to_json() const;
    static GeneratorConfig from_json(const nlohmann::json& j);
};

// Named per-epoch loss curves. Steps are strictly increasing within a series.
class TrainingTrace {
public:
    struct Series {
        std::string name;
        std::vector<std::pair<long, double>> points;
    };

    void add(const std::string& series, long step, double value);
    const std::vector<Series>& series() const { return series_; }
    const Series* find(const std::string& name) const;
    std::vector<std::string> names() const;
    bool empty() const { return series_.empty(); }

    nlohmann::json to_json() const;
    static TrainingTrace from_json(const nlohmann::json& j);

private:
    std::vector<Series> series_;
};

// Optional training observers. on_epoch fires once per (epoch, series) with
// the epoch-mean loss; after_critic_update fires with the critic parameter
// values after every critic optimizer step (including the wgan clip), which
// is what makes the clipping contract externally assertable.
struct FitHooks {
    std::function<void(const monitor::TraceEvent&)> on_epoch;
    std::function<void(const std::vector<Mat>&)> after_critic_update;
};

// ------------------------------------------------------------ architectures

// Paired generator/critic for the adversarial families. The generator maps
// latent rows (plus an embedded label for cgan) through a projection layer
// and the hidden stack to d sigmoid outputs; the critic mirrors the stack
// down to one logit, sigmoid-activated for gan/cgan and linear for the
// Wasserstein families.
struct AdversarialNets {
    nets::Mlp generator;
    nets::Mlp critic;
    nets::Embedding generator_label; // defined only for the embedding pathway
    nets::Embedding critic_label;
    bool conditional = false;
    int latent_dim = 0;
    int feature_dim = 0;

    ad::Var generate(const ad::Var& z, const std::vector<int>& labels) const;
    ad::Var criticize(const ad::Var& x, const std::vector<int>& labels) const;
    std::vector<ad::Var> generator_parameters() const;
    std::vector<ad::Var> critic_parameters() const;
};
AdversarialNets build_adversarial(const GeneratorConfig& config, int feature_dim,
                                  Rng& rng);

// Encoder/decoder pair for ae/vae/vq_vae. The encoder ends linear with width
// L (ae), 2L for the vae's (mu | log_var), or D for vq_vae codes; the decoder
// mirrors the hidden stack back to d with a final sigmoid. vae and vq_vae
// condition both halves on an embedded label; ae trains per class.
struct AutoencodingNets {
    nets::Mlp encoder;
    nets::Mlp decoder;
    nets::Embedding encoder_label;
    nets::Embedding decoder_label;
    ad::Var codebook; // vq_vae only: K x D parameter
    bool conditional = false;
    int code_width = 0; // decoder input width (L or D)
    int feature_dim = 0;

    ad::Var encode(const ad::Var& x, const std::vector<int>& labels) const;
    ad::Var decode(const ad::Var& z, const std::vector<int>& labels) const;
    std::vector<ad::Var> parameters() const; // everything trainable
};
AutoencodingNets build_autoencoding(const GeneratorConfig& config,
                                    int feature_dim, Rng& rng);

// Feedforward U-Net denoiser over latent rows: widths contract then expand
// symmetrically, mirrored levels are joined by additive skip connections,
// and every level injects a linear projection of the conditioning vector
// (sinusoidal time embedding plus, when labels are supplied, a label
// embedding added to it before injection).
class DenoiserUnet {
public:
    DenoiserUnet() = default;
    DenoiserUnet(int latent_dim, const std::vector<int>& widths, int time_dim,
                 Rng& rng);

    ad::Var forward(const ad::Var& x, long t, const std::vector<int>& labels) const;
    Mat forward_value(const Mat& x, long t, const std::vector<int>& labels) const;
    std::vector<ad::Var> parameters() const;
    int latent_dim() const { return latent_dim_; }

private:
    ad::Var conditioning(long t, const std::vector<int>& labels,
                         Eigen::Index batch) const;

    int latent_dim_ = 0;
    int time_dim_ = 0;
    nets::Dense in_;
    std::vector<nets::Dense> down_;
    std::vector<nets::Dense> up_;
    nets::Dense out_;
    nets::Dense time_in_;
    std::vector<nets::Dense> time_down_;
    std::vector<nets::Dense> time_up_;
    nets::Embedding label_;
};

struct LdmNets {
    AutoencodingNets vae;
    DenoiserUnet denoiser;
    blocks::DiffusionSchedule schedule;
};
LdmNets build_ldm(const GeneratorConfig& config, int feature_dim, Rng& rng);

// Ancestral reverse-diffusion walk over latent rows: starts from x (the
// step-T noise), applies the denoiser at t = T..1, and adds sqrt(beta_t)
// noise from rng at every step except the last. Returns the predicted clean
// latents, ready for the decoder.
Mat ldm_ancestral(const DenoiserUnet& denoiser,
                  const blocks::DiffusionSchedule& schedule, Mat x,
                  const std::vector<int>& labels, Rng& rng);

// ------------------------------------------------------------------- model

class TrainedGenerator {
public:
    struct State;

    TrainedGenerator() = default;
    explicit TrainedGenerator(std::shared_ptr<const State> state);

    bool trained() const { return state_ != nullptr; }
    const GeneratorConfig& config() const;
    const FeatureSchema& schema() const;
    int feature_dim() const;
    const TrainingTrace& trace() const;

    // n rows of class `class_label`, every coordinate in [0, 1], binary
    // schema columns exact {0, 1}. Deterministic in (seed, class_label).
    Mat sample(int n, int class_label, std::uint64_t seed) const;

    // Directory serialization: config.json + trace.json + parameters.bin.
    void save(const std::string& dir) const;
    static TrainedGenerator load(const std::string& dir);

private:
    const State& state() const;
    std::shared_ptr<const State> state_;
};

TrainedGenerator fit(const GeneratorConfig& config, const TabularDataset& train,
                     std::uint64_t seed, const FitHooks& hooks = {});

// Wraps a synthetic CSV as a pseudo-generator: sample(n, label) draws without
// replacement (per call) from the file's matching-label rows.
TrainedGenerator import_external_synthetic(const std::string& path,
                                           const FeatureSchema& schema);

} // namespace tabsynth::gen
