#pragma once

#include <string>
#include <vector>

#include "tabsynth/autodiff.hpp"
#include "tabsynth/blocks.hpp"
#include "tabsynth/rng.hpp"

namespace tabsynth::nets {

using Mat = Eigen::MatrixXd;

enum class Activation { linear, relu, leaky_relu, tanh, sigmoid };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// One affine layer with a fixed activation. Weights are differentiable
// leaves; optimizers update them in place between graph builds.
struct Dense {
    ad::Var W; // in x out
    ad::Var b; // 1 x out
    Activation activation = Activation::linear;

    Dense() = default;
    Dense(int in, int out, Activation act, Rng& rng);
    ad::Var forward(const ad::Var& x) const;
};

// Feedforward stack: widths = {in, h1, ..., out}. Hidden layers share one
// activation; the output layer gets its own.
class Mlp {
public:
    Mlp() = default;
    Mlp(const std::vector<int>& widths, Activation hidden, Activation output,
        Rng& rng);

    ad::Var forward(const ad::Var& x) const;
    Mat forward_value(const Mat& x) const;
    std::vector<ad::Var> parameters() const;
    const std::vector<Dense>& layers() const { return layers_; }

private:
    std::vector<Dense> layers_;
};

// Lookup table mapping small nonnegative integer ids to learned rows.
struct Embedding {
    ad::Var table; // num_ids x dim

    Embedding() = default;
    Embedding(int num_ids, int dim, Rng& rng);
    ad::Var forward(const std::vector<int>& ids) const;
};

// Gradient-descent family configured by an OptimizerSpec. Holds slot state
// per parameter; parameters are identified positionally, so call step with
// the same parameter list every time.
class Optimizer {
public:
    explicit Optimizer(const blocks::OptimizerSpec& spec);

    void step(const std::vector<ad::Var>& params,
              const std::vector<ad::Var>& grads);
    long steps_taken() const { return t_; }

private:
    blocks::OptimizerSpec spec_;
    long t_ = 0;
    std::vector<Mat> m_;
    std::vector<Mat> v_;
};

// Flat serialization of parameter matrices (values only, shapes implied by
// the owning architecture).
std::vector<double> flatten(const std::vector<ad::Var>& params);
void unflatten(const std::vector<double>& data,
               const std::vector<ad::Var>& params);

} // namespace tabsynth::nets
