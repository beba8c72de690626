#include "tabsynth/nets.hpp"

#include <cmath>

namespace tabsynth::nets {

Activation activation_from_string(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "leaky_relu") return Activation::leaky_relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw Error(ErrorCode::UnknownKind, "unknown activation: " + name);
}

std::string to_string(Activation a) {
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    }
    return "linear";
}

namespace {

ad::Var apply_activation(const ad::Var& x, Activation a) {
    switch (a) {
    case Activation::linear: return x;
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x);
    case Activation::tanh: return ad::tanh_fn(x);
    case Activation::sigmoid: return ad::sigmoid(x);
    }
    return x;
}

} // namespace

Dense::Dense(int in, int out, Activation act, Rng& rng) : activation(act) {
    if (in < 1 || out < 1)
        throw Error(ErrorCode::ConfigInvalid, "layer widths must be positive");
    // Glorot-uniform initialization.
    double limit = std::sqrt(6.0 / double(in + out));
    Mat w(in, out);
    for (int i = 0; i < in; ++i)
        for (int j = 0; j < out; ++j)
            w(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    W = ad::param(w);
    b = ad::param(Mat::Zero(1, out));
}

ad::Var Dense::forward(const ad::Var& x) const {
    return apply_activation(ad::add_rowvec(ad::matmul(x, W), b), activation);
}

Mlp::Mlp(const std::vector<int>& widths, Activation hidden, Activation output,
         Rng& rng) {
    if (widths.size() < 2)
        throw Error(ErrorCode::ConfigInvalid,
                    "network needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        bool last = i + 2 == widths.size();
        layers_.emplace_back(widths[i], widths[i + 1], last ? output : hidden,
                             rng);
    }
}

ad::Var Mlp::forward(const ad::Var& x) const {
    if (layers_.empty())
        throw Error(ErrorCode::UntrainedModel, "network has no layers");
    ad::Var h = x;
    for (const auto& layer : layers_) h = layer.forward(h);
    return h;
}

Mat Mlp::forward_value(const Mat& x) const {
    return forward(ad::constant(x)).value();
}

std::vector<ad::Var> Mlp::parameters() const {
    std::vector<ad::Var> out;
    out.reserve(layers_.size() * 2);
    for (const auto& layer : layers_) {
        out.push_back(layer.W);
        out.push_back(layer.b);
    }
    return out;
}

Embedding::Embedding(int num_ids, int dim, Rng& rng) {
    if (num_ids < 1 || dim < 1)
        throw Error(ErrorCode::ConfigInvalid,
                    "embedding shape must be positive");
    // Unit-scale rows so an embedded id carries as much signal as a
    // standard-normal latent coordinate.
    table = ad::param(rng.normal_matrix(num_ids, dim));
}

ad::Var Embedding::forward(const std::vector<int>& ids) const {
    for (int id : ids)
        if (id < 0 || id >= table.rows())
            throw Error(ErrorCode::DimensionMismatch,
                        "embedding id " + std::to_string(id) + " out of range");
    return ad::gather_rows(table, ids);
}

Optimizer::Optimizer(const blocks::OptimizerSpec& spec) : spec_(spec) {
    spec_.validate();
}

void Optimizer::step(const std::vector<ad::Var>& params,
                     const std::vector<ad::Var>& grads) {
    if (params.size() != grads.size())
        throw Error(ErrorCode::LengthMismatch,
                    "one gradient required per parameter");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = Mat::Zero(params[i].rows(), params[i].cols());
            v_[i] = Mat::Zero(params[i].rows(), params[i].cols());
        }
    }
    ++t_;
    const double lr = spec_.learning_rate;
    const double b1 = spec_.beta1, b2 = spec_.beta2, eps = spec_.epsilon;

    for (std::size_t i = 0; i < params.size(); ++i) {
        const Mat& g = grads[i].value();
        Mat& p = const_cast<ad::Var&>(params[i]).mutable_value();
        if (g.rows() != p.rows() || g.cols() != p.cols())
            throw Error(ErrorCode::DimensionMismatch,
                        "gradient shape mismatch at parameter " +
                            std::to_string(i));
        switch (spec_.kind) {
        case blocks::OptimizerKind::sgd: {
            // beta1 doubles as the classical momentum coefficient.
            m_[i] = b1 * m_[i] + g;
            p -= lr * m_[i];
            break;
        }
        case blocks::OptimizerKind::adam: {
            m_[i] = b1 * m_[i] + (1 - b1) * g;
            v_[i] = b2 * v_[i].array().matrix() +
                    (1 - b2) * g.array().square().matrix();
            double c1 = 1 - std::pow(b1, double(t_));
            double c2 = 1 - std::pow(b2, double(t_));
            Mat mhat = m_[i] / c1;
            Mat vhat = v_[i] / c2;
            p.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
            break;
        }
        case blocks::OptimizerKind::nadam: {
            m_[i] = b1 * m_[i] + (1 - b1) * g;
            v_[i] = b2 * v_[i].array().matrix() +
                    (1 - b2) * g.array().square().matrix();
            double c1 = 1 - std::pow(b1, double(t_));
            double c2 = 1 - std::pow(b2, double(t_));
            Mat mhat = m_[i] / c1;
            Mat vhat = v_[i] / c2;
            // Nesterov-style lookahead on the first moment.
            Mat lookahead = b1 * mhat + ((1 - b1) / c1) * g;
            p.array() -= lr * lookahead.array() / (vhat.array().sqrt() + eps);
            break;
        }
        }
    }
}

std::vector<double> flatten(const std::vector<ad::Var>& params) {
    std::vector<double> out;
    for (const auto& p : params) {
        const Mat& m = p.value();
        out.insert(out.end(), m.data(), m.data() + m.size());
    }
    return out;
}

void unflatten(const std::vector<double>& data,
               const std::vector<ad::Var>& params) {
    std::size_t offset = 0;
    for (const auto& p : params) {
        Mat& m = const_cast<ad::Var&>(p).mutable_value();
        if (offset + std::size_t(m.size()) > data.size())
            throw Error(ErrorCode::SchemaMismatch,
                        "parameter blob shorter than the architecture");
        std::copy(data.begin() + long(offset),
                  data.begin() + long(offset) + m.size(), m.data());
        offset += std::size_t(m.size());
    }
    if (offset != data.size())
        throw Error(ErrorCode::SchemaMismatch,
                    "parameter blob longer than the architecture");
}

} // namespace tabsynth::nets
