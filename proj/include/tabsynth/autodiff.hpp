#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tabsynth/error.hpp"

namespace tabsynth::ad {

using Mat = Eigen::MatrixXd;

class Var;

// Reverse-mode tape node. The vjp returns one gradient Var per parent; those
// gradients are themselves built from tape ops, so gradients of gradients are
// available (needed by the critic gradient penalty).
struct Node {
    Mat value;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<std::vector<Var>(const Var& upstream, const Var& self)> vjp;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    bool defined() const { return node_ != nullptr; }
    const Mat& value() const { return node_->value; }
    Mat& mutable_value() { return node_->value; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double scalar() const;
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Leaves.
Var constant(Mat value);
Var constant(double value);
Var param(Mat value); // differentiable leaf

// Elementwise and structural ops.
Var add(const Var& a, const Var& b);
Var add_rowvec(const Var& a, const Var& b); // b is 1 x n, broadcast over rows
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var cmul(const Var& a, double c);
Var cadd(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sigmoid(const Var& a);
Var tanh_fn(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var exp_fn(const Var& a);
Var log_fn(const Var& a);
Var sqrt_fn(const Var& a);
Var square(const Var& a);
Var softplus(const Var& a);
Var softmax_rows(const Var& a);

// Reductions and shape ops.
Var sum(const Var& a);         // -> 1x1
Var mean(const Var& a);        // -> 1x1
Var row_sum(const Var& a);     // m x n -> m x 1
Var col_sum(const Var& a);     // m x n -> 1 x n
Var broadcast(const Var& a, Eigen::Index rows, Eigen::Index cols); // from 1x1
Var rep_cols(const Var& a, Eigen::Index n); // m x 1 -> m x n
Var rep_rows(const Var& a, Eigen::Index m); // 1 x n -> m x n
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, Eigen::Index j0, Eigen::Index j1);
Var gather_rows(const Var& a, std::vector<int> indices);
Var detach(const Var& a);

// Composite losses.
Var mse(const Var& pred, const Var& target);
Var bce_with_logits(const Var& logits, const Var& targets);

// Gradients of `root` (a 1x1 scalar) with respect to `wrt`. The returned Vars
// are themselves differentiable graph nodes. Vars in `wrt` that the root does
// not depend on get zero gradients.
std::vector<Var> backward(const Var& root, std::span<const Var> wrt);

} // namespace tabsynth::ad
