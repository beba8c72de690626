#include "tabsynth/autodiff.hpp"

#include <cmath>
#include <unordered_map>

namespace tabsynth::ad {

namespace {

Var make_node(Mat value, std::vector<Var> parents,
              std::function<std::vector<Var>(const Var&, const Var&)> vjp) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->parents = std::move(parents);
    node->requires_grad = false;
    for (const auto& p : node->parents) node->requires_grad |= p.requires_grad();
    if (node->requires_grad) node->vjp = std::move(vjp);
    return Var(std::move(node));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorCode::DimensionMismatch, std::string(op) + ": shapes differ");
}

} // namespace

double Var::scalar() const {
    if (rows() != 1 || cols() != 1)
        throw Error(ErrorCode::DimensionMismatch, "scalar() on non-1x1 value");
    return node_->value(0, 0);
}

Var constant(Mat value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = false;
    return Var(std::move(node));
}

Var constant(double value) {
    Mat m(1, 1);
    m(0, 0) = value;
    return constant(std::move(m));
}

Var param(Mat value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make_node(a.value() + b.value(), {a, b},
                     [](const Var& g, const Var&) { return std::vector<Var>{g, g}; });
}

Var add_rowvec(const Var& a, const Var& b) {
    if (b.rows() != 1 || b.cols() != a.cols())
        throw Error(ErrorCode::DimensionMismatch, "add_rowvec: bias shape");
    Mat out = a.value();
    out.rowwise() += b.value().row(0);
    return make_node(std::move(out), {a, b},
                     [](const Var& g, const Var&) { return std::vector<Var>{g, col_sum(g)}; });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make_node(a.value() - b.value(), {a, b},
                     [](const Var& g, const Var&) { return std::vector<Var>{g, neg(g)}; });
}

Var neg(const Var& a) {
    return make_node(-a.value(), {a},
                     [](const Var& g, const Var&) { return std::vector<Var>{neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make_node(a.value().cwiseProduct(b.value()), {a, b},
                     [a, b](const Var& g, const Var&) {
                         return std::vector<Var>{mul(g, b), mul(g, a)};
                     });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    return make_node(a.value().cwiseQuotient(b.value()), {a, b},
                     [a, b](const Var& g, const Var&) {
                         return std::vector<Var>{div(g, b), neg(div(mul(g, a), mul(b, b)))};
                     });
}

Var cmul(const Var& a, double c) {
    return make_node(a.value() * c, {a},
                     [c](const Var& g, const Var&) { return std::vector<Var>{cmul(g, c)}; });
}

Var cadd(const Var& a, double c) {
    return make_node(a.value().array() + c, {a},
                     [](const Var& g, const Var&) { return std::vector<Var>{g}; });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows())
        throw Error(ErrorCode::DimensionMismatch, "matmul: inner dimensions differ");
    return make_node(a.value() * b.value(), {a, b},
                     [a, b](const Var& g, const Var&) {
                         return std::vector<Var>{matmul(g, transpose(b)), matmul(transpose(a), g)};
                     });
}

Var transpose(const Var& a) {
    return make_node(a.value().transpose(), {a},
                     [](const Var& g, const Var&) { return std::vector<Var>{transpose(g)}; });
}

Var sigmoid(const Var& a) {
    Mat out = a.value().unaryExpr([](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    return make_node(std::move(out), {a}, [](const Var& g, const Var& self) {
        Var one_minus = cadd(neg(self), 1.0);
        return std::vector<Var>{mul(g, mul(self, one_minus))};
    });
}

Var tanh_fn(const Var& a) {
    Mat out = a.value().array().tanh();
    return make_node(std::move(out), {a}, [](const Var& g, const Var& self) {
        return std::vector<Var>{mul(g, cadd(neg(mul(self, self)), 1.0))};
    });
}

Var relu(const Var& a) {
    Mat mask = (a.value().array() > 0.0).cast<double>();
    Mat out = a.value().cwiseProduct(mask);
    Var mask_const = constant(std::move(mask));
    return make_node(std::move(out), {a}, [mask_const](const Var& g, const Var&) {
        return std::vector<Var>{mul(g, mask_const)};
    });
}

Var leaky_relu(const Var& a, double slope) {
    Mat mask = a.value().unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    Mat out = a.value().cwiseProduct(mask);
    Var mask_const = constant(std::move(mask));
    return make_node(std::move(out), {a}, [mask_const](const Var& g, const Var&) {
        return std::vector<Var>{mul(g, mask_const)};
    });
}

Var exp_fn(const Var& a) {
    Mat out = a.value().array().exp();
    return make_node(std::move(out), {a}, [](const Var& g, const Var& self) {
        return std::vector<Var>{mul(g, self)};
    });
}

Var log_fn(const Var& a) {
    Mat out = a.value().array().log();
    return make_node(std::move(out), {a}, [a](const Var& g, const Var&) {
        return std::vector<Var>{div(g, a)};
    });
}

Var sqrt_fn(const Var& a) {
    Mat out = a.value().array().sqrt();
    return make_node(std::move(out), {a}, [](const Var& g, const Var& self) {
        return std::vector<Var>{div(g, cmul(self, 2.0))};
    });
}

Var square(const Var& a) {
    Mat out = a.value().array().square();
    return make_node(std::move(out), {a}, [a](const Var& g, const Var&) {
        return std::vector<Var>{cmul(mul(g, a), 2.0)};
    });
}

Var softplus(const Var& a) {
    Mat out = a.value().unaryExpr([](double x) {
        return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    });
    return make_node(std::move(out), {a}, [a](const Var& g, const Var&) {
        return std::vector<Var>{mul(g, sigmoid(a))};
    });
}

Var softmax_rows(const Var& a) {
    Mat out(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double m = a.value().row(i).maxCoeff();
        Eigen::ArrayXd e = (a.value().row(i).array() - m).exp();
        out.row(i) = e / e.sum();
    }
    return make_node(std::move(out), {a}, [](const Var& g, const Var& self) {
        Var gs = mul(g, self);
        Var inner = sub(g, rep_cols(row_sum(gs), self.cols()));
        return std::vector<Var>{mul(self, inner)};
    });
}

Var sum(const Var& a) {
    Mat out(1, 1);
    out(0, 0) = a.value().sum();
    const Eigen::Index r = a.rows(), c = a.cols();
    return make_node(std::move(out), {a}, [r, c](const Var& g, const Var&) {
        return std::vector<Var>{broadcast(g, r, c)};
    });
}

Var mean(const Var& a) {
    Mat out(1, 1);
    out(0, 0) = a.value().mean();
    const Eigen::Index r = a.rows(), c = a.cols();
    const double scale = 1.0 / static_cast<double>(r * c);
    return make_node(std::move(out), {a}, [r, c, scale](const Var& g, const Var&) {
        return std::vector<Var>{cmul(broadcast(g, r, c), scale)};
    });
}

Var row_sum(const Var& a) {
    Mat out = a.value().rowwise().sum();
    const Eigen::Index n = a.cols();
    return make_node(std::move(out), {a}, [n](const Var& g, const Var&) {
        return std::vector<Var>{rep_cols(g, n)};
    });
}

Var col_sum(const Var& a) {
    Mat out = a.value().colwise().sum();
    const Eigen::Index m = a.rows();
    return make_node(std::move(out), {a}, [m](const Var& g, const Var&) {
        return std::vector<Var>{rep_rows(g, m)};
    });
}

Var broadcast(const Var& a, Eigen::Index rows, Eigen::Index cols) {
    if (a.rows() != 1 || a.cols() != 1)
        throw Error(ErrorCode::DimensionMismatch, "broadcast expects 1x1");
    Mat out = Mat::Constant(rows, cols, a.value()(0, 0));
    return make_node(std::move(out), {a}, [](const Var& g, const Var&) {
        return std::vector<Var>{sum(g)};
    });
}

Var rep_cols(const Var& a, Eigen::Index n) {
    if (a.cols() != 1) throw Error(ErrorCode::DimensionMismatch, "rep_cols expects m x 1");
    Mat out = a.value().replicate(1, n);
    return make_node(std::move(out), {a}, [](const Var& g, const Var&) {
        return std::vector<Var>{row_sum(g)};
    });
}

Var rep_rows(const Var& a, Eigen::Index m) {
    if (a.rows() != 1) throw Error(ErrorCode::DimensionMismatch, "rep_rows expects 1 x n");
    Mat out = a.value().replicate(m, 1);
    return make_node(std::move(out), {a}, [](const Var& g, const Var&) {
        return std::vector<Var>{col_sum(g)};
    });
}

Var concat_cols(const Var& a, const Var& b) {
    if (a.rows() != b.rows())
        throw Error(ErrorCode::DimensionMismatch, "concat_cols: row counts differ");
    Mat out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const Eigen::Index ca = a.cols(), cb = b.cols();
    return make_node(std::move(out), {a, b}, [ca, cb](const Var& g, const Var&) {
        return std::vector<Var>{slice_cols(g, 0, ca), slice_cols(g, ca, ca + cb)};
    });
}

namespace {
// Zero-pads a block of columns back into a wider matrix (adjoint of slice).
Var pad_cols(const Var& a, Eigen::Index j0, Eigen::Index total) {
    Mat out = Mat::Zero(a.rows(), total);
    out.middleCols(j0, a.cols()) = a.value();
    const Eigen::Index w = a.cols();
    return make_node(std::move(out), {a}, [j0, w](const Var& g, const Var&) {
        return std::vector<Var>{slice_cols(g, j0, j0 + w)};
    });
}
} // namespace

Var slice_cols(const Var& a, Eigen::Index j0, Eigen::Index j1) {
    if (j0 < 0 || j1 > a.cols() || j0 >= j1)
        throw Error(ErrorCode::DimensionMismatch, "slice_cols: bad range");
    Mat out = a.value().middleCols(j0, j1 - j0);
    const Eigen::Index total = a.cols();
    return make_node(std::move(out), {a}, [j0, total](const Var& g, const Var& self) {
        (void)self;
        return std::vector<Var>{pad_cols(g, j0, total)};
    });
}

namespace {
Var scatter_rows(const Var& a, const std::vector<int>& indices, Eigen::Index total_rows) {
    Mat out = Mat::Zero(total_rows, a.cols());
    for (std::size_t i = 0; i < indices.size(); ++i)
        out.row(indices[i]) += a.value().row(static_cast<Eigen::Index>(i));
    return make_node(std::move(out), {a}, [indices](const Var& g, const Var&) {
        return std::vector<Var>{gather_rows(g, indices)};
    });
}
} // namespace

Var gather_rows(const Var& a, std::vector<int> indices) {
    Mat out(static_cast<Eigen::Index>(indices.size()), a.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= a.rows())
            throw Error(ErrorCode::DimensionMismatch, "gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(indices[i]);
    }
    const Eigen::Index total = a.rows();
    return make_node(std::move(out), {a}, [indices, total](const Var& g, const Var&) {
        return std::vector<Var>{scatter_rows(g, indices, total)};
    });
}

Var detach(const Var& a) { return constant(a.value()); }

Var mse(const Var& pred, const Var& target) {
    return mean(square(sub(pred, target)));
}

Var bce_with_logits(const Var& logits, const Var& targets) {
    return mean(sub(softplus(logits), mul(targets, logits)));
}

std::vector<Var> backward(const Var& root, std::span<const Var> wrt) {
    if (!root.defined()) throw Error(ErrorCode::NonFiniteInput, "backward on undefined var");
    if (root.rows() != 1 || root.cols() != 1)
        throw Error(ErrorCode::DimensionMismatch, "backward expects a scalar root");

    // Topological order over the requires_grad subgraph (iterative DFS; the
    // graph is a DAG by construction).
    std::vector<Var> topo;
    std::unordered_map<Node*, bool> done;
    std::vector<std::pair<Var, std::size_t>> stack;
    if (root.requires_grad()) stack.push_back({root, 0});
    while (!stack.empty()) {
        Var v = stack.back().first;
        std::size_t next = stack.back().second;
        Node* n = v.node().get();
        if (done.contains(n)) {
            stack.pop_back();
            continue;
        }
        bool descended = false;
        while (next < n->parents.size()) {
            const Var& p = n->parents[next];
            ++next;
            if (p.requires_grad() && !done.contains(p.node().get())) {
                stack.back().second = next;
                stack.push_back({p, 0});
                descended = true;
                break;
            }
        }
        if (!descended) {
            done[n] = true;
            topo.push_back(v);
            stack.pop_back();
        }
    }

    std::unordered_map<Node*, Var> grads;
    if (root.requires_grad()) grads[root.node().get()] = constant(Mat::Ones(1, 1));

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const Var& v = *it;
        Node* n = v.node().get();
        auto git = grads.find(n);
        if (git == grads.end()) continue;
        const Var g = git->second;
        if (!n->vjp) continue; // leaf
        std::vector<Var> contribs = n->vjp(g, v);
        if (contribs.size() != n->parents.size())
            throw Error(ErrorCode::DimensionMismatch, "vjp arity mismatch");
        for (std::size_t i = 0; i < contribs.size(); ++i) {
            const Var& p = n->parents[i];
            if (!p.requires_grad() || !contribs[i].defined()) continue;
            Node* pn = p.node().get();
            auto pit = grads.find(pn);
            if (pit == grads.end())
                grads[pn] = contribs[i];
            else
                pit->second = add(pit->second, contribs[i]);
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto it = grads.find(w.node().get());
        if (it != grads.end())
            out.push_back(it->second);
        else
            out.push_back(constant(Mat::Zero(w.rows(), w.cols())));
    }
    return out;
}

} // namespace tabsynth::ad
