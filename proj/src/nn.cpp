#include "provpt/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace provpt {

SgdOptimizer::SgdOptimizer(SgdConfig cfg) : cfg_(cfg) {
    if (cfg_.learning_rate <= 0.0) throw std::invalid_argument("SgdConfig: learning_rate must be > 0");
    if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0) throw std::invalid_argument("SgdConfig: momentum must be in [0,1)");
    if (cfg_.weight_decay < 0.0) throw std::invalid_argument("SgdConfig: weight_decay must be >= 0");
}

void SgdOptimizer::step(const std::string& name, Tensor& param, const std::vector<double>& grad) {
    if (grad.size() != param.values.size())
        throw std::invalid_argument("SgdOptimizer::step: grad/param size mismatch for " + name);
    const double lr = cfg_.learning_rate;
    const double wd = cfg_.weight_decay;
    if (cfg_.momentum == 0.0 && wd == 0.0) {
        for (size_t i = 0; i < grad.size(); ++i) param.values[i] -= lr * grad[i];
        return;
    }
    if (cfg_.momentum == 0.0) {
        for (size_t i = 0; i < grad.size(); ++i)
            param.values[i] -= lr * (grad[i] + wd * param.values[i]);
        return;
    }
    std::vector<double>& v = velocity_[name];
    if (v.size() != grad.size()) v.assign(grad.size(), 0.0);
    for (size_t i = 0; i < grad.size(); ++i) {
        const double g = grad[i] + wd * param.values[i];
        v[i] = cfg_.momentum * v[i] + g;
        param.values[i] -= lr * v[i];
    }
}

void SgdOptimizer::reset(const std::string& name) { velocity_.erase(name); }

void SgdOptimizer::reset_row(const std::string& name, int64_t row, int64_t width) {
    auto it = velocity_.find(name);
    if (it == velocity_.end()) return;
    std::vector<double>& v = it->second;
    const size_t off = static_cast<size_t>(row * width);
    if (off + static_cast<size_t>(width) > v.size())
        throw std::invalid_argument("SgdOptimizer::reset_row: row out of range for " + name);
    for (int64_t j = 0; j < width; ++j) v[off + static_cast<size_t>(j)] = 0.0;
}

void xavier_uniform(Tensor& t, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.values) v = rng.uniform(-r, r);
}

Mlp Mlp::make(int in_dim, int hidden, int out_dim, Rng& rng) {
    Mlp m;
    m.in_dim = in_dim;
    m.hidden = hidden;
    m.out_dim = out_dim;
    m.weights.resize(6);
    m.weights[0] = Tensor({in_dim, hidden}, 0.0, true);
    m.weights[1] = Tensor({hidden}, 0.0, true);
    m.weights[2] = Tensor({hidden, hidden}, 0.0, true);
    m.weights[3] = Tensor({hidden}, 0.0, true);
    m.weights[4] = Tensor({hidden, out_dim}, 0.0, true);
    m.weights[5] = Tensor({out_dim}, 0.0, true);
    xavier_uniform(m.weights[0], in_dim, hidden, rng);
    xavier_uniform(m.weights[2], hidden, hidden, rng);
    xavier_uniform(m.weights[4], hidden, out_dim, rng);
    return m;
}

Mlp::Bound Mlp::bind(Tape& tape) const {
    Bound b;
    b.leafs.reserve(weights.size());
    for (const Tensor& t : weights) b.leafs.push_back(tape.leaf(t));
    return b;
}

Var Mlp::forward(Tape& tape, const Bound& b, Var x) const {
    Var h1 = tape.tanh(tape.add_rowvec(tape.matmul(x, b.leafs[0]), b.leafs[1]));
    Var h2 = tape.tanh(tape.add_rowvec(tape.matmul(h1, b.leafs[2]), b.leafs[3]));
    return tape.add_rowvec(tape.matmul(h2, b.leafs[4]), b.leafs[5]);
}

Var Mlp::forward(Tape& tape, Var x) const {
    Bound b = bind(tape);
    return forward(tape, b, x);
}

int64_t Mlp::param_count() const {
    int64_t n = 0;
    for (const Tensor& t : weights) n += t.numel();
    return n;
}

void Mlp::set_requires_grad(bool rg) {
    for (Tensor& t : weights) t.requires_grad = rg;
}

}  // namespace provpt
