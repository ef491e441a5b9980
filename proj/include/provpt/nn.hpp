#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "provpt/autodiff.hpp"
#include "provpt/rng.hpp"
#include "provpt/tensor.hpp"

namespace provpt {

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

// SGD with classic momentum: v <- momentum*v + (g + wd*p); p <- p - lr*v.
// Velocity buffers are keyed by parameter name and persist across steps.
class SgdOptimizer {
public:
    explicit SgdOptimizer(SgdConfig cfg);

    void step(const std::string& name, Tensor& param, const std::vector<double>& grad);

    // Drop the velocity buffer (used when a prompt is relocated and its stale
    // momentum must not carry over).
    void reset(const std::string& name);
    // Zero one row of a [rows, width] parameter's velocity buffer.
    void reset_row(const std::string& name, int64_t row, int64_t width);

    const SgdConfig& config() const { return cfg_; }

private:
    SgdConfig cfg_;
    std::unordered_map<std::string, std::vector<double>> velocity_;
};

// Two-hidden-layer perceptron with tanh activations; the policy/value nets.
struct Mlp {
    int in_dim = 0;
    int hidden = 0;
    int out_dim = 0;
    std::vector<Tensor> weights;  // W1,b1,W2,b2,W3,b3

    // Leaf handles for one tape, so callers can read weight gradients back.
    struct Bound {
        std::vector<Var> leafs;
    };

    static Mlp make(int in_dim, int hidden, int out_dim, Rng& rng);

    Bound bind(Tape& tape) const;
    // x: [rows, in_dim] -> [rows, out_dim]
    Var forward(Tape& tape, const Bound& b, Var x) const;
    Var forward(Tape& tape, Var x) const;  // convenience when grads are not needed

    int64_t param_count() const;
    void set_requires_grad(bool rg);
    // Visit (name, tensor) pairs; names are stable for checkpointing.
    template <typename Fn>
    void for_each_named(const std::string& prefix, Fn fn) {
        static const char* names[6] = {"w1", "b1", "w2", "b2", "w3", "b3"};
        for (size_t i = 0; i < weights.size(); ++i) fn(prefix + "." + names[i], weights[i]);
    }
    template <typename Fn>
    void for_each_named(const std::string& prefix, Fn fn) const {
        static const char* names[6] = {"w1", "b1", "w2", "b2", "w3", "b3"};
        for (size_t i = 0; i < weights.size(); ++i) fn(prefix + "." + names[i], weights[i]);
    }
};

// Uniform in [-r, r] with r = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(Tensor& t, int64_t fan_in, int64_t fan_out, Rng& rng);

}  // namespace provpt
