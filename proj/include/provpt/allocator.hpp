#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "provpt/nn.hpp"
#include "provpt/prompt.hpp"
#include "provpt/rng.hpp"

namespace provpt {

// State fed to the allocation policy: block-wise idleness sums, the pruned
// distribution's per-block counts (normalized by N), and a one-hot of the
// pruned prompt's source block. encoded = concat of the three, length 3L.
struct PolicyState {
    std::vector<double> block_scores;
    std::vector<double> block_counts;
    std::vector<double> pruned_onehot;
    std::vector<double> encoded;
};

PolicyState encode_state(const IdlenessReport& report, const Distribution& dist_pruned,
                         int source_block);

struct Transition {
    PolicyState state;
    int action = 0;  // target block, 1-based
    double log_prob = 0.0;
    double reward = 0.0;
    PolicyState next_state;
    double value_estimate = 0.0;
};

struct PpoConfig {
    double actor_lr = 0.0003;
    double critic_lr = 0.001;
    double discount = 1.0;
    double clip = 0.2;
    int hidden_units = 64;
    int hidden_layers = 2;
    int update_epochs = 10;
    int minibatch = 0;  // 0 = full transition buffer

    void validate() const;
};

// PPO-clip actor-critic over a discrete action space. Used for decomposed
// allocation (state 3L -> L actions), the naive joint variant (2L -> L^2) and
// the adding variant (L -> L). Action masks (0 valid / -inf invalid) are
// derived from the state by the caller and applied before the softmax.
class PpoAgent {
public:
    PpoAgent(int state_dim, int num_actions, PpoConfig cfg, Rng& init_rng);

    // Categorical sample from the actor's softmax; returns 0-based action and
    // its log-probability.
    std::pair<int, double> sample_action(const std::vector<double>& state, Rng& rng,
                                         const std::vector<double>* mask = nullptr) const;

    std::vector<double> action_probs(const std::vector<double>& state,
                                     const std::vector<double>* mask = nullptr) const;
    double value(const std::vector<double>& state) const;

    struct Step {
        std::vector<double> state;
        std::vector<double> next_state;
        std::vector<double> mask;  // empty = no mask
        int action = 0;            // 0-based
        double log_prob = 0.0;
        double reward = 0.0;
    };

    // One PPO update over the batch: single-step bootstrapped advantages
    // A = r + discount*V(s') - V(s) computed with the current critic, then
    // update_epochs clipped-surrogate passes for the actor and value
    // regression passes for the critic.
    void update(const std::vector<Step>& batch);

    int64_t param_count() const { return actor_.param_count() + critic_.param_count(); }
    int state_dim() const { return state_dim_; }
    int num_actions() const { return num_actions_; }
    const PpoConfig& config() const { return cfg_; }

    Mlp& actor() { return actor_; }
    Mlp& critic() { return critic_; }
    const Mlp& actor() const { return actor_; }
    const Mlp& critic() const { return critic_; }

private:
    int state_dim_;
    int num_actions_;
    PpoConfig cfg_;
    Mlp actor_;
    Mlp critic_;
    SgdOptimizer actor_opt_;
    SgdOptimizer critic_opt_;
};

// Spec'd entry point: PPO update from spec-level transitions.
void ppo_update(PpoAgent& agent, const std::vector<Transition>& transitions);

struct BanditConfig {
    double prior_mean = 0.0;
    double prior_std = 0.2;
    double obs_std = 0.1;
};

// Thompson sampling over L arms with a Gaussian unknown-mean, known-variance
// model; conjugate normal posterior per arm.
class GaussianBandit {
public:
    GaussianBandit(int arms, BanditConfig cfg);

    int sample(Rng& rng) const;  // 0-based arm
    void update(int arm, double reward);

    double posterior_mean(int arm) const;
    double posterior_std(int arm) const;
    int64_t pulls(int arm) const { return n_[static_cast<size_t>(arm)]; }

private:
    BanditConfig cfg_;
    std::vector<int64_t> n_;
    std::vector<double> sum_;
};

// Naive joint relocation (strategy with L^2 arrangements): the action picks
// (source block, target block); the pruned prompt is the highest-idleness
// prompt in the source block. State is [block_scores, counts/N], length 2L.
std::vector<double> encode_naive_state(const IdlenessReport& report, const Distribution& dist);
// Mask for the joint action head: -inf for source blocks with no prompts.
std::vector<double> naive_action_mask(const Distribution& dist);
// (source, target) from a 0-based joint action.
std::pair<int, int> naive_action_decode(int action, int num_blocks);

}  // namespace provpt
