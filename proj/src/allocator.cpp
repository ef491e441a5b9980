#include "provpt/allocator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "provpt/autodiff.hpp"

namespace provpt {

void PpoConfig::validate() const {
    if (clip <= 0.0 || clip >= 1.0) throw std::invalid_argument("PpoConfig: clip must be in (0,1)");
    if (discount < 0.0 || discount > 1.0) throw std::invalid_argument("PpoConfig: discount must be in [0,1]");
    if (actor_lr <= 0.0 || critic_lr <= 0.0) throw std::invalid_argument("PpoConfig: learning rates must be > 0");
    if (hidden_units <= 0 || update_epochs <= 0) throw std::invalid_argument("PpoConfig: sizes must be positive");
}

PolicyState encode_state(const IdlenessReport& report, const Distribution& dist_pruned,
                         int source_block) {
    const int L = dist_pruned.num_blocks;
    if (static_cast<int>(report.per_block.size()) != L)
        throw std::invalid_argument("encode_state: report/block-count mismatch");
    if (source_block < 1 || source_block > L)
        throw std::invalid_argument("encode_state: source block out of range");
    PolicyState s;
    s.block_scores = report.per_block;
    s.block_counts.resize(static_cast<size_t>(L));
    const std::vector<int64_t> counts = dist_pruned.block_counts();
    const double n = static_cast<double>(dist_pruned.count());
    for (int i = 0; i < L; ++i)
        s.block_counts[static_cast<size_t>(i)] = n > 0 ? static_cast<double>(counts[static_cast<size_t>(i)]) / n : 0.0;
    s.pruned_onehot.assign(static_cast<size_t>(L), 0.0);
    s.pruned_onehot[static_cast<size_t>(source_block - 1)] = 1.0;
    s.encoded.reserve(static_cast<size_t>(3 * L));
    s.encoded.insert(s.encoded.end(), s.block_scores.begin(), s.block_scores.end());
    s.encoded.insert(s.encoded.end(), s.block_counts.begin(), s.block_counts.end());
    s.encoded.insert(s.encoded.end(), s.pruned_onehot.begin(), s.pruned_onehot.end());
    return s;
}

PpoAgent::PpoAgent(int state_dim, int num_actions, PpoConfig cfg, Rng& init_rng)
    : state_dim_(state_dim),
      num_actions_(num_actions),
      cfg_(cfg),
      actor_(Mlp::make(state_dim, cfg.hidden_units, num_actions, init_rng)),
      critic_(Mlp::make(state_dim, cfg.hidden_units, 1, init_rng)),
      actor_opt_(SgdConfig{cfg.actor_lr, 0.0, 0.0}),
      critic_opt_(SgdConfig{cfg.critic_lr, 0.0, 0.0}) {
    cfg_.validate();
    actor_.set_requires_grad(true);
    critic_.set_requires_grad(true);
}

std::vector<double> PpoAgent::action_probs(const std::vector<double>& state,
                                           const std::vector<double>* mask) const {
    if (static_cast<int>(state.size()) != state_dim_)
        throw std::invalid_argument("PpoAgent: state size mismatch");
    Tape tape;
    Var x = tape.constant({1, state_dim_}, state);
    Var logits = actor_.forward(tape, x);
    if (mask) {
        if (static_cast<int>(mask->size()) != num_actions_)
            throw std::invalid_argument("PpoAgent: mask size mismatch");
        logits = tape.add(logits, tape.constant({1, num_actions_}, *mask));
    }
    Var probs = tape.softmax(logits);
    return tape.value(probs);
}

double PpoAgent::value(const std::vector<double>& state) const {
    Tape tape;
    Var x = tape.constant({1, state_dim_}, state);
    Var v = critic_.forward(tape, x);
    return tape.value(v)[0];
}

std::pair<int, double> PpoAgent::sample_action(const std::vector<double>& state, Rng& rng,
                                               const std::vector<double>* mask) const {
    const std::vector<double> probs = action_probs(state, mask);
    const double u = rng.uniform();
    double acc = 0.0;
    int action = num_actions_ - 1;
    for (int a = 0; a < num_actions_; ++a) {
        acc += probs[static_cast<size_t>(a)];
        if (u < acc) {
            action = a;
            break;
        }
    }
    return {action, std::log(probs[static_cast<size_t>(action)])};
}

void PpoAgent::update(const std::vector<Step>& batch) {
    if (batch.empty()) throw std::invalid_argument("PpoAgent::update: empty batch");
    const int64_t n = static_cast<int64_t>(batch.size());

    // Advantages and critic targets with the current critic, frozen for all
    // update epochs.
    std::vector<double> adv(static_cast<size_t>(n));
    std::vector<double> target(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const Step& s = batch[static_cast<size_t>(i)];
        const double v = value(s.state);
        const double v2 = value(s.next_state);
        target[static_cast<size_t>(i)] = s.reward + cfg_.discount * v2;
        adv[static_cast<size_t>(i)] = target[static_cast<size_t>(i)] - v;
    }

    std::vector<double> states(static_cast<size_t>(n * state_dim_));
    for (int64_t i = 0; i < n; ++i)
        std::copy(batch[static_cast<size_t>(i)].state.begin(), batch[static_cast<size_t>(i)].state.end(),
                  states.begin() + i * state_dim_);

    for (int pass = 0; pass < cfg_.update_epochs; ++pass) {
        // Actor: clipped surrogate. The clip branch is selected from forward
        // values; a transition in the clipped-and-constant regime contributes
        // no gradient at all.
        {
            Tape tape;
            Mlp::Bound bound = actor_.bind(tape);
            Var x = tape.constant({n, state_dim_}, states);
            Var logits = actor_.forward(tape, bound, x);
            std::vector<Var> terms;
            for (int64_t i = 0; i < n; ++i) {
                const Step& s = batch[static_cast<size_t>(i)];
                Var row_logits = tape.slice(logits, 0, i, 1);
                Var row = s.mask.empty()
                              ? tape.softmax(row_logits)
                              : tape.softmax(tape.add(row_logits, tape.constant({1, num_actions_}, s.mask)));
                Var p_a = tape.reshape(tape.slice(row, 1, s.action, 1), {});
                const double pi_old = std::exp(s.log_prob);
                const double ratio_val = tape.value(p_a)[0] / pi_old;
                const double a_i = adv[static_cast<size_t>(i)];
                const double lo = 1.0 - cfg_.clip;
                const double hi = 1.0 + cfg_.clip;
                const double clipped_ratio = ratio_val < lo ? lo : (ratio_val > hi ? hi : ratio_val);
                const bool use_unclipped = ratio_val * a_i <= clipped_ratio * a_i;
                if (use_unclipped) {
                    // maximize ratio*A  ->  minimize -ratio*A
                    terms.push_back(tape.scale(p_a, -a_i / (pi_old * static_cast<double>(n))));
                }
                // else: constant w.r.t. theta, zero gradient contribution
            }
            if (!terms.empty()) {
                Var loss = terms[0];
                for (size_t i = 1; i < terms.size(); ++i) loss = tape.add(loss, terms[i]);
                tape.backward(loss);
                int idx = 0;
                static const char* names[6] = {"w1", "b1", "w2", "b2", "w3", "b3"};
                for (Var leaf : bound.leafs) {
                    actor_opt_.step(std::string("actor.") + names[idx], actor_.weights[static_cast<size_t>(idx)],
                                    tape.grad(leaf));
                    ++idx;
                }
            }
        }
        // Critic: regress V(s) onto frozen targets.
        {
            Tape tape;
            Mlp::Bound bound = critic_.bind(tape);
            Var x = tape.constant({n, state_dim_}, states);
            Var v = critic_.forward(tape, bound, x);  // [n, 1]
            std::vector<double> neg_t(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) neg_t[static_cast<size_t>(i)] = -target[static_cast<size_t>(i)];
            Var diff = tape.add(v, tape.constant({n, 1}, neg_t));
            Var loss = tape.mean(tape.mul(diff, diff));
            tape.backward(loss);
            int idx = 0;
            static const char* names[6] = {"w1", "b1", "w2", "b2", "w3", "b3"};
            for (Var leaf : bound.leafs) {
                critic_opt_.step(std::string("critic.") + names[idx], critic_.weights[static_cast<size_t>(idx)],
                                tape.grad(leaf));
                ++idx;
            }
        }
    }
}

void ppo_update(PpoAgent& agent, const std::vector<Transition>& transitions) {
    if (transitions.empty()) throw std::invalid_argument("ppo_update: empty batch");
    std::vector<PpoAgent::Step> steps;
    steps.reserve(transitions.size());
    for (const Transition& t : transitions) {
        PpoAgent::Step s;
        s.state = t.state.encoded;
        s.next_state = t.next_state.encoded;
        s.action = t.action - 1;
        s.log_prob = t.log_prob;
        s.reward = t.reward;
        steps.push_back(std::move(s));
    }
    agent.update(steps);
}

GaussianBandit::GaussianBandit(int arms, BanditConfig cfg) : cfg_(cfg) {
    if (arms <= 0) throw std::invalid_argument("GaussianBandit: need at least one arm");
    if (cfg_.prior_std <= 0.0 || cfg_.obs_std <= 0.0)
        throw std::invalid_argument("GaussianBandit: stddevs must be positive");
    n_.assign(static_cast<size_t>(arms), 0);
    sum_.assign(static_cast<size_t>(arms), 0.0);
}

double GaussianBandit::posterior_mean(int arm) const {
    const double tau2 = cfg_.prior_std * cfg_.prior_std;
    const double s2 = cfg_.obs_std * cfg_.obs_std;
    const double prec = 1.0 / tau2 + static_cast<double>(n_[static_cast<size_t>(arm)]) / s2;
    const double num = cfg_.prior_mean / tau2 + sum_[static_cast<size_t>(arm)] / s2;
    return num / prec;
}

double GaussianBandit::posterior_std(int arm) const {
    const double tau2 = cfg_.prior_std * cfg_.prior_std;
    const double s2 = cfg_.obs_std * cfg_.obs_std;
    const double prec = 1.0 / tau2 + static_cast<double>(n_[static_cast<size_t>(arm)]) / s2;
    return std::sqrt(1.0 / prec);
}

int GaussianBandit::sample(Rng& rng) const {
    int best = 0;
    double best_draw = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < static_cast<int>(n_.size()); ++a) {
        const double draw = rng.normal(posterior_mean(a), posterior_std(a));
        if (draw > best_draw) {
            best_draw = draw;
            best = a;
        }
    }
    return best;
}

void GaussianBandit::update(int arm, double reward) {
    if (arm < 0 || arm >= static_cast<int>(n_.size()))
        throw std::invalid_argument("GaussianBandit: arm out of range");
    n_[static_cast<size_t>(arm)]++;
    sum_[static_cast<size_t>(arm)] += reward;
}

std::vector<double> encode_naive_state(const IdlenessReport& report, const Distribution& dist) {
    const int L = dist.num_blocks;
    std::vector<double> s;
    s.reserve(static_cast<size_t>(2 * L));
    s.insert(s.end(), report.per_block.begin(), report.per_block.end());
    const std::vector<int64_t> counts = dist.block_counts();
    const double n = static_cast<double>(dist.count());
    for (int i = 0; i < L; ++i)
        s.push_back(n > 0 ? static_cast<double>(counts[static_cast<size_t>(i)]) / n : 0.0);
    return s;
}

std::vector<double> naive_action_mask(const Distribution& dist) {
    const int L = dist.num_blocks;
    const std::vector<int64_t> counts = dist.block_counts();
    std::vector<double> mask(static_cast<size_t>(L * L), 0.0);
    for (int src = 0; src < L; ++src)
        if (counts[static_cast<size_t>(src)] == 0)
            for (int tgt = 0; tgt < L; ++tgt) mask[static_cast<size_t>(src * L + tgt)] = -1e30;
    return mask;
}

std::pair<int, int> naive_action_decode(int action, int num_blocks) {
    return {action / num_blocks + 1, action % num_blocks + 1};
}

}  // namespace provpt

