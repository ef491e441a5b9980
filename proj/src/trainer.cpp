#include "provpt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace provpt {

namespace {

const std::vector<std::string> kStrategyNames = {
    "provpt", "prune_only", "random_prune", "bandit_alloc",
    "naive_rl", "adding", "vpt_deep", "vpt_shallow"};

class PhaseTimer {
public:
    PhaseTimer(std::map<std::string, double>& sink, const char* name)
        : sink_(sink), name_(name), start_(std::chrono::steady_clock::now()) {}
    ~PhaseTimer() {
        const auto end = std::chrono::steady_clock::now();
        sink_[name_] += std::chrono::duration<double>(end - start_).count();
    }

private:
    std::map<std::string, double>& sink_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace

Strategy parse_strategy(const std::string& s) {
    for (size_t i = 0; i < kStrategyNames.size(); ++i)
        if (kStrategyNames[i] == s) return static_cast<Strategy>(i);
    throw std::invalid_argument("unknown strategy: " + s);
}

std::string strategy_name(Strategy s) { return kStrategyNames[static_cast<size_t>(s)]; }

const std::vector<std::string>& strategy_names() { return kStrategyNames; }

void TrainConfig::validate() const {
    if (total_epochs <= 0 || batch_size <= 0) throw std::invalid_argument("TrainConfig: epochs/batch must be positive");
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (prompts_total < 0) throw std::invalid_argument("TrainConfig: prompts_total must be >= 0");
    if (prune_floor < 0.0 || prune_floor > 1.0) throw std::invalid_argument("TrainConfig: prune_floor in [0,1]");
    if (!initial_distribution.empty() &&
        static_cast<int>(initial_distribution.size()) != prompts_total)
        throw std::invalid_argument("TrainConfig: initial_distribution size must equal prompts_total");
    ppo.validate();
}

std::map<std::string, std::string> TrainConfig::snapshot() const {
    std::map<std::string, std::string> m;
    m["total_epochs"] = std::to_string(total_epochs);
    m["batch_size"] = std::to_string(batch_size);
    m["learning_rate"] = format_g9(learning_rate);
    m["momentum"] = format_g9(momentum);
    m["weight_decay"] = format_g9(weight_decay);
    m["seed"] = std::to_string(seed);
    m["strategy"] = strategy_name(strategy);
    m["prompts_total"] = std::to_string(prompts_total);
    m["drop_rate"] = format_g9(drop_rate);
    m["rewind_momentum"] = rewind_momentum ? "1" : "0";
    m["prune_floor"] = format_g9(prune_floor);
    m["adding_initial"] = std::to_string(adding_initial);
    m["probe_batch_size"] = std::to_string(probe_batch_size);
    m["train_head"] = train_head ? "1" : "0";
    m["normalization"] = normalization;
    m["ppo.actor_lr"] = format_g9(ppo.actor_lr);
    m["ppo.critic_lr"] = format_g9(ppo.critic_lr);
    m["ppo.discount"] = format_g9(ppo.discount);
    m["ppo.clip"] = format_g9(ppo.clip);
    m["ppo.update_epochs"] = std::to_string(ppo.update_epochs);
    return m;
}

Trainer::Trainer(const VitModel& backbone, const Dataset& dataset, TrainConfig cfg)
    : model_(backbone),
      data_(dataset),
      cfg_(cfg),
      opt_(SgdConfig{cfg.learning_rate, cfg.momentum, cfg.weight_decay}),
      rng_(cfg.seed),
      action_rng_(rng_.stream("actions")),
      shuffle_rng_(rng_.stream("shuffle")),
      dropout_rng_(rng_.stream("dropout")),
      fresh_rng_(rng_.stream("fresh-prompts")) {
    cfg_.validate();
    model_.cfg.drop_rate = cfg_.drop_rate;
    model_.w.freeze_backbone();
    if (!cfg_.train_head) {
        model_.w.head_w.requires_grad = false;
        model_.w.head_b.requires_grad = false;
    }
    Rng hrng = rng_.stream("head");
    xavier_uniform(model_.w.head_w, model_.cfg.embed_dim, model_.cfg.num_classes, hrng);
    model_.w.head_b.fill(0.0);

    const int L = model_.cfg.num_blocks;
    prompts_ = PromptSet(cfg_.prompts_total, model_.cfg.embed_dim);
    Rng prng = rng_.stream("prompts");
    prompts_.init_uniform(prng);

    if (cfg_.strategy == Strategy::vpt_shallow) {
        dist_ = Distribution(cfg_.prompts_total, L);
        for (int& a : dist_.assignments) a = 1;
    } else if (!cfg_.initial_distribution.empty()) {
        dist_ = Distribution(cfg_.prompts_total, L);
        dist_.assignments = cfg_.initial_distribution;
        dist_.validate();
    } else if (cfg_.strategy == Strategy::adding) {
        const int initial = cfg_.adding_initial > 0 ? cfg_.adding_initial : cfg_.prompts_total / 2;
        if (initial > cfg_.prompts_total)
            throw std::invalid_argument("TrainConfig: adding_initial exceeds prompts_total");
        dist_ = Distribution(cfg_.prompts_total, L);
        for (int k = 0; k < initial; ++k) dist_.assignments[static_cast<size_t>(k)] = k % L + 1;
        // reservoir prompts start zeroed; they are freshly initialized when added
        for (int k = initial; k < cfg_.prompts_total; ++k)
            for (int64_t j = 0; j < prompts_.dim(); ++j) prompts_.row(k)[j] = 0.0;
    } else {
        dist_ = Distribution::uniform(cfg_.prompts_total, L);
    }

    Rng policy_rng = rng_.stream("policy");
    switch (cfg_.strategy) {
        case Strategy::provpt:
        case Strategy::random_prune:
            ppo_ = std::make_unique<PpoAgent>(3 * L, L, cfg_.ppo, policy_rng);
            break;
        case Strategy::bandit_alloc:
            bandit_ = std::make_unique<GaussianBandit>(L, cfg_.bandit);
            break;
        case Strategy::naive_rl:
            naive_ppo_ = std::make_unique<PpoAgent>(2 * L, L * L, cfg_.ppo, policy_rng);
            break;
        case Strategy::adding:
            adding_ppo_ = std::make_unique<PpoAgent>(L, L, cfg_.ppo, policy_rng);
            break;
        default:
            break;
    }

    train_idx_ = data_.indices_of(kSplitTrain);
    test_idx_ = data_.indices_of(kSplitTest);
    if (train_idx_.empty()) throw std::invalid_argument("Trainer: dataset has no train split");

    // Fixed probe batch: one seeded draw from the train split, reused for
    // every loss_before/loss_after evaluation so rewards are comparable
    // across epochs.
    std::vector<int64_t> shuffled = train_idx_;
    Rng probe_rng = rng_.stream("probe");
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[static_cast<size_t>(probe_rng.index(static_cast<int64_t>(i)))]);
    const size_t probe_n = std::min<size_t>(static_cast<size_t>(cfg_.probe_batch_size), shuffled.size());
    shuffled.resize(probe_n);
    std::sort(shuffled.begin(), shuffled.end());
    probe_ = data_.make_batch(shuffled);
}

double Trainer::probe_loss() const {
    if (cfg_.strategy == Strategy::vpt_shallow) {
        Tape tape;
        VitForward f = vit_forward_shallow(tape, model_, probe_.images, prompts_);
        Var loss = tape.cross_entropy_logits(f.logits, probe_.labels);
        return tape.forward_scalar(loss);
    }
    return eval_loss(model_, prompts_, dist_, probe_);
}

double Trainer::test_accuracy() const {
    if (test_idx_.empty()) return 0.0;
    const size_t chunk = 128;
    int64_t hits = 0;
    for (size_t off = 0; off < test_idx_.size(); off += chunk) {
        std::vector<int64_t> idx(test_idx_.begin() + static_cast<int64_t>(off),
                                 test_idx_.begin() + static_cast<int64_t>(std::min(off + chunk, test_idx_.size())));
        Batch b = data_.make_batch(idx);
        Tape tape;
        VitForward f = cfg_.strategy == Strategy::vpt_shallow
                           ? vit_forward_shallow(tape, model_, b.images, prompts_)
                           : vit_forward(tape, model_, b.images, prompts_, dist_);
        const std::vector<double>& logits = tape.value(f.logits);
        const int64_t classes = tape.shape(f.logits)[1];
        for (size_t r = 0; r < idx.size(); ++r) {
            const double* row = logits.data() + static_cast<int64_t>(r) * classes;
            int best = 0;
            for (int j = 1; j < classes; ++j)
                if (row[j] > row[best]) best = j;
            hits += best == b.labels[r] ? 1 : 0;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(test_idx_.size());
}

std::optional<Trainer::RelocationDecision> Trainer::decide_relocation(const IdlenessReport& report) {
    const int L = model_.cfg.num_blocks;
    switch (cfg_.strategy) {
        case Strategy::vpt_deep:
        case Strategy::vpt_shallow:
        case Strategy::adding:
            return std::nullopt;
        case Strategy::provpt:
        case Strategy::bandit_alloc: {
            std::optional<int64_t> k = select_prune(report, dist_);
            if (!k) return std::nullopt;
            RelocationDecision d;
            d.k_star = *k;
            d.source_block = dist_.assignments[static_cast<size_t>(*k)];
            d.idleness = report.per_prompt[static_cast<size_t>(*k)];
            Distribution pruned = prune(dist_, *k);
            if (cfg_.strategy == Strategy::provpt) {
                d.state = encode_state(report, pruned, d.source_block);
                auto [a, logp] = ppo_->sample_action(d.state.encoded, action_rng_);
                d.target_block = a + 1;
                d.log_prob = logp;
            } else {
                d.target_block = bandit_->sample(action_rng_) + 1;
            }
            return d;
        }
        case Strategy::random_prune: {
            // same max-score trigger as idleness pruning, for comparability
            if (report.max_score <= 0.0) return std::nullopt;
            std::vector<int64_t> active;
            for (int64_t k = 0; k < dist_.count(); ++k)
                if (dist_.assignments[static_cast<size_t>(k)] >= 1) active.push_back(k);
            if (active.empty()) return std::nullopt;
            RelocationDecision d;
            d.k_star = active[static_cast<size_t>(action_rng_.index(static_cast<int64_t>(active.size())))];
            d.source_block = dist_.assignments[static_cast<size_t>(d.k_star)];
            d.idleness = report.per_prompt[static_cast<size_t>(d.k_star)];
            Distribution pruned = prune(dist_, d.k_star);
            d.state = encode_state(report, pruned, d.source_block);
            auto [a, logp] = ppo_->sample_action(d.state.encoded, action_rng_);
            d.target_block = a + 1;
            d.log_prob = logp;
            return d;
        }
        case Strategy::prune_only: {
            std::optional<int64_t> k = select_prune(report, dist_);
            if (!k) return std::nullopt;
            const double floor = cfg_.prune_floor * static_cast<double>(dist_.count());
            if (static_cast<double>(dist_.active_count() - 1) < floor) return std::nullopt;
            RelocationDecision d;
            d.k_star = *k;
            d.source_block = dist_.assignments[static_cast<size_t>(*k)];
            d.idleness = report.per_prompt[static_cast<size_t>(*k)];
            d.target_block = 0;
            return d;
        }
        case Strategy::naive_rl: {
            if (report.max_score <= 0.0) return std::nullopt;
            RelocationDecision d;
            d.naive_state = encode_naive_state(report, dist_);
            d.naive_mask = naive_action_mask(dist_);
            auto [a, logp] = naive_ppo_->sample_action(d.naive_state, action_rng_, &d.naive_mask);
            d.naive_action = a;
            d.log_prob = logp;
            auto [src, tgt] = naive_action_decode(a, L);
            d.source_block = src;
            d.target_block = tgt;
            // highest-idleness prompt within the chosen source block
            const std::vector<int64_t> members = dist_.prompts_in_block(src);
            if (members.empty()) return std::nullopt;  // masked, should not happen
            d.k_star = members[0];
            for (int64_t k : members)
                if (report.per_prompt[static_cast<size_t>(k)] > report.per_prompt[static_cast<size_t>(d.k_star)])
                    d.k_star = k;
            d.idleness = report.per_prompt[static_cast<size_t>(d.k_star)];
            return d;
        }
    }
    return std::nullopt;
}

void Trainer::apply_relocation(const RelocationDecision& d, EpochRecord& rec, double loss_before) {
    int src = 0;
    {
        PhaseTimer timer(phase_seconds_, "prune");
        dist_ = prune(dist_, d.k_star, &src);
    }
    rec.phases.push_back("prune");
    if (d.target_block >= 1) {
        PhaseTimer timer(phase_seconds_, "allocate");
        dist_ = allocate(dist_, d.k_star, d.target_block);
        rec.phases.push_back("allocate");
        if (cfg_.rewind_momentum)
            opt_.reset_row("prompts", d.k_star, prompts_.dim());
    }
    RelocationEvent ev;
    ev.pruned_index = d.k_star;
    ev.source_block = src;
    ev.target_block = d.target_block;
    ev.idleness = d.idleness;
    ev.loss_before = loss_before;
    rec.relocation = ev;
}

PolicyState Trainer::encode_next_state(const IdlenessReport& report) const {
    // "After PR and VPT the state transitions": the successor state is built
    // from the fresh end-of-epoch report, the post-relocation distribution,
    // and the relocated prompt's current block.
    const Pending& p = *pending_;
    const int loc = p.decision.target_block >= 1 ? p.decision.target_block : p.decision.source_block;
    return encode_state(report, dist_, loc);
}

void Trainer::tune_one_epoch(EpochRecord& rec) {
    PhaseTimer timer(phase_seconds_, "tune");
    rec.phases.push_back("tune");
    std::vector<int64_t> order = train_idx_;
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng_.index(static_cast<int64_t>(i)))]);

    ForwardOptions opts;
    opts.training = true;
    opts.dropout_rng = &dropout_rng_;

    double loss_sum = 0.0;
    int64_t batches = 0;
    std::vector<uint8_t> active(static_cast<size_t>(prompts_.count()), 0);
    for (int64_t k = 0; k < prompts_.count(); ++k)
        active[static_cast<size_t>(k)] = dist_.assignments[static_cast<size_t>(k)] >= 1 ? 1 : 0;

    for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg_.batch_size)) {
        std::vector<int64_t> idx(order.begin() + static_cast<int64_t>(off),
                                 order.begin() + static_cast<int64_t>(std::min(off + static_cast<size_t>(cfg_.batch_size), order.size())));
        Batch b = data_.make_batch(idx);
        Tape tape;
        Var loss;
        Var prompts_leaf, head_w_leaf, head_b_leaf;
        if (cfg_.strategy == Strategy::vpt_shallow) {
            VitForward f = vit_forward_shallow(tape, model_, b.images, prompts_, opts);
            loss = tape.cross_entropy_logits(f.logits, b.labels);
            prompts_leaf = f.prompts;
            head_w_leaf = f.head_w;
            head_b_leaf = f.head_b;
        } else {
            LossForward lf = vit_loss(tape, model_, b.images, b.labels, prompts_, dist_, opts);
            loss = lf.loss;
            prompts_leaf = lf.fwd.prompts;
            head_w_leaf = lf.fwd.head_w;
            head_b_leaf = lf.fwd.head_b;
        }
        loss_sum += tape.forward_scalar(loss);
        ++batches;
        tape.backward(loss);
        if (prompts_.count() > 0 && prompts_leaf.valid())
            opt_.step("prompts", prompts_.values, tape.grad(prompts_leaf));
        if (cfg_.train_head) {
            opt_.step("head_w", model_.w.head_w, tape.grad(head_w_leaf));
            opt_.step("head_b", model_.w.head_b, tape.grad(head_b_leaf));
        }
        const bool last = off + static_cast<size_t>(cfg_.batch_size) >= order.size();
        if (last && prompts_.count() > 0 && prompts_leaf.valid())
            prev_grad_ = tape.grad_tensor(prompts_leaf);
    }
    rec.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
}

void Trainer::maybe_add_prompt(EpochRecord& rec) {
    // adding-based variant: one fresh prompt per epoch until the reservoir of
    // undistributed prompts is exhausted
    int64_t next = -1;
    for (int64_t k = 0; k < dist_.count(); ++k)
        if (dist_.assignments[static_cast<size_t>(k)] == 0) {
            next = k;
            break;
        }
    if (next < 0) return;
    const double loss_before = probe_loss();
    std::vector<double> state;
    const std::vector<int64_t> counts = dist_.block_counts();
    for (int64_t c : counts)
        state.push_back(static_cast<double>(c) / static_cast<double>(dist_.count()));
    auto [a, logp] = adding_ppo_->sample_action(state, action_rng_);
    prompts_.init_row_uniform(next, fresh_rng_);
    opt_.reset_row("prompts", next, prompts_.dim());
    dist_ = allocate(dist_, next, a + 1);
    rec.phases.push_back("add");

    AddEvent ev;
    ev.index = next;
    ev.target_block = a + 1;
    ev.loss_before = loss_before;
    rec.add = ev;

    PpoAgent::Step step;
    step.state = state;
    step.action = a;
    step.log_prob = logp;
    pending_add_ = step;
}

void Trainer::finish_relocation(EpochRecord& rec) {
    PhaseTimer timer(phase_seconds_, "reward");
    Pending& p = *pending_;
    const double loss_after = rec.probe_loss;
    const double r = reward_approx(p.loss_before, loss_after, p.decision.idleness);
    rec.phases.push_back("reward");
    rec.relocation->loss_after_tuning = loss_after;
    rec.relocation->approx_reward = r;

    if (cfg_.strategy == Strategy::bandit_alloc) {
        bandit_->update(p.decision.target_block - 1, r);
        rec.phases.push_back("update");
    } else if (cfg_.strategy == Strategy::provpt || cfg_.strategy == Strategy::random_prune) {
        PpoAgent::Step step;
        step.state = p.decision.state.encoded;
        step.action = p.decision.target_block - 1;
        step.log_prob = p.decision.log_prob;
        step.reward = r;
        if (prev_grad_) {
            IdlenessReport next_rep = idleness_approx(*prev_grad_, prompts_, dist_);
            step.next_state = encode_next_state(next_rep).encoded;
        } else {
            step.next_state = step.state;
        }
        buffer_.push_back(std::move(step));
        PhaseTimer t2(phase_seconds_, "update");
        ppo_->update(buffer_);
        rec.phases.push_back("update");
    } else if (cfg_.strategy == Strategy::naive_rl) {
        PpoAgent::Step step;
        step.state = p.decision.naive_state;
        step.mask = p.decision.naive_mask;
        step.action = p.decision.naive_action;
        step.log_prob = p.decision.log_prob;
        step.reward = r;
        if (prev_grad_) {
            IdlenessReport next_rep = idleness_approx(*prev_grad_, prompts_, dist_);
            step.next_state = encode_naive_state(next_rep, dist_);
        } else {
            step.next_state = step.state;
        }
        buffer_.push_back(std::move(step));
        PhaseTimer t2(phase_seconds_, "update");
        naive_ppo_->update(buffer_);
        rec.phases.push_back("update");
    }
    pending_.reset();
}

EpochRecord Trainer::run_epoch() {
    EpochRecord rec;
    rec.epoch = ++epoch_;

    // Relocation strictly precedes tuning (epoch 1 has no gradient yet and
    // never relocates).
    if (cfg_.strategy == Strategy::adding) {
        maybe_add_prompt(rec);
    } else if (prev_grad_) {
        PhaseTimer timer(phase_seconds_, "score");
        IdlenessReport report = idleness_approx(*prev_grad_, prompts_, dist_);
        rec.max_idleness = report.max_score;
        rec.phases.push_back("score");
        std::optional<RelocationDecision> d = decide_relocation(report);
        if (d) {
            const double loss_before = probe_loss();
            apply_relocation(*d, rec, loss_before);
            if (d->target_block >= 1) pending_ = Pending{*d, loss_before, report};
        }
    }

    tune_one_epoch(rec);

    rec.probe_loss = probe_loss();
    if (pending_) finish_relocation(rec);
    if (pending_add_) {
        const double r = rec.add->loss_before - rec.probe_loss;
        rec.add->loss_after = rec.probe_loss;
        rec.add->reward = r;
        pending_add_->reward = r;
        std::vector<double> next_state;
        const std::vector<int64_t> counts = dist_.block_counts();
        for (int64_t c : counts)
            next_state.push_back(static_cast<double>(c) / static_cast<double>(dist_.count()));
        pending_add_->next_state = next_state;
        buffer_.push_back(*pending_add_);
        adding_ppo_->update(buffer_);
        rec.phases.push_back("update");
        pending_add_.reset();
    }
    rec.eval_accuracy = test_accuracy();
    rec.phases.push_back("eval");
    rec.assignments = dist_.assignments;
    return rec;
}

RunResult Trainer::run() {
    RunResult out;
    for (int e = 0; e < cfg_.total_epochs; ++e) {
        EpochRecord rec = run_epoch();

        MetricsRow row;
        row.epoch = rec.epoch;
        row.train_loss = rec.train_loss;
        row.probe_loss = rec.probe_loss;
        row.eval_acc = rec.eval_accuracy;
        if (rec.relocation && rec.relocation->target_block >= 1) {
            row.relocated = true;
            row.k_star = rec.relocation->pruned_index;
            row.source = rec.relocation->source_block;
            row.target = rec.relocation->target_block;
            row.reward = rec.relocation->approx_reward;
        } else if (rec.relocation) {  // prune-only event
            row.k_star = rec.relocation->pruned_index;
            row.source = rec.relocation->source_block;
        } else if (rec.add) {
            row.k_star = rec.add->index;
            row.target = rec.add->target_block;
            row.reward = rec.add->reward;
        }
        out.metrics.push_back(row);

        HistoryRecord h;
        h.epoch = rec.epoch;
        h.assignments = rec.assignments;
        h.max_idleness = rec.max_idleness;
        if (rec.relocation) h.event = rec.relocation;
        if (rec.add) h.add = HistoryRecord::Add{rec.add->index, rec.add->target_block, rec.add->reward};
        out.history.push_back(std::move(h));

        out.records.push_back(std::move(rec));
    }
    out.final_eval_accuracy = out.records.empty() ? 0.0 : out.records.back().eval_accuracy;
    out.phase_seconds = phase_seconds_;
    return out;
}

ArrayStore Trainer::checkpoint() const {
    ArrayStore store;
    put_model(store, model_);
    store.put("prompts", prompts_.values);
    Tensor assign({dist_.count()});
    for (int64_t k = 0; k < dist_.count(); ++k)
        assign.values[static_cast<size_t>(k)] = static_cast<double>(dist_.assignments[static_cast<size_t>(k)]);
    store.put("distribution", assign);
    auto put_agent = [&](const char* prefix, const PpoAgent* agent) {
        if (!agent) return;
        const_cast<PpoAgent*>(agent)->actor().for_each_named(std::string(prefix) + ".actor",
                                                             [&](const std::string& n, Tensor& t) { store.put(n, t); });
        const_cast<PpoAgent*>(agent)->critic().for_each_named(std::string(prefix) + ".critic",
                                                              [&](const std::string& n, Tensor& t) { store.put(n, t); });
    };
    put_agent("policy", ppo_.get());
    put_agent("naive", naive_ppo_.get());
    put_agent("adding", adding_ppo_.get());
    return store;
}

void Trainer::restore(const ArrayStore& store) {
    model_.w.for_each_named([&](const std::string& name, Tensor& t) {
        const Tensor* src = store.find("vit." + name);
        if (!src) throw std::runtime_error("restore: missing vit." + name);
        if (src->shape != t.shape) throw std::runtime_error("restore: shape mismatch for vit." + name);
        t.values = src->values;
    });
    const Tensor& p = store.get("prompts");
    if (p.shape != prompts_.values.shape) throw std::runtime_error("restore: prompt shape mismatch");
    prompts_.values.values = p.values;
    const Tensor& a = store.get("distribution");
    for (int64_t k = 0; k < dist_.count(); ++k)
        dist_.assignments[static_cast<size_t>(k)] = static_cast<int>(a.values[static_cast<size_t>(k)]);
    auto get_agent = [&](const char* prefix, PpoAgent* agent) {
        if (!agent) return;
        agent->actor().for_each_named(std::string(prefix) + ".actor", [&](const std::string& n, Tensor& t) {
            t.values = store.get(n).values;
        });
        agent->critic().for_each_named(std::string(prefix) + ".critic", [&](const std::string& n, Tensor& t) {
            t.values = store.get(n).values;
        });
    };
    get_agent("policy", ppo_.get());
    get_agent("naive", naive_ppo_.get());
    get_agent("adding", adding_ppo_.get());
}

}  // namespace provpt

