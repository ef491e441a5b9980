#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "provpt/allocator.hpp"
#include "provpt/data.hpp"
#include "provpt/io.hpp"
#include "provpt/nn.hpp"
#include "provpt/prompt_engine.hpp"
#include "provpt/vit.hpp"

namespace provpt {

enum class Strategy {
    provpt,        // idleness pruning + PPO allocation (Prn2 & Alc2)
    prune_only,    // idleness pruning, never reallocates
    random_prune,  // random pruning + PPO allocation (Prn1 & Alc2)
    bandit_alloc,  // idleness pruning + Thompson-sampling allocation (Prn2 & Alc1)
    naive_rl,      // joint L^2-action PPO over (source, target)
    adding,        // PPO chooses a block to add a fresh prompt each epoch
    vpt_deep,      // fixed uniform distribution
    vpt_shallow,   // all prompts at block 1, outputs retained
};

Strategy parse_strategy(const std::string& s);
std::string strategy_name(Strategy s);
const std::vector<std::string>& strategy_names();

struct TrainConfig {
    int total_epochs = 100;
    int batch_size = 64;
    double learning_rate = 0.5;  // fixed for the whole run; no schedule
    double momentum = 0.9;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    Strategy strategy = Strategy::provpt;
    int prompts_total = 12;
    std::vector<int> initial_distribution;  // empty -> uniform
    double drop_rate = 0.0;
    bool rewind_momentum = true;  // fresh momentum for a relocated prompt
    double prune_floor = 0.5;     // prune_only: stop below this active fraction
    int adding_initial = 0;       // adding: active prompts at start (0 -> N/2)
    int probe_batch_size = 256;
    bool train_head = true;
    std::string normalization = "inception";
    PpoConfig ppo;
    BanditConfig bandit;

    void validate() const;
    std::map<std::string, std::string> snapshot() const;
};

struct AddEvent {
    int64_t index = -1;
    int target_block = 0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    double reward = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double probe_loss = 0.0;
    double eval_accuracy = 0.0;
    std::optional<double> max_idleness;  // absent on epoch 1 (no gradient yet)
    std::optional<RelocationEvent> relocation;
    std::optional<AddEvent> add;
    std::vector<int> assignments;      // distribution snapshot after the epoch
    std::vector<std::string> phases;   // execution order, for the nesting-order check
};

struct RunResult {
    std::vector<EpochRecord> records;
    std::vector<MetricsRow> metrics;
    std::vector<HistoryRecord> history;
    double final_eval_accuracy = 0.0;
    std::map<std::string, double> phase_seconds;
};

// One training run: frozen constructed backbone, trainable prompts and head,
// relocation per the configured strategy. Owns all run state so tests can
// drive single epochs and inspect internals.
class Trainer {
public:
    Trainer(const VitModel& backbone, const Dataset& dataset, TrainConfig cfg);

    EpochRecord run_epoch();
    RunResult run();

    // Decision seam used by the epoch loop and by tests that inject synthetic
    // reports.
    struct RelocationDecision {
        int64_t k_star = -1;
        int source_block = 0;
        int target_block = 0;   // 0 for prune_only
        double idleness = 0.0;
        double log_prob = 0.0;  // PPO strategies
        PolicyState state;      // decomposed PPO
        std::vector<double> naive_state;  // naive strategy
        std::vector<double> naive_mask;
        int naive_action = -1;
    };
    std::optional<RelocationDecision> decide_relocation(const IdlenessReport& report);

    const PromptSet& prompts() const { return prompts_; }
    const Distribution& distribution() const { return dist_; }
    const VitModel& model() const { return model_; }
    const TrainConfig& config() const { return cfg_; }
    int epochs_done() const { return epoch_; }
    const Batch& probe_batch() const { return probe_; }
    PpoAgent* allocator_agent() { return ppo_ ? ppo_.get() : nullptr; }
    GaussianBandit* bandit_agent() { return bandit_ ? bandit_.get() : nullptr; }
    bool has_report() const { return prev_grad_.has_value(); }
    // Test hook: install a gradient so the next epoch sees a chosen report.
    void set_prev_gradient(const Tensor& g) { prev_grad_ = g; }

    // Current-state checkpoint: backbone + prompts + distribution + policy.
    ArrayStore checkpoint() const;
    void restore(const ArrayStore& store);

private:
    void tune_one_epoch(EpochRecord& rec);
    void apply_relocation(const RelocationDecision& d, EpochRecord& rec, double loss_before);
    void finish_relocation(EpochRecord& rec);
    void maybe_add_prompt(EpochRecord& rec);
    double probe_loss() const;
    double test_accuracy() const;
    PolicyState encode_next_state(const IdlenessReport& report) const;

    VitModel model_;
    Dataset data_;
    TrainConfig cfg_;
    PromptSet prompts_;
    Distribution dist_;
    SgdOptimizer opt_;
    std::unique_ptr<PpoAgent> ppo_;
    std::unique_ptr<PpoAgent> naive_ppo_;
    std::unique_ptr<PpoAgent> adding_ppo_;
    std::unique_ptr<GaussianBandit> bandit_;
    std::vector<PpoAgent::Step> buffer_;  // transition buffer, whole run = one episode

    Rng rng_;
    Rng action_rng_;
    Rng shuffle_rng_;
    Rng dropout_rng_;
    Rng fresh_rng_;

    std::vector<int64_t> train_idx_;
    std::vector<int64_t> test_idx_;
    Batch probe_;

    std::optional<Tensor> prev_grad_;  // last mini-batch gradient of the previous epoch
    int epoch_ = 0;

    // pending relocation within the current epoch
    struct Pending {
        RelocationDecision decision;
        double loss_before = 0.0;
        IdlenessReport report;
    };
    std::optional<Pending> pending_;
    std::optional<PpoAgent::Step> pending_add_;
    std::map<std::string, double> phase_seconds_;
};

}  // namespace provpt
