#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "provpt/io.hpp"
#include "provpt/trainer.hpp"

namespace provpt {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    std::map<std::string, double> metrics;
};

// Small randomly weighted model + batch for the oracle batteries.
struct RandomSetup {
    VitModel model;
    PromptSet prompts;
    Distribution dist;
    Batch batch;
};
RandomSetup make_random_setup(uint64_t seed, int blocks = 3, int dim = 16, int heads = 2,
                              int image = 8, int patch = 4, int classes = 3, int batch = 4,
                              int prompts = 3, double prompt_scale = 1.0, double ln_eps = 1e-6);

// End-to-end loss gradients vs central finite differences (step 1e-5),
// sampled coordinates across prompts, head and backbone leaves.
CheckResult check_gradient_fidelity(int num_seeds, double rel_tol = 1e-4, double abs_floor = 1e-7,
                                    int coords_per_seed = 8);

// Taylor fidelity of the idleness approximation: per epsilon in
// {1e-1, 1e-2, 1e-3}, max |I_hat - I| must decrease, with >= `min_agree`
// sign agreement at eps = 1e-2.
CheckResult check_taylor_fidelity(int num_configs, double min_agree = 0.95);

// Substituting the exact idleness into the approximate reward reproduces the
// exact reward to 1e-12.
CheckResult check_reward_identity(int num_snapshots, double tol = 1e-12);

// Clipped-regime transitions contribute exactly zero actor gradient.
CheckResult check_ppo_clip_gradient();

// Closed-form policy parameter count at L = 12 and the published total.
CheckResult check_ppo_param_count();

// Policy improvement on a stationary 2-arm bandit.
CheckResult check_ppo_bandit_improvement(int num_seeds, int updates, double min_frac = 0.95);

// Serial reference kernels agree bit-exactly with the OpenMP kernels.
CheckResult check_kernel_parity(uint64_t seed = 0);

// Algorithm guard over a run history: relocation iff max idleness > 0, at
// most one event per epoch, N and the active count conserved by every event.
CheckResult check_guard_invariants(const std::vector<HistoryRecord>& history);

// The fast battery used by the `verify` subcommand.
std::vector<CheckResult> run_fast_checks();

}  // namespace provpt
