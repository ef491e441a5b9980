#pragma once

#include <optional>

#include "provpt/prompt.hpp"
#include "provpt/vit.hpp"

namespace provpt {

// A labelled evaluation batch.
struct Batch {
    Tensor images;            // [B, H, W]
    std::vector<int> labels;  // B entries
};

// Mean cross-entropy of the prompted model on a batch (eval mode, no dropout).
double eval_loss(const VitModel& model, const PromptSet& prompts, const Distribution& dist,
                 const Batch& batch);

// How prompt deactivation is realized in the second forward pass. The two
// forms differ by the softmax-denominator contribution of a retained zero
// token: remove_token is what pruning actually does to the model, zero_vector
// is the algebraic form the first-order expansion is derived against.
enum class Deactivation { remove_token, zero_vector };

// Exact idleness score I_k = L(f_{P,D}) - L(f_{P,D | d_k=0}): the loss change
// from deactivating prompt k, both losses on the same batch. Positive means
// the prompt hurts its current block.
double idleness_exact(const VitModel& model, const PromptSet& prompts, const Distribution& dist,
                      const Batch& batch, int64_t k,
                      Deactivation mode = Deactivation::remove_token);

// First-order approximation over the whole set: I_k ~= g_k . p_k, where g is
// the loss gradient over the prompt tensor. Per-block sums are populated for
// the allocation policy's state. Inactive prompts must have zero gradient.
IdlenessReport idleness_approx(const Tensor& prompt_grad, const PromptSet& prompts,
                               const Distribution& dist);

// Argmax_k of the report if the max is strictly positive and the winner is
// active; none otherwise (the distribution is near-optimal). Ties break to
// the lowest prompt index.
std::optional<int64_t> select_prune(const IdlenessReport& report, const Distribution& dist);

// d_{k*} <- 0. Returns the new distribution; source block via out-param.
Distribution prune(const Distribution& dist, int64_t k, int* source_block = nullptr);

// d_{k*} <- a. Prompt values are untouched; a relocated prompt keeps what it
// has learned.
Distribution allocate(const Distribution& dist, int64_t k, int block);

// Exact allocation reward r = L(f_{P,D-}) - L(f_{P',D+}) on one batch, where
// (P, D-) is the pre-allocation snapshot and (P', D+) the post-tuning state.
double reward_exact(const VitModel& model, const Batch& batch,
                    const PromptSet& prompts_before, const Distribution& dist_pruned,
                    const PromptSet& prompts_tuned, const Distribution& dist_after);

// r_hat = loss_before - loss_after_tuning - I_hat_{k*}; substituting the
// exact score makes this equal reward_exact identically.
double reward_approx(double loss_before, double loss_after_tuning, double idleness);

// Accuracy of the prompted model on a batch.
double eval_accuracy(const VitModel& model, const PromptSet& prompts, const Distribution& dist,
                     const Batch& batch);

}  // namespace provpt
