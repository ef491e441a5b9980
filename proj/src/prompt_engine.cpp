#include "provpt/prompt_engine.hpp"

#include <stdexcept>

namespace provpt {

double eval_loss(const VitModel& model, const PromptSet& prompts, const Distribution& dist,
                 const Batch& batch) {
    Tape tape;
    LossForward lf = vit_loss(tape, model, batch.images, batch.labels, prompts, dist);
    return tape.forward_scalar(lf.loss);
}

double eval_accuracy(const VitModel& model, const PromptSet& prompts, const Distribution& dist,
                     const Batch& batch) {
    Tape tape;
    VitForward f = vit_forward(tape, model, batch.images, prompts, dist);
    const std::vector<double>& logits = tape.value(f.logits);
    const int64_t rows = tape.shape(f.logits)[0];
    const int64_t classes = tape.shape(f.logits)[1];
    int64_t hits = 0;
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = logits.data() + r * classes;
        int64_t best = 0;
        for (int64_t j = 1; j < classes; ++j)
            if (row[j] > row[best]) best = j;
        hits += best == batch.labels[static_cast<size_t>(r)] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(rows);
}

double idleness_exact(const VitModel& model, const PromptSet& prompts, const Distribution& dist,
                      const Batch& batch, int64_t k, Deactivation mode) {
    if (k < 0 || k >= dist.count()) throw std::invalid_argument("idleness_exact: bad prompt index");
    if (dist.assignments[static_cast<size_t>(k)] < 1)
        throw std::invalid_argument("idleness_exact: prompt is not active");
    const double with = eval_loss(model, prompts, dist, batch);
    double deactivated = 0.0;
    if (mode == Deactivation::remove_token) {
        Distribution without = dist;
        without.assignments[static_cast<size_t>(k)] = 0;
        deactivated = eval_loss(model, prompts, without, batch);
    } else {
        PromptSet zeroed = prompts;
        for (int64_t j = 0; j < zeroed.dim(); ++j) zeroed.row(k)[j] = 0.0;
        deactivated = eval_loss(model, zeroed, dist, batch);
    }
    return with - deactivated;
}

IdlenessReport idleness_approx(const Tensor& prompt_grad, const PromptSet& prompts,
                               const Distribution& dist) {
    const int64_t n = prompts.count();
    const int64_t d = prompts.dim();
    if (prompt_grad.shape != prompts.values.shape)
        throw std::invalid_argument("idleness_approx: gradient shape does not match prompts");
    IdlenessReport rep;
    rep.per_prompt.resize(static_cast<size_t>(n), 0.0);
    rep.per_block.assign(static_cast<size_t>(dist.num_blocks), 0.0);
    for (int64_t k = 0; k < n; ++k) {
        const double* g = prompt_grad.values.data() + k * d;
        const double* p = prompts.row(k);
        const int block = dist.assignments[static_cast<size_t>(k)];
        if (block >= 1) {
            double s = 0.0;
            for (int64_t j = 0; j < d; ++j) s += g[j] * p[j];
            rep.per_prompt[static_cast<size_t>(k)] = s;
            rep.per_block[static_cast<size_t>(block - 1)] += s;
        } else {
            rep.per_prompt[static_cast<size_t>(k)] = 0.0;
        }
    }
    rep.argmax_index = n > 0 ? 0 : -1;
    for (int64_t k = 1; k < n; ++k)
        if (rep.per_prompt[static_cast<size_t>(k)] > rep.per_prompt[static_cast<size_t>(rep.argmax_index)])
            rep.argmax_index = k;
    rep.max_score = n > 0 ? rep.per_prompt[static_cast<size_t>(rep.argmax_index)] : 0.0;
    return rep;
}

std::optional<int64_t> select_prune(const IdlenessReport& report, const Distribution& dist) {
    if (report.per_prompt.empty()) return std::nullopt;
    int64_t best = 0;
    for (int64_t k = 1; k < static_cast<int64_t>(report.per_prompt.size()); ++k)
        if (report.per_prompt[static_cast<size_t>(k)] > report.per_prompt[static_cast<size_t>(best)])
            best = k;  // strict >, so ties keep the lowest index
    if (report.per_prompt[static_cast<size_t>(best)] <= 0.0) return std::nullopt;
    if (dist.assignments[static_cast<size_t>(best)] < 1) return std::nullopt;
    return best;
}

Distribution prune(const Distribution& dist, int64_t k, int* source_block) {
    if (k < 0 || k >= dist.count()) throw std::invalid_argument("prune: bad prompt index");
    const int src = dist.assignments[static_cast<size_t>(k)];
    if (src < 1) throw std::invalid_argument("prune: prompt already pruned");
    Distribution out = dist;
    out.assignments[static_cast<size_t>(k)] = 0;
    if (source_block) *source_block = src;
    return out;
}

Distribution allocate(const Distribution& dist, int64_t k, int block) {
    if (k < 0 || k >= dist.count()) throw std::invalid_argument("allocate: bad prompt index");
    if (dist.assignments[static_cast<size_t>(k)] != 0)
        throw std::invalid_argument("allocate: prompt is not pruned");
    if (block < 1 || block > dist.num_blocks)
        throw std::invalid_argument("allocate: block out of range");
    Distribution out = dist;
    out.assignments[static_cast<size_t>(k)] = block;
    return out;
}

double reward_exact(const VitModel& model, const Batch& batch,
                    const PromptSet& prompts_before, const Distribution& dist_pruned,
                    const PromptSet& prompts_tuned, const Distribution& dist_after) {
    if (prompts_before.values.shape != prompts_tuned.values.shape)
        throw std::invalid_argument("reward_exact: snapshot shapes differ");
    const double before = eval_loss(model, prompts_before, dist_pruned, batch);
    const double after = eval_loss(model, prompts_tuned, dist_after, batch);
    return before - after;
}

double reward_approx(double loss_before, double loss_after_tuning, double idleness) {
    return loss_before - loss_after_tuning - idleness;
}

}  // namespace provpt
