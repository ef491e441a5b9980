#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "provpt/rng.hpp"
#include "provpt/tensor.hpp"

namespace provpt {

// The N trainable prompt vectors, stored as one [N, d] tensor so a single
// gradient read covers the whole set. N is fixed for the lifetime of a run;
// relocation never adds or removes rows.
struct PromptSet {
    Tensor values;  // [N, d], requires_grad

    PromptSet() = default;
    PromptSet(int64_t n, int64_t dim) : values({n, dim}, 0.0, true) {}

    int64_t count() const { return values.shape.empty() ? 0 : values.shape[0]; }
    int64_t dim() const { return values.shape.size() < 2 ? 0 : values.shape[1]; }

    double* row(int64_t k) { return values.values.data() + k * dim(); }
    const double* row(int64_t k) const { return values.values.data() + k * dim(); }

    // Uniform in [-r, r] with r = sqrt(6/(d+d)).
    void init_uniform(Rng& rng) {
        const double r = std::sqrt(6.0 / static_cast<double>(2 * dim()));
        for (double& v : values.values) v = rng.uniform(-r, r);
    }
    void init_row_uniform(int64_t k, Rng& rng) {
        const double r = std::sqrt(6.0 / static_cast<double>(2 * dim()));
        double* p = row(k);
        for (int64_t j = 0; j < dim(); ++j) p[j] = rng.uniform(-r, r);
    }

    bool finite() const {
        for (double v : values.values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Per-prompt block assignment d_k in {0,...,L}; 0 means undistributed.
struct Distribution {
    std::vector<int> assignments;
    int num_blocks = 0;

    Distribution() = default;
    Distribution(int64_t n, int blocks) : assignments(static_cast<size_t>(n), 0), num_blocks(blocks) {}

    static Distribution uniform(int64_t n, int blocks) {
        Distribution d(n, blocks);
        for (int64_t k = 0; k < n; ++k) d.assignments[static_cast<size_t>(k)] = static_cast<int>(k % blocks) + 1;
        return d;
    }

    int64_t count() const { return static_cast<int64_t>(assignments.size()); }

    int64_t active_count() const {
        int64_t n = 0;
        for (int a : assignments) n += a >= 1 ? 1 : 0;
        return n;
    }

    std::vector<int64_t> block_counts() const {
        std::vector<int64_t> c(static_cast<size_t>(num_blocks), 0);
        for (int a : assignments)
            if (a >= 1) c[static_cast<size_t>(a - 1)]++;
        return c;
    }

    // Prompt indices assigned to block i (1-based), in ascending index order.
    std::vector<int64_t> prompts_in_block(int block) const {
        std::vector<int64_t> out;
        for (size_t k = 0; k < assignments.size(); ++k)
            if (assignments[k] == block) out.push_back(static_cast<int64_t>(k));
        return out;
    }

    void validate() const {
        for (int a : assignments)
            if (a < 0 || a > num_blocks)
                throw std::invalid_argument("Distribution: assignment out of range");
    }
};

// Approximate idleness scores and per-block aggregates; drives pruning and
// the allocation policy's state.
struct IdlenessReport {
    std::vector<double> per_prompt;  // N entries
    std::vector<double> per_block;   // L entries, per_block[i] = sum over d_k=i+1
    int64_t argmax_index = -1;
    double max_score = 0.0;
};

// One prune+allocate transaction.
struct RelocationEvent {
    int64_t pruned_index = -1;
    int source_block = 0;
    int target_block = 0;
    double idleness = 0.0;
    double loss_before = 0.0;
    double loss_after_tuning = 0.0;
    double approx_reward = 0.0;
};

}  // namespace provpt
