#pragma once

#include <functional>
#include <string>
#include <vector>

#include "provpt/autodiff.hpp"
#include "provpt/nn.hpp"
#include "provpt/prompt.hpp"
#include "provpt/rng.hpp"
#include "provpt/tensor.hpp"

namespace provpt {

struct VitConfig {
    int num_blocks = 6;
    int embed_dim = 32;
    int num_heads = 2;
    int patch_size = 4;
    int image_size = 16;
    int num_classes = 4;
    double mlp_ratio = 2.0;
    double drop_rate = 0.0;
    double ln_eps = 1e-6;

    int tokens_per_side() const { return image_size / patch_size; }
    int num_patches() const { return tokens_per_side() * tokens_per_side(); }
    int patch_dim() const { return patch_size * patch_size; }  // single channel
    int head_dim() const { return embed_dim / num_heads; }
    int mlp_dim() const { return static_cast<int>(embed_dim * mlp_ratio); }

    void validate() const;
};

struct BlockWeights {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv;  // [d,d] / [d]
    Tensor wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor w1, b1;  // [d, mlp]
    Tensor w2, b2;  // [mlp, d]
};

struct VitWeights {
    Tensor patch_w;  // [patch_dim, d]
    Tensor patch_b;  // [d]
    Tensor pos;      // [n_e, d]; prompts and the class token get no position encoding
    Tensor cls;      // [d]
    std::vector<BlockWeights> blocks;
    Tensor ln_f_g, ln_f_b;
    Tensor head_w;  // [d, C]
    Tensor head_b;  // [C]

    static VitWeights zeros(const VitConfig& cfg);
    static VitWeights random(const VitConfig& cfg, Rng& rng);

    void for_each_named(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_named(const std::function<void(const std::string&, const Tensor&)>& fn) const;

    // Freeze everything except the classifier head.
    void freeze_backbone();
};

struct VitModel {
    VitConfig cfg;
    VitWeights w;
};

struct ForwardOptions {
    bool training = false;    // enables dropout when cfg.drop_rate > 0
    Rng* dropout_rng = nullptr;
    bool record_attention = false;  // fill cls->prompt attention rows
};

struct VitForward {
    Var logits;
    Var prompts;  // leaf for the [N, d] prompt tensor (invalid if none supplied)
    Var head_w, head_b;
    // Per block: attention weight of the class token to each prompt hosted by
    // that block (averaged over heads and batch), prompt order = ascending k.
    std::vector<std::vector<double>> cls_prompt_attention;
};

// E_0: patch projection plus position encodings, [B, n_e, d].
Var patch_embed(Tape& tape, const VitModel& model, Var images);

// Prompted forward under the deep/discard convention: block i consumes
// [x_{i-1}, P_i, E_{i-1}] and the prompt-position outputs are dropped before
// block i+1. Prompts with d_k = 0 never enter the graph.
VitForward vit_forward(Tape& tape, const VitModel& model, const Tensor& images,
                       const PromptSet& prompts, const Distribution& dist,
                       const ForwardOptions& opts = {});

// Shallow variant: all prompts enter at block 1 and their outputs Z_i are
// retained and propagated through every later block.
VitForward vit_forward_shallow(Tape& tape, const VitModel& model, const Tensor& images,
                               const PromptSet& prompts, const ForwardOptions& opts = {});

// Convenience: forward + cross-entropy on a labelled batch.
struct LossForward {
    VitForward fwd;
    Var loss;
};
LossForward vit_loss(Tape& tape, const VitModel& model, const Tensor& images,
                     const std::vector<int>& labels, const PromptSet& prompts,
                     const Distribution& dist, const ForwardOptions& opts = {});

// Attention introspection without gradients: per-block cls->prompt rows.
std::vector<std::vector<double>> cls_prompt_attention(const VitModel& model, const Tensor& images,
                                                      const PromptSet& prompts, const Distribution& dist);

}  // namespace provpt
