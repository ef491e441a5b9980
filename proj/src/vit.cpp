#include "provpt/vit.hpp"

#include <cmath>
#include <stdexcept>

namespace provpt {

void VitConfig::validate() const {
    if (num_blocks <= 0 || embed_dim <= 0 || num_heads <= 0 || patch_size <= 0 ||
        image_size <= 0 || num_classes <= 0 || mlp_ratio <= 0.0)
        throw std::invalid_argument("VitConfig: all dimensions must be positive");
    if (embed_dim % num_heads != 0)
        throw std::invalid_argument("VitConfig: embed_dim must be divisible by num_heads");
    if (image_size % patch_size != 0)
        throw std::invalid_argument("VitConfig: image_size must be a multiple of patch_size");
    if (drop_rate < 0.0 || drop_rate >= 1.0)
        throw std::invalid_argument("VitConfig: drop_rate must be in [0,1)");
}

VitWeights VitWeights::zeros(const VitConfig& cfg) {
    cfg.validate();
    const int d = cfg.embed_dim;
    VitWeights w;
    w.patch_w = Tensor({cfg.patch_dim(), d});
    w.patch_b = Tensor({d});
    w.pos = Tensor({cfg.num_patches(), d});
    w.cls = Tensor({d});
    w.blocks.resize(static_cast<size_t>(cfg.num_blocks));
    for (BlockWeights& b : w.blocks) {
        b.ln1_g = Tensor({d}, 1.0);
        b.ln1_b = Tensor({d});
        b.wq = Tensor({d, d});
        b.bq = Tensor({d});
        b.wk = Tensor({d, d});
        b.bk = Tensor({d});
        b.wv = Tensor({d, d});
        b.bv = Tensor({d});
        b.wo = Tensor({d, d});
        b.bo = Tensor({d});
        b.ln2_g = Tensor({d}, 1.0);
        b.ln2_b = Tensor({d});
        b.w1 = Tensor({d, cfg.mlp_dim()});
        b.b1 = Tensor({cfg.mlp_dim()});
        b.w2 = Tensor({cfg.mlp_dim(), d});
        b.b2 = Tensor({d});
    }
    w.ln_f_g = Tensor({d}, 1.0);
    w.ln_f_b = Tensor({d});
    w.head_w = Tensor({d, cfg.num_classes});
    w.head_b = Tensor({cfg.num_classes});
    return w;
}

VitWeights VitWeights::random(const VitConfig& cfg, Rng& rng) {
    VitWeights w = zeros(cfg);
    const int d = cfg.embed_dim;
    xavier_uniform(w.patch_w, cfg.patch_dim(), d, rng);
    for (double& v : w.pos.values) v = 0.02 * rng.normal();
    for (double& v : w.cls.values) v = 0.02 * rng.normal();
    for (BlockWeights& b : w.blocks) {
        xavier_uniform(b.wq, d, d, rng);
        xavier_uniform(b.wk, d, d, rng);
        xavier_uniform(b.wv, d, d, rng);
        xavier_uniform(b.wo, d, d, rng);
        xavier_uniform(b.w1, d, cfg.mlp_dim(), rng);
        xavier_uniform(b.w2, cfg.mlp_dim(), d, rng);
    }
    xavier_uniform(w.head_w, d, cfg.num_classes, rng);
    return w;
}

void VitWeights::for_each_named(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("patch_w", patch_w);
    fn("patch_b", patch_b);
    fn("pos", pos);
    fn("cls", cls);
    for (size_t i = 0; i < blocks.size(); ++i) {
        const std::string p = "block" + std::to_string(i) + ".";
        BlockWeights& b = blocks[i];
        fn(p + "ln1_g", b.ln1_g);
        fn(p + "ln1_b", b.ln1_b);
        fn(p + "wq", b.wq);
        fn(p + "bq", b.bq);
        fn(p + "wk", b.wk);
        fn(p + "bk", b.bk);
        fn(p + "wv", b.wv);
        fn(p + "bv", b.bv);
        fn(p + "wo", b.wo);
        fn(p + "bo", b.bo);
        fn(p + "ln2_g", b.ln2_g);
        fn(p + "ln2_b", b.ln2_b);
        fn(p + "w1", b.w1);
        fn(p + "b1", b.b1);
        fn(p + "w2", b.w2);
        fn(p + "b2", b.b2);
    }
    fn("ln_f_g", ln_f_g);
    fn("ln_f_b", ln_f_b);
    fn("head_w", head_w);
    fn("head_b", head_b);
}

void VitWeights::for_each_named(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<VitWeights*>(this)->for_each_named(
        [&](const std::string& name, Tensor& t) { fn(name, t); });
}

void VitWeights::freeze_backbone() {
    for_each_named([](const std::string& name, Tensor& t) {
        t.requires_grad = name == "head_w" || name == "head_b";
    });
}

namespace {

struct BlockVars {
    Var ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct GraphCtx {
    Tape& tape;
    const VitModel& model;
    ForwardOptions opts;
    int64_t batch = 0;
    std::vector<BlockVars> blocks;
    Var head_w, head_b, ln_f_g, ln_f_b;
};

BlockVars bind_block(Tape& t, const BlockWeights& b) {
    return BlockVars{t.leaf(b.ln1_g), t.leaf(b.ln1_b), t.leaf(b.wq), t.leaf(b.bq),
                     t.leaf(b.wk),    t.leaf(b.bk),    t.leaf(b.wv), t.leaf(b.bv),
                     t.leaf(b.wo),    t.leaf(b.bo),    t.leaf(b.ln2_g), t.leaf(b.ln2_b),
                     t.leaf(b.w1),    t.leaf(b.b1),    t.leaf(b.w2), t.leaf(b.b2)};
}

Var dropout(GraphCtx& g, Var x) {
    const double p = g.model.cfg.drop_rate;
    if (!g.opts.training || p <= 0.0 || g.opts.dropout_rng == nullptr) return x;
    const std::vector<int64_t>& shp = g.tape.shape(x);
    std::vector<double> mask(static_cast<size_t>(Tensor::numel_of(shp)));
    const double keep = 1.0 - p;
    for (double& m : mask) m = g.opts.dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
    return g.tape.mul(x, g.tape.constant(shp, std::move(mask)));
}

// One transformer block over tokens [B, T, d]. Returns the full token output;
// fills attn_probs with the post-softmax attention node when asked.
Var block_forward(GraphCtx& g, const BlockVars& bv, Var tokens, Var* attn_probs) {
    Tape& t = g.tape;
    const VitConfig& cfg = g.model.cfg;
    const int64_t B = g.batch;
    const int64_t T = t.shape(tokens)[1];
    const int64_t d = cfg.embed_dim;
    const int64_t h = cfg.num_heads;
    const int64_t hd = cfg.head_dim();

    Var ln1 = t.layer_norm(tokens, bv.ln1_g, bv.ln1_b, cfg.ln_eps);
    auto heads = [&](Var x) {
        Var r = t.reshape(x, {B, T, h, hd});
        r = t.transpose(r, 1, 2);  // [B, h, T, hd]
        return t.reshape(r, {B * h, T, hd});
    };
    Var q = heads(t.add_rowvec(t.matmul(ln1, bv.wq), bv.bq));
    Var k = heads(t.add_rowvec(t.matmul(ln1, bv.wk), bv.bk));
    Var v = heads(t.add_rowvec(t.matmul(ln1, bv.wv), bv.bv));

    Var scores = t.scale(t.bmm(q, t.transpose(k, 1, 2)), 1.0 / std::sqrt(static_cast<double>(hd)));
    Var probs = t.softmax(scores);  // [B*h, T, T]
    if (attn_probs) *attn_probs = probs;
    Var ctx = t.bmm(dropout(g, probs), v);  // [B*h, T, hd]
    ctx = t.reshape(ctx, {B, h, T, hd});
    ctx = t.transpose(ctx, 1, 2);
    ctx = t.reshape(ctx, {B, T, d});
    Var attn_out = t.add_rowvec(t.matmul(ctx, bv.wo), bv.bo);
    Var x1 = t.add(tokens, attn_out);

    Var ln2 = t.layer_norm(x1, bv.ln2_g, bv.ln2_b, cfg.ln_eps);
    Var hmid = t.gelu(t.add_rowvec(t.matmul(ln2, bv.w1), bv.b1));
    hmid = dropout(g, hmid);
    Var mlp_out = t.add_rowvec(t.matmul(hmid, bv.w2), bv.b2);
    return t.add(x1, mlp_out);
}

GraphCtx make_ctx(Tape& tape, const VitModel& model, const ForwardOptions& opts, int64_t batch) {
    GraphCtx g{tape, model, opts};
    g.batch = batch;
    g.blocks.reserve(model.w.blocks.size());
    for (const BlockWeights& b : model.w.blocks) g.blocks.push_back(bind_block(tape, b));
    g.ln_f_g = tape.leaf(model.w.ln_f_g);
    g.ln_f_b = tape.leaf(model.w.ln_f_b);
    g.head_w = tape.leaf(model.w.head_w);
    g.head_b = tape.leaf(model.w.head_b);
    return g;
}

Var embed_tokens(GraphCtx& g, Var images) {
    Tape& t = g.tape;
    const VitConfig& cfg = g.model.cfg;
    const int64_t B = g.batch;
    const int64_t side = cfg.tokens_per_side();
    const int64_t ps = cfg.patch_size;
    const int64_t n_e = cfg.num_patches();

    // [B, H, W] -> [B, n_e, patch_dim]: split rows into (side, ps) and cols
    // into (side, ps), then group the two patch-grid axes together.
    Var x = t.reshape(images, {B, side, ps, side, ps});
    x = t.transpose(x, 2, 3);  // [B, side, side, ps, ps]
    x = t.reshape(x, {B * n_e, ps * ps});
    Var patch_w = t.leaf(g.model.w.patch_w);
    Var patch_b = t.leaf(g.model.w.patch_b);
    Var e = t.add_rowvec(t.matmul(x, patch_w), patch_b);  // [B*n_e, d]
    e = t.reshape(e, {B, n_e, cfg.embed_dim});
    Var pos = t.expand_batch(t.leaf(g.model.w.pos), B);  // [B, n_e, d]
    return t.add(e, pos);
}

Var cls_tokens(GraphCtx& g) {
    Tape& t = g.tape;
    Var cls = t.leaf(g.model.w.cls);
    cls = t.reshape(cls, {1, g.model.cfg.embed_dim});
    return t.expand_batch(cls, g.batch);  // [B, 1, d]
}

Var head_logits(GraphCtx& g, Var cls_final) {
    Tape& t = g.tape;
    Var x = t.reshape(cls_final, {g.batch, g.model.cfg.embed_dim});
    x = t.layer_norm(x, g.ln_f_g, g.ln_f_b, g.model.cfg.ln_eps);
    return t.add_rowvec(t.matmul(x, g.head_w), g.head_b);
}

// Average the class-token attention row over heads (and batch) at the prompt
// positions [first, first+count).
std::vector<double> cls_row_avg(const Tape& t, Var probs, int64_t B, int64_t h,
                                int64_t T, int64_t first, int64_t count) {
    std::vector<double> out(static_cast<size_t>(count), 0.0);
    const std::vector<double>& p = t.value(probs);
    for (int64_t g = 0; g < B * h; ++g) {
        const double* row = p.data() + g * T * T;  // cls row is token 0
        for (int64_t j = 0; j < count; ++j) out[static_cast<size_t>(j)] += row[first + j];
    }
    const double inv = 1.0 / static_cast<double>(B * h);
    for (double& v : out) v *= inv;
    return out;
}

Var leaf_images(Tape& tape, const VitModel& model, const Tensor& images, int64_t* batch_out) {
    const VitConfig& cfg = model.cfg;
    if (images.rank() == 2) {
        if (images.shape[0] != cfg.image_size || images.shape[1] != cfg.image_size)
            throw std::invalid_argument("vit: image dims do not match config");
        Tensor b({1, cfg.image_size, cfg.image_size}, images.values);
        *batch_out = 1;
        return tape.leaf(b);
    }
    if (images.rank() != 3 || images.shape[1] != cfg.image_size || images.shape[2] != cfg.image_size)
        throw std::invalid_argument("vit: expected images [B, H, W] matching config, got " + shape_str(images.shape));
    *batch_out = images.shape[0];
    return tape.leaf(images);
}

}  // namespace

Var patch_embed(Tape& tape, const VitModel& model, Var images) {
    GraphCtx g{tape, model, ForwardOptions{}};
    const std::vector<int64_t>& s = tape.shape(images);
    if (s.size() != 3) throw std::invalid_argument("patch_embed: images must be [B, H, W]");
    if (s[1] != model.cfg.image_size || s[2] != model.cfg.image_size)
        throw std::invalid_argument("patch_embed: image dims do not match config");
    g.batch = s[0];
    return embed_tokens(g, images);
}

VitForward vit_forward(Tape& tape, const VitModel& model, const Tensor& images,
                       const PromptSet& prompts, const Distribution& dist,
                       const ForwardOptions& opts) {
    const VitConfig& cfg = model.cfg;
    cfg.validate();
    dist.validate();
    if (prompts.count() != dist.count())
        throw std::invalid_argument("vit_forward: prompt/distribution size mismatch");
    if (prompts.count() > 0 && prompts.dim() != cfg.embed_dim)
        throw std::invalid_argument("vit_forward: prompt dim does not match embed dim");

    int64_t B = 0;
    Var img = leaf_images(tape, model, images, &B);
    GraphCtx g = make_ctx(tape, model, opts, B);

    VitForward out;
    out.prompts = prompts.count() > 0 ? tape.leaf(prompts.values) : Var{};
    if (opts.record_attention) out.cls_prompt_attention.resize(static_cast<size_t>(cfg.num_blocks));

    Var cls = cls_tokens(g);
    Var e = embed_tokens(g, img);
    const int64_t n_e = cfg.num_patches();

    for (int i = 1; i <= cfg.num_blocks; ++i) {
        const std::vector<int64_t> idx = dist.prompts_in_block(i);
        const int64_t r = static_cast<int64_t>(idx.size());
        Var tokens;
        if (r > 0) {
            std::vector<Var> rows;
            rows.reserve(idx.size());
            for (int64_t k : idx) rows.push_back(tape.slice(out.prompts, 0, k, 1));
            Var p = tape.expand_batch(tape.concat(rows, 0), B);  // [B, r, d]
            tokens = tape.concat({cls, p, e}, 1);
        } else {
            tokens = tape.concat({cls, e}, 1);
        }
        Var probs;
        Var y = block_forward(g, g.blocks[static_cast<size_t>(i - 1)], tokens,
                              opts.record_attention ? &probs : nullptr);
        if (opts.record_attention && r > 0) {
            const int64_t T = 1 + r + n_e;
            out.cls_prompt_attention[static_cast<size_t>(i - 1)] =
                cls_row_avg(tape, probs, B, cfg.num_heads, T, 1, r);
        }
        cls = tape.slice(y, 1, 0, 1);
        e = tape.slice(y, 1, 1 + r, n_e);
    }
    out.logits = head_logits(g, cls);
    out.head_w = g.head_w;
    out.head_b = g.head_b;
    return out;
}

VitForward vit_forward_shallow(Tape& tape, const VitModel& model, const Tensor& images,
                               const PromptSet& prompts, const ForwardOptions& opts) {
    const VitConfig& cfg = model.cfg;
    cfg.validate();
    if (prompts.count() > 0 && prompts.dim() != cfg.embed_dim)
        throw std::invalid_argument("vit_forward_shallow: prompt dim does not match embed dim");

    int64_t B = 0;
    Var img = leaf_images(tape, model, images, &B);
    GraphCtx g = make_ctx(tape, model, opts, B);

    VitForward out;
    out.prompts = prompts.count() > 0 ? tape.leaf(prompts.values) : Var{};
    if (opts.record_attention) out.cls_prompt_attention.resize(static_cast<size_t>(cfg.num_blocks));

    Var cls = cls_tokens(g);
    Var e = embed_tokens(g, img);
    const int64_t n = prompts.count();
    Var tokens;
    if (n > 0) {
        Var p = tape.expand_batch(out.prompts, B);  // [B, N, d]
        tokens = tape.concat({cls, p, e}, 1);
    } else {
        tokens = tape.concat({cls, e}, 1);
    }
    const int64_t T = 1 + n + cfg.num_patches();
    for (int i = 1; i <= cfg.num_blocks; ++i) {
        Var probs;
        tokens = block_forward(g, g.blocks[static_cast<size_t>(i - 1)], tokens,
                               opts.record_attention ? &probs : nullptr);
        if (opts.record_attention && n > 0)
            out.cls_prompt_attention[static_cast<size_t>(i - 1)] =
                cls_row_avg(tape, probs, B, cfg.num_heads, T, 1, n);
    }
    Var cls_final = tape.slice(tokens, 1, 0, 1);
    out.logits = head_logits(g, cls_final);
    out.head_w = g.head_w;
    out.head_b = g.head_b;
    return out;
}

LossForward vit_loss(Tape& tape, const VitModel& model, const Tensor& images,
                     const std::vector<int>& labels, const PromptSet& prompts,
                     const Distribution& dist, const ForwardOptions& opts) {
    LossForward lf;
    lf.fwd = vit_forward(tape, model, images, prompts, dist, opts);
    lf.loss = tape.cross_entropy_logits(lf.fwd.logits, labels);
    return lf;
}

std::vector<std::vector<double>> cls_prompt_attention(const VitModel& model, const Tensor& images,
                                                      const PromptSet& prompts, const Distribution& dist) {
    Tape tape;
    ForwardOptions opts;
    opts.record_attention = true;
    VitForward f = vit_forward(tape, model, images, prompts, dist, opts);
    std::vector<std::vector<double>> rows = std::move(f.cls_prompt_attention);
    rows.resize(static_cast<size_t>(model.cfg.num_blocks));
    return rows;
}

}  // namespace provpt
