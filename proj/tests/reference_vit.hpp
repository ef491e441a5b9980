#pragma once

// Independent straight-line forward pass for the prompted transformer, kept
// deliberately free of the tape/kernels machinery: plain nested loops over
// std::vector rows. Used once per oracle test to cross-check vit_forward.

#include <cmath>
#include <vector>

#include "provpt/prompt.hpp"
#include "provpt/vit.hpp"

namespace refvit {

using Row = std::vector<double>;

inline Row layer_norm_row(const Row& x, const provpt::Tensor& g, const provpt::Tensor& b, double eps) {
    const size_t d = x.size();
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    Row out(d);
    for (size_t j = 0; j < d; ++j) out[j] = (x[j] - mu) * rs * g.values[j] + b.values[j];
    return out;
}

inline Row mat_vec_t(const provpt::Tensor& w, const Row& x, const provpt::Tensor& bias) {
    // y = x * w + bias with w [in, out]
    const size_t in = static_cast<size_t>(w.shape[0]);
    const size_t out = static_cast<size_t>(w.shape[1]);
    Row y(out);
    for (size_t j = 0; j < out; ++j) {
        double s = bias.values[j];
        for (size_t i = 0; i < in; ++i) s += x[i] * w.values[i * out + j];
        y[j] = s;
    }
    return y;
}

inline std::vector<Row> block_forward(const provpt::VitConfig& cfg, const provpt::BlockWeights& bw,
                                      const std::vector<Row>& tokens) {
    const size_t T = tokens.size();
    const int h = cfg.num_heads;
    const int hd = cfg.head_dim();
    std::vector<Row> ln1(T);
    for (size_t i = 0; i < T; ++i) ln1[i] = layer_norm_row(tokens[i], bw.ln1_g, bw.ln1_b, cfg.ln_eps);
    std::vector<Row> q(T), k(T), v(T);
    for (size_t i = 0; i < T; ++i) {
        q[i] = mat_vec_t(bw.wq, ln1[i], bw.bq);
        k[i] = mat_vec_t(bw.wk, ln1[i], bw.bk);
        v[i] = mat_vec_t(bw.wv, ln1[i], bw.bv);
    }
    std::vector<Row> ctx(T, Row(static_cast<size_t>(cfg.embed_dim), 0.0));
    for (int head = 0; head < h; ++head) {
        const size_t off = static_cast<size_t>(head * hd);
        for (size_t i = 0; i < T; ++i) {
            std::vector<double> logits(T);
            for (size_t j = 0; j < T; ++j) {
                double s = 0.0;
                for (int c = 0; c < hd; ++c) s += q[i][off + static_cast<size_t>(c)] * k[j][off + static_cast<size_t>(c)];
                logits[j] = s / std::sqrt(static_cast<double>(hd));
            }
            double mx = logits[0];
            for (double l : logits) mx = l > mx ? l : mx;
            double z = 0.0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                z += l;
            }
            for (size_t j = 0; j < T; ++j)
                for (int c = 0; c < hd; ++c)
                    ctx[i][off + static_cast<size_t>(c)] += logits[j] / z * v[j][off + static_cast<size_t>(c)];
        }
    }
    std::vector<Row> out(T);
    for (size_t i = 0; i < T; ++i) {
        Row attn = mat_vec_t(bw.wo, ctx[i], bw.bo);
        Row x1(tokens[i].size());
        for (size_t j = 0; j < x1.size(); ++j) x1[j] = tokens[i][j] + attn[j];
        Row ln2 = layer_norm_row(x1, bw.ln2_g, bw.ln2_b, cfg.ln_eps);
        Row mid = mat_vec_t(bw.w1, ln2, bw.b1);
        for (double& m : mid) m = 0.5 * m * (1.0 + std::erf(m * 0.70710678118654752440));
        Row mlp = mat_vec_t(bw.w2, mid, bw.b2);
        out[i] = x1;
        for (size_t j = 0; j < out[i].size(); ++j) out[i][j] += mlp[j];
    }
    return out;
}

inline std::vector<Row> embed_patches(const provpt::VitModel& m, const double* image) {
    const provpt::VitConfig& cfg = m.cfg;
    const int side = cfg.tokens_per_side();
    std::vector<Row> tokens;
    for (int pr = 0; pr < side; ++pr)
        for (int pc = 0; pc < side; ++pc) {
            Row patch(static_cast<size_t>(cfg.patch_dim()));
            for (int u = 0; u < cfg.patch_size; ++u)
                for (int vcol = 0; vcol < cfg.patch_size; ++vcol)
                    patch[static_cast<size_t>(u * cfg.patch_size + vcol)] =
                        image[(pr * cfg.patch_size + u) * cfg.image_size + pc * cfg.patch_size + vcol];
            Row tok = mat_vec_t(m.w.patch_w, patch, m.w.patch_b);
            const size_t pidx = static_cast<size_t>(pr * side + pc);
            for (size_t j = 0; j < tok.size(); ++j)
                tok[j] += m.w.pos.values[pidx * static_cast<size_t>(cfg.embed_dim) + j];
            tokens.push_back(std::move(tok));
        }
    return tokens;
}

// Deep/discard forward for one image; returns logits.
inline Row forward(const provpt::VitModel& m, const double* image, const provpt::PromptSet& prompts,
                   const provpt::Distribution& dist) {
    const provpt::VitConfig& cfg = m.cfg;
    Row cls(m.w.cls.values);
    std::vector<Row> patches = embed_patches(m, image);
    for (int b = 1; b <= cfg.num_blocks; ++b) {
        std::vector<Row> tokens;
        tokens.push_back(cls);
        const std::vector<int64_t> idx = dist.prompts_in_block(b);
        for (int64_t k : idx) {
            Row p(static_cast<size_t>(prompts.dim()));
            for (int64_t j = 0; j < prompts.dim(); ++j) p[static_cast<size_t>(j)] = prompts.row(k)[j];
            tokens.push_back(std::move(p));
        }
        for (const Row& e : patches) tokens.push_back(e);
        std::vector<Row> out = block_forward(cfg, m.w.blocks[static_cast<size_t>(b - 1)], tokens);
        cls = out[0];
        patches.assign(out.begin() + 1 + static_cast<int64_t>(idx.size()), out.end());
    }
    Row final_cls = layer_norm_row(cls, m.w.ln_f_g, m.w.ln_f_b, cfg.ln_eps);
    return mat_vec_t(m.w.head_w, final_cls, m.w.head_b);
}

}  // namespace refvit
