#include "doctest.h"

#include <cmath>

#include "provpt/checks.hpp"
#include "provpt/vit.hpp"
#include "reference_vit.hpp"

using namespace provpt;

namespace {

VitModel tiny_model(uint64_t seed, int blocks = 2, int dim = 8, int image = 8) {
    VitModel m;
    m.cfg.num_blocks = blocks;
    m.cfg.embed_dim = dim;
    m.cfg.num_heads = 2;
    m.cfg.image_size = image;
    m.cfg.patch_size = 4;
    m.cfg.num_classes = 3;
    Rng rng(seed);
    m.w = VitWeights::random(m.cfg, rng);
    return m;
}

Tensor random_images(int64_t b, int image, uint64_t seed) {
    Rng rng(seed);
    Tensor t({b, image, image});
    for (double& v : t.values) v = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("patch_embed token count and content") {
    VitModel m = tiny_model(1);
    SUBCASE("8x8 image with patch 4 gives 4 tokens") {
        Tape t;
        Var img = t.leaf(random_images(1, 8, 2));
        Var e = patch_embed(t, m, img);
        CHECK(t.shape(e) == std::vector<int64_t>{1, 4, 8});
    }
    SUBCASE("zero image and zero weights leave the position encodings") {
        VitModel z = m;
        z.w.patch_w.fill(0.0);
        z.w.patch_b.fill(0.0);
        Tape t;
        Var img = t.leaf(Tensor({1, 8, 8}, 0.0));
        Var e = patch_embed(t, z, img);
        const std::vector<double>& v = t.value(e);
        CHECK(v == z.w.pos.values);
    }
    SUBCASE("first token matches an independent matrix-product recompute") {
        Tensor img = random_images(1, 8, 3);
        Tape t;
        Var e = patch_embed(t, m, t.leaf(img));
        for (int j = 0; j < 8; ++j) {
            double s = m.w.patch_b.values[static_cast<size_t>(j)];
            for (int u = 0; u < 4; ++u)
                for (int v2 = 0; v2 < 4; ++v2)
                    s += img.values[static_cast<size_t>(u * 8 + v2)] * m.w.patch_w.at(u * 4 + v2, j);
            s += m.w.pos.at(0, j);
            CHECK(t.value(e)[static_cast<size_t>(j)] == doctest::Approx(s).epsilon(1e-13));
        }
    }
    SUBCASE("wrong image size is a contract violation") {
        Tape t;
        Var img = t.leaf(random_images(1, 12, 4));
        CHECK_THROWS_AS(patch_embed(t, m, img), std::invalid_argument);
    }
}

TEST_CASE("forward with every prompt inactive equals the promptless forward") {
    VitModel m = tiny_model(5);
    Tensor img = random_images(2, 8, 6);
    PromptSet prompts(3, 8);
    Rng rng(7);
    prompts.init_uniform(rng);
    Distribution inactive(3, m.cfg.num_blocks);  // all d_k = 0

    Tape t1;
    VitForward f1 = vit_forward(t1, m, img, prompts, inactive);
    Tape t2;
    VitForward f2 = vit_forward(t2, m, img, PromptSet(0, 8), Distribution(0, m.cfg.num_blocks));
    CHECK(t1.value(f1.logits) == t2.value(f2.logits));
}

TEST_CASE("deactivating one prompt is bit-identical to removing it physically") {
    VitModel m = tiny_model(8);
    Tensor img = random_images(2, 8, 9);
    PromptSet prompts(3, 8);
    Rng rng(10);
    prompts.init_uniform(rng);
    Distribution dist(3, m.cfg.num_blocks);
    dist.assignments = {1, 0, 2};  // prompt 1 inactive

    PromptSet removed(2, 8);
    for (int64_t j = 0; j < 8; ++j) {
        removed.row(0)[j] = prompts.row(0)[j];
        removed.row(1)[j] = prompts.row(2)[j];
    }
    Distribution dist2(2, m.cfg.num_blocks);
    dist2.assignments = {1, 2};

    Tape t1;
    VitForward f1 = vit_forward(t1, m, img, prompts, dist);
    Tape t2;
    VitForward f2 = vit_forward(t2, m, img, removed, dist2);
    CHECK(t1.value(f1.logits) == t2.value(f2.logits));
}

TEST_CASE("prompted forward matches the independent reference implementation") {
    VitModel m = tiny_model(12, 3, 8);
    PromptSet prompts(4, 8);
    Rng rng(13);
    prompts.init_uniform(rng);
    Distribution dist = Distribution::uniform(4, 3);
    Tensor img = random_images(2, 8, 14);

    Tape t;
    VitForward f = vit_forward(t, m, img, prompts, dist);
    const std::vector<double>& logits = t.value(f.logits);
    for (int64_t b = 0; b < 2; ++b) {
        refvit::Row expect = refvit::forward(m, img.values.data() + b * 64, prompts, dist);
        for (int c = 0; c < 3; ++c)
            CHECK(logits[static_cast<size_t>(b * 3 + c)] ==
                  doctest::Approx(expect[static_cast<size_t>(c)]).epsilon(1e-10));
    }
}

TEST_CASE("permuting prompts within a block leaves the logits unchanged to 1e-9") {
    VitModel m = tiny_model(15);
    Tensor img = random_images(1, 8, 16);
    PromptSet a(3, 8);
    Rng rng(17);
    a.init_uniform(rng);
    Distribution dist(3, m.cfg.num_blocks);
    dist.assignments = {1, 1, 2};

    PromptSet b(3, 8);  // swap the two block-1 prompts
    for (int64_t j = 0; j < 8; ++j) {
        b.row(0)[j] = a.row(1)[j];
        b.row(1)[j] = a.row(0)[j];
        b.row(2)[j] = a.row(2)[j];
    }
    Tape t1, t2;
    VitForward f1 = vit_forward(t1, m, img, a, dist);
    VitForward f2 = vit_forward(t2, m, img, b, dist);
    for (size_t i = 0; i < t1.value(f1.logits).size(); ++i)
        CHECK(std::fabs(t1.value(f1.logits)[i] - t2.value(f2.logits)[i]) < 1e-9);
}

TEST_CASE("prompt gradient is exactly zero iff the prompt is inactive") {
    VitModel m = tiny_model(18);
    Tensor img = random_images(2, 8, 19);
    PromptSet prompts(3, 8);
    Rng rng(20);
    prompts.init_uniform(rng);
    Distribution dist(3, m.cfg.num_blocks);
    dist.assignments = {1, 0, 2};
    const std::vector<int> labels = {0, 1};

    Tape t;
    LossForward lf = vit_loss(t, m, img, labels, prompts, dist);
    t.backward(lf.loss);
    const std::vector<double>& g = t.grad(lf.fwd.prompts);
    double active_norm = 0.0;
    for (int64_t j = 0; j < 8; ++j) {
        CHECK(g[static_cast<size_t>(8 + j)] == 0.0);  // row of the inactive prompt
        active_norm += std::fabs(g[static_cast<size_t>(j)]) + std::fabs(g[static_cast<size_t>(16 + j)]);
    }
    CHECK(active_norm > 0.0);
}

TEST_CASE("shallow forward") {
    VitModel m = tiny_model(21);
    Tensor img = random_images(2, 8, 22);

    SUBCASE("zero value weights make appended prompts inert") {
        VitModel z = m;
        for (BlockWeights& b : z.w.blocks) {
            b.wv.fill(0.0);
            b.bv.fill(0.0);
        }
        PromptSet prompts(2, 8);
        prompts.values.fill(0.0);
        Tape t1, t2;
        VitForward with = vit_forward_shallow(t1, z, img, prompts);
        VitForward without = vit_forward_shallow(t2, z, img, PromptSet(0, 8));
        for (size_t i = 0; i < t1.value(with.logits).size(); ++i)
            CHECK(t1.value(with.logits)[i] == doctest::Approx(t2.value(without.logits)[i]).epsilon(1e-12));
    }

    SUBCASE("single block: retention is irrelevant after the last block") {
        VitModel one = tiny_model(23, 1, 8);
        PromptSet prompts(2, 8);
        Rng rng(24);
        prompts.init_uniform(rng);
        Distribution dist(2, 1);
        dist.assignments = {1, 1};
        Tape t1, t2;
        VitForward deep = vit_forward(t1, one, img, prompts, dist);
        VitForward shallow = vit_forward_shallow(t2, one, img, prompts);
        CHECK(t1.value(deep.logits) == t2.value(shallow.logits));
    }

    SUBCASE("one prompt, one block, d=2, one head: hand-traceable attention") {
        VitModel hm;
        hm.cfg.num_blocks = 1;
        hm.cfg.embed_dim = 2;
        hm.cfg.num_heads = 1;
        hm.cfg.image_size = 4;
        hm.cfg.patch_size = 4;
        hm.cfg.num_classes = 2;
        hm.cfg.mlp_ratio = 1.0;
        Rng rng(25);
        hm.w = VitWeights::random(hm.cfg, rng);
        PromptSet prompts(1, 2);
        prompts.row(0)[0] = 0.3;
        prompts.row(0)[1] = -0.8;
        Tensor himg = random_images(1, 4, 26);

        Tape t;
        VitForward f = vit_forward_shallow(t, hm, himg, prompts);
        Distribution dist(1, 1);
        dist.assignments = {1};
        refvit::Row expect = refvit::forward(hm, himg.values.data(), prompts, dist);
        // single block: discard and retention agree, so the reference applies
        for (int c = 0; c < 2; ++c)
            CHECK(t.value(f.logits)[static_cast<size_t>(c)] ==
                  doctest::Approx(expect[static_cast<size_t>(c)]).epsilon(1e-12));
    }
}

TEST_CASE("cls->prompt attention rows") {
    VitModel m = tiny_model(27, 3, 8);
    Tensor img = random_images(2, 8, 28);
    PromptSet prompts(3, 8);
    Rng rng(29);
    prompts.init_uniform(rng);
    Distribution dist(3, 3);
    dist.assignments = {2, 2, 0};  // two prompts at block 2, none elsewhere

    std::vector<std::vector<double>> rows = cls_prompt_attention(m, img, prompts, dist);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].empty());
    CHECK(rows[2].empty());
    REQUIRE(rows[1].size() == 2);
    double total = 0.0;
    for (double w : rows[1]) {
        CHECK(w > 0.0);
        CHECK(w < 1.0);
        total += w;
    }
    CHECK(total < 1.0);  // the cls row also covers cls and patch positions
}

TEST_CASE("dropout is deterministic under a seeded stream and off in eval") {
    VitModel m = tiny_model(33);
    m.cfg.drop_rate = 0.3;
    Tensor img = random_images(2, 8, 34);
    PromptSet prompts(2, 8);
    Rng rng(35);
    prompts.init_uniform(rng);
    Distribution dist = Distribution::uniform(2, 2);

    auto run_train = [&](uint64_t seed) {
        Rng drop_rng(seed);
        ForwardOptions opts;
        opts.training = true;
        opts.dropout_rng = &drop_rng;
        Tape t;
        VitForward f = vit_forward(t, m, img, prompts, dist, opts);
        return t.value(f.logits);
    };
    CHECK(run_train(1) == run_train(1));
    CHECK(run_train(1) != run_train(2));

    Tape t1, t2;
    VitForward e1 = vit_forward(t1, m, img, prompts, dist);
    VitForward e2 = vit_forward(t2, m, img, prompts, dist);
    CHECK(t1.value(e1.logits) == t2.value(e2.logits));
}

TEST_CASE("prompt dim mismatch is a contract violation") {
    VitModel m = tiny_model(36);
    Tensor img = random_images(1, 8, 37);
    PromptSet prompts(2, 4);  // wrong dim
    Distribution dist = Distribution::uniform(2, 2);
    Tape t;
    CHECK_THROWS_AS(vit_forward(t, m, img, prompts, dist), std::invalid_argument);
}
