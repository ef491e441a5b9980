#include "doctest.h"

#include <cmath>

#include "provpt/allocator.hpp"
#include "provpt/checks.hpp"

using namespace provpt;

TEST_CASE("encode_state layout") {
    SUBCASE("worked example at L=3") {
        IdlenessReport rep;
        rep.per_prompt = {0.1, -0.2, 0.0};
        rep.per_block = {0.1, -0.2, 0.0};
        Distribution d(3, 3);
        d.assignments = {1, 1, 2};  // counts {2,1,0}, N = 3
        PolicyState s = encode_state(rep, d, 1);
        REQUIRE(s.encoded.size() == 9);
        CHECK(s.encoded[0] == doctest::Approx(0.1));
        CHECK(s.encoded[1] == doctest::Approx(-0.2));
        CHECK(s.encoded[2] == doctest::Approx(0.0));
        CHECK(s.encoded[3] == doctest::Approx(2.0 / 3));
        CHECK(s.encoded[4] == doctest::Approx(1.0 / 3));
        CHECK(s.encoded[5] == doctest::Approx(0.0));
        CHECK(s.encoded[6] == 1.0);
        CHECK(s.encoded[7] == 0.0);
        CHECK(s.encoded[8] == 0.0);
        double onehot_sum = 0.0;
        for (double v : s.pruned_onehot) onehot_sum += v;
        CHECK(onehot_sum == 1.0);
    }
    SUBCASE("an empty block contributes a zero count term") {
        IdlenessReport rep;
        rep.per_prompt = {0.1};
        rep.per_block = {0.1, 0.0};
        Distribution d(1, 2);
        d.assignments = {1};
        PolicyState s = encode_state(rep, d, 1);
        CHECK(s.block_counts[1] == 0.0);
    }
    SUBCASE("deterministic on repeated calls") {
        IdlenessReport rep;
        rep.per_prompt = {0.3, 0.2};
        rep.per_block = {0.5, 0.0};
        Distribution d(2, 2);
        d.assignments = {1, 0};
        PolicyState a = encode_state(rep, d, 2);
        PolicyState b = encode_state(rep, d, 2);
        CHECK(a.encoded == b.encoded);
    }
}

TEST_CASE("sample_action statistics") {
    PpoConfig cfg;
    Rng init(1);
    PpoAgent agent(9, 3, cfg, init);
    // zero the actor output layer so the logits are exactly uniform
    agent.actor().weights[4].fill(0.0);
    agent.actor().weights[5].fill(0.0);
    std::vector<double> state(9, 0.2);

    SUBCASE("uniform logits give uniform action frequencies within 3 sigma") {
        Rng rng(2);
        const int draws = 10000;
        int counts[3] = {0, 0, 0};
        for (int i = 0; i < draws; ++i) {
            auto [a, logp] = agent.sample_action(state, rng);
            CHECK(logp <= 0.0);
            counts[a]++;
        }
        const double expect = draws / 3.0;
        const double sigma = std::sqrt(draws * (1.0 / 3) * (2.0 / 3));
        for (int c : counts) CHECK(std::fabs(c - expect) < 3.0 * sigma);
    }
    SUBCASE("a saturated logit wins essentially always") {
        agent.actor().weights[5].values[1] = 1000.0;
        Rng rng(3);
        for (int i = 0; i < 200; ++i) {
            auto [a, logp] = agent.sample_action(state, rng);
            CHECK(a == 1);
            CHECK(logp == doctest::Approx(0.0).epsilon(1e-9));
        }
    }
    SUBCASE("fixed seed reproduces the action sequence") {
        Rng r1(4), r2(4);
        for (int i = 0; i < 50; ++i) {
            auto [a1, l1] = agent.sample_action(state, r1);
            auto [a2, l2] = agent.sample_action(state, r2);
            CHECK(a1 == a2);
            CHECK(l1 == l2);
        }
    }
}

TEST_CASE("actor softmax is a valid distribution") {
    PpoConfig cfg;
    Rng init(5);
    PpoAgent agent(6, 4, cfg, init);
    Rng rng(6);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> state(6);
        for (double& v : state) v = rng.normal();
        const std::vector<double> p = agent.action_probs(state);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("ppo_update") {
    SUBCASE("empty batch is a contract violation") {
        PpoConfig cfg;
        Rng init(7);
        PpoAgent agent(6, 2, cfg, init);
        CHECK_THROWS_AS(ppo_update(agent, {}), std::invalid_argument);
    }
    SUBCASE("clipped-regime transitions contribute exactly zero actor gradient") {
        CheckResult r = check_ppo_clip_gradient();
        CHECK_MESSAGE(r.pass, r.detail);
    }
    SUBCASE("in-range ratio with positive advantage moves the taken action up") {
        PpoConfig cfg;
        cfg.update_epochs = 1;
        Rng init(8);
        PpoAgent agent(6, 2, cfg, init);
        std::vector<double> state(6, 0.5);
        const std::vector<double> before = agent.action_probs(state);
        PpoAgent::Step step;
        step.state = state;
        step.next_state = state;
        step.action = 0;
        step.log_prob = std::log(before[0]);  // ratio starts at exactly 1
        step.reward = 2.0;
        agent.update({step});
        const std::vector<double> after = agent.action_probs(state);
        CHECK(after[0] > before[0]);
    }
    SUBCASE("single-transition surrogate matches the hand computation") {
        // two actions, known logits; advantage fixed by a zeroed critic
        PpoConfig cfg;
        cfg.update_epochs = 1;
        Rng init(9);
        PpoAgent agent(4, 2, cfg, init);
        for (int i = 0; i < 6; ++i) agent.critic().weights[static_cast<size_t>(i)].fill(0.0);
        std::vector<double> state(4, 1.0);
        const std::vector<double> probs = agent.action_probs(state);
        const double advantage = 1.5;  // = reward since V == 0 everywhere
        const double pi_old = probs[0] / 1.1;  // ratio = 1.1, inside the clip band
        // surrogate value min(r*A, clip(r)*A) = 1.1 * 1.5
        const double r = probs[0] / pi_old;
        const double clipped = std::min(std::max(r, 1.0 - cfg.clip), 1.0 + cfg.clip);
        CHECK(std::min(r * advantage, clipped * advantage) == doctest::Approx(1.1 * 1.5));
    }
}

TEST_CASE("ppo parameter count at L=12 matches the closed form") {
    CheckResult r = check_ppo_param_count();
    CHECK_MESSAGE(r.pass, r.detail);
    CHECK(r.metrics["param_count"] == 13901.0);
    CHECK(r.metrics["published_gap"] < 0.03);
}

TEST_CASE("ppo improves a stationary 2-arm bandit") {
    CheckResult r = check_ppo_bandit_improvement(20, 120);
    CHECK_MESSAGE(r.pass, r.detail);
}

TEST_CASE("thompson-sampling bandit") {
    BanditConfig cfg;
    SUBCASE("posterior mean matches the conjugate closed form") {
        GaussianBandit bandit(3, cfg);
        const int n = 17;
        const double r = 0.8;
        for (int i = 0; i < n; ++i) bandit.update(1, r);
        const double tau2 = cfg.prior_std * cfg.prior_std;
        const double s2 = cfg.obs_std * cfg.obs_std;
        const double expect = (n * r / s2) / (1.0 / tau2 + n / s2);
        CHECK(bandit.posterior_mean(1) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(bandit.posterior_mean(0) == doctest::Approx(0.0));
    }
    SUBCASE("an arm with 100 unit rewards is chosen almost always") {
        GaussianBandit bandit(6, cfg);
        for (int i = 0; i < 100; ++i) bandit.update(2, 1.0);
        Rng rng(10);
        int hits = 0;
        const int trials = 1000;
        for (int i = 0; i < trials; ++i) hits += bandit.sample(rng) == 2 ? 1 : 0;
        CHECK(hits > static_cast<int>(0.95 * trials));
    }
    SUBCASE("no observations gives a roughly symmetric selection") {
        GaussianBandit bandit(4, cfg);
        Rng rng(11);
        int counts[4] = {0, 0, 0, 0};
        const int trials = 8000;
        for (int i = 0; i < trials; ++i) counts[bandit.sample(rng)]++;
        const double expect = trials / 4.0;
        const double sigma = std::sqrt(trials * 0.25 * 0.75);
        for (int c : counts) CHECK(std::fabs(c - expect) < 4.0 * sigma);
    }
}

TEST_CASE("naive joint action space") {
    IdlenessReport rep;
    rep.per_block = {0.1, -0.2, 0.3};
    rep.per_prompt = {0.1, -0.2, 0.3};
    Distribution d(3, 3);
    d.assignments = {1, 2, 3};

    SUBCASE("state is 2L and the action space is L^2") {
        const std::vector<double> s = encode_naive_state(rep, d);
        CHECK(s.size() == 6);
        PpoConfig cfg;
        Rng init(12);
        PpoAgent agent(6, 9, cfg, init);
        CHECK(agent.num_actions() == 9);
    }
    SUBCASE("uniform logits spread over all nine actions") {
        PpoConfig cfg;
        Rng init(13);
        PpoAgent agent(6, 9, cfg, init);
        agent.actor().weights[4].fill(0.0);
        agent.actor().weights[5].fill(0.0);
        const std::vector<double> s = encode_naive_state(rep, d);
        Rng rng(14);
        std::vector<int> counts(9, 0);
        const int draws = 18000;
        for (int i = 0; i < draws; ++i) {
            auto [a, lp] = agent.sample_action(s, rng);
            counts[static_cast<size_t>(a)]++;
        }
        const double expect = draws / 9.0;
        const double sigma = std::sqrt(draws * (1.0 / 9) * (8.0 / 9));
        for (int c : counts) CHECK(std::fabs(c - expect) < 4.0 * sigma);
    }
    SUBCASE("empty source blocks are masked out") {
        Distribution d2(3, 3);
        d2.assignments = {1, 1, 3};  // block 2 empty
        const std::vector<double> mask = naive_action_mask(d2);
        PpoConfig cfg;
        Rng init(15);
        PpoAgent agent(6, 9, cfg, init);
        const std::vector<double> s = encode_naive_state(rep, d2);
        Rng rng(16);
        for (int i = 0; i < 300; ++i) {
            auto [a, lp] = agent.sample_action(s, rng, &mask);
            auto [src, tgt] = naive_action_decode(a, 3);
            CHECK(src != 2);
            CHECK(tgt >= 1);
            CHECK(tgt <= 3);
        }
    }
    SUBCASE("decode covers the grid") {
        CHECK(naive_action_decode(0, 3) == std::pair<int, int>{1, 1});
        CHECK(naive_action_decode(5, 3) == std::pair<int, int>{2, 3});
        CHECK(naive_action_decode(8, 3) == std::pair<int, int>{3, 3});
    }
}
