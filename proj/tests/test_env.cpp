#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "ruledist/env.hpp"
#include "ruledist/errors.hpp"
#include "ruledist/rng.hpp"

using namespace ruledist;

namespace {

ProblemInstance tiny_instance(std::vector<ResourceVector> caps,
                              std::vector<ResourceVector> demands) {
    ProblemInstance inst;
    inst.nodes.push_back(NodeSpec{0, ResourceVector::zero(), true});
    int id = 1;
    for (auto& c : caps) inst.nodes.push_back(NodeSpec{id++, c, false});
    id = 0;
    for (auto& d : demands) inst.rules.push_back(RuleSpec{id++, d});
    return inst;
}

// Plays a full episode with uniformly random legal actions.
EnvState random_episode(const ProblemInstance& inst, RewardKind kind, Rng& rng,
                        std::vector<StepOutcome>* outcomes = nullptr) {
    EnvState s = reset(inst, kind);
    for (int t = 0; t < inst.num_rules(); ++t) {
        const auto mask = pointer_mask(s, t);
        std::vector<int> legal;
        for (int j = 0; j < static_cast<int>(mask.size()); ++j) {
            if (mask[j]) legal.push_back(j);
        }
        const int a = legal[rng.next_below(legal.size())];
        const auto out = step(s, t, a);
        if (outcomes) outcomes->push_back(out);
    }
    return s;
}

}  // namespace

TEST_CASE("reset yields a pristine state") {
    const auto inst = tiny_instance({{{1, 1, 1}}, {{0.5, 0.5, 0.5}}},
                                    {{{0.2, 0.2, 0.2}}, {{0.1, 0.1, 0.1}}});
    const auto s = reset(inst, RewardKind::CostAware);
    CHECK(s.step == 0);
    CHECK(s.reward_kind == RewardKind::CostAware);
    CHECK_FALSE(s.done());
    for (const auto& u : s.used) CHECK(u == ResourceVector::zero());
    for (const auto st : s.rule_status) CHECK(st == RuleStatus::Pending);

    const auto s2 = reset(inst, RewardKind::CostAware);
    CHECK(s2.used == s.used);
    CHECK(s2.step == s.step);
}

TEST_CASE("greedy rewards: 1 for accepted, 0 for rejected") {
    const auto inst = tiny_instance({{{1, 1, 1}}}, {{{0.3, 0.3, 0.3}}, {{0.2, 0.2, 0.2}}});
    auto s = reset(inst, RewardKind::Greedy);
    auto out = step(s, 0, 1);
    CHECK(out.reward == doctest::Approx(1.0));
    CHECK(out.accepted);
    CHECK_FALSE(out.done);
    out = step(s, 1, 0);
    CHECK(out.reward == doctest::Approx(0.0));
    CHECK_FALSE(out.accepted);
    CHECK(out.done);
}

TEST_CASE("critical-aware rewards") {
    // Single node [1,1,1], first placement of [0.3,0.3,0.3] leaves omega 0.7.
    const auto inst = tiny_instance({{{1, 1, 1}}}, {{{0.3, 0.3, 0.3}}, {{0.1, 0.1, 0.1}}});
    auto s = reset(inst, RewardKind::CriticalAware);
    auto out = step(s, 0, 1);
    CHECK(out.reward == doctest::Approx(0.7));
    out = step(s, 1, 0);
    CHECK(out.reward == doctest::Approx(-2.0));

    // Two nodes: placing [0.4,...] on node 1 leaves min(0.6, 1.0) = 0.6.
    const auto inst2 = tiny_instance({{{1, 1, 1}}, {{1, 1, 1}}}, {{{0.4, 0.4, 0.4}}});
    auto s2 = reset(inst2, RewardKind::CriticalAware);
    CHECK(step(s2, 0, 1).reward == doctest::Approx(0.6));

    // Overridable constants.
    auto s3 = reset(inst, RewardKind::CriticalAware, RewardParams{-5.0, -1.0});
    CHECK(step(s3, 0, 0).reward == doctest::Approx(-5.0));
}

TEST_CASE("cost-aware rewards") {
    const auto inst = tiny_instance({{{1, 1, 1}}, {{1, 1, 1}}},
                                    {{{0.2, 0.2, 0.2}}, {{0.2, 0.2, 0.2}}, {{0.2, 0.2, 0.2}}});
    auto s = reset(inst, RewardKind::CostAware);
    CHECK(step(s, 0, 1).reward == doctest::Approx(-1.0));  // empty node used
    CHECK(step(s, 1, 1).reward == doctest::Approx(0.0));   // node already busy
    CHECK(step(s, 2, 0).reward == doctest::Approx(-2.0));  // rejection
}

TEST_CASE("reward_critical computes on the post-transition state") {
    const auto inst = tiny_instance({{{1, 1, 1}}}, {{{0.3, 0.3, 0.3}}});
    auto s = reset(inst, RewardKind::CriticalAware);
    step(s, 0, 1);
    CHECK(reward_critical(s, true) == doctest::Approx(0.7));
    CHECK(reward_critical(s, false) == doctest::Approx(-2.0));
}

TEST_CASE("illegal actions are bugs, not control flow") {
    const auto inst = tiny_instance({{{0.1, 0.1, 0.1}}}, {{{0.2, 0.2, 0.2}}, {{0.05, 0.05, 0.05}}});
    auto s = reset(inst, RewardKind::Greedy);
    CHECK_THROWS_AS(step(s, 0, 1), ContractError);  // does not fit
    step(s, 0, 0);
    CHECK_THROWS_AS(step(s, 0, 0), ContractError);  // already decided
    CHECK_THROWS_AS(step(s, 1, 7), ContractError);  // no such node
}

TEST_CASE("pointer_mask semantics") {
    const auto inst = tiny_instance({{{0.2, 0.2, 0.2}}, {{1, 1, 1}}},
                                    {{{0.2, 0.2, 0.2}}, {{0.3, 0.3, 0.3}}});
    auto s = reset(inst, RewardKind::Greedy);
    auto mask = pointer_mask(s, 0);
    CHECK(mask[0]);
    CHECK(mask[1]);  // exact boundary: cap - used == demand
    CHECK(mask[2]);
    mask = pointer_mask(s, 1);
    CHECK(mask[0]);
    CHECK_FALSE(mask[1]);
    CHECK(mask[2]);

    // Saturate both nodes: only the reject node stays available.
    step(s, 0, 1);
    auto s2 = s;
    const auto m2 = pointer_mask(s2, 1);
    CHECK(m2[0]);
    CHECK_FALSE(m2[1]);
    CHECK(m2[2]);
}

TEST_CASE("encoder_masks hide placed rules and saturated nodes") {
    const auto inst = tiny_instance({{{0.3, 0.3, 0.3}}, {{1, 1, 1}}},
                                    {{{0.3, 0.3, 0.3}}, {{0.1, 0.1, 0.1}}});
    auto s = reset(inst, RewardKind::Greedy);
    auto m = encoder_masks(s);
    CHECK(m.node_mask == std::vector<bool>{true, true, true});
    CHECK(m.rule_mask == std::vector<bool>{true, true});

    step(s, 0, 1);  // node 1 saturated to zero slack, rule 0 placed
    m = encoder_masks(s);
    CHECK(m.node_mask == std::vector<bool>{true, false, true});
    CHECK(m.rule_mask == std::vector<bool>{false, true});
}

TEST_CASE("state_features") {
    const auto inst = tiny_instance({{{0.8, 0.6, 0.4}}}, {{{0.1, 0.2, 0.3}}, {{0.2, 0.2, 0.2}}});
    auto s = reset(inst, RewardKind::Greedy);
    auto f = state_features(s, RewardKind::Greedy);
    CHECK(f.node_dim == 3);
    REQUIRE(f.node_feats.size() == 6);
    CHECK(f.node_feats[3] == doctest::Approx(0.8));
    CHECK(f.node_feats[4] == doctest::Approx(0.6));
    CHECK(f.node_feats[5] == doctest::Approx(0.4));
    CHECK(f.rule_feats[3] == doctest::Approx(0.2));

    // Cost-aware adds the busy bit; the reject node always reads 0.
    auto sc = reset(inst, RewardKind::CostAware);
    step(sc, 0, 1);
    f = state_features(sc, RewardKind::CostAware);
    CHECK(f.node_dim == 4);
    REQUIRE(f.node_feats.size() == 8);
    CHECK(f.node_feats[3] == doctest::Approx(0.0));  // reject busy bit
    CHECK(f.node_feats[4] == doctest::Approx(0.7));  // remaining after placement
    CHECK(f.node_feats[7] == doctest::Approx(1.0));  // busy bit set
}

TEST_CASE("undiscounted greedy return equals the accepted count") {
    GeneratorConfig cfg;
    cfg.num_nodes = 4;
    cfg.num_rules = 10;
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = generate_instance(cfg, 4000 + static_cast<std::uint64_t>(trial));
        std::vector<StepOutcome> outs;
        const auto s = random_episode(inst, RewardKind::Greedy, rng, &outs);
        double ret = 0.0;
        int accepted = 0;
        for (const auto& o : outs) {
            ret += o.reward;
            accepted += o.accepted;
        }
        CHECK(ret == doctest::Approx(accepted));
        CHECK(s.done());
    }
}

TEST_CASE("critical-aware omega sequence is non-increasing at accepting steps") {
    GeneratorConfig cfg;
    cfg.num_nodes = 3;
    cfg.num_rules = 12;
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const auto inst = generate_instance(cfg, 8800 + static_cast<std::uint64_t>(trial));
        EnvState s = reset(inst, RewardKind::CriticalAware);
        double last_omega = 1.0;
        for (int t = 0; t < inst.num_rules(); ++t) {
            const auto mask = pointer_mask(s, t);
            std::vector<int> legal;
            for (int j = 0; j < static_cast<int>(mask.size()); ++j) {
                if (mask[j]) legal.push_back(j);
            }
            const int a = legal[rng.next_below(legal.size())];
            const auto out = step(s, t, a);
            if (out.accepted) {
                CHECK(out.reward <= last_omega + 1e-12);
                last_omega = out.reward;
            }
        }
    }
}

TEST_CASE("cost-aware return decomposes into rejections and busy nodes") {
    GeneratorConfig cfg;
    cfg.num_nodes = 4;
    cfg.num_rules = 10;
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = generate_instance(cfg, 2700 + static_cast<std::uint64_t>(trial));
        std::vector<StepOutcome> outs;
        const auto s = random_episode(inst, RewardKind::CostAware, rng, &outs);
        double ret = 0.0;
        for (const auto& o : outs) ret += o.reward;
        int rejected = 0;
        for (const auto st : s.rule_status) rejected += (st == RuleStatus::Rejected);
        int busy = 0;
        for (std::size_t j = 1; j < s.placed_count.size(); ++j) busy += (s.placed_count[j] > 0);
        CHECK(-ret == doctest::Approx(2.0 * rejected + busy));
    }
}

TEST_CASE("capacity invariant holds under random legal play") {
    GeneratorConfig cfg;
    cfg.num_nodes = 5;
    cfg.num_rules = 15;
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const auto inst = generate_instance(cfg, 6100 + static_cast<std::uint64_t>(trial));
        EnvState s = reset(inst, RewardKind::Greedy);
        for (int t = 0; t < inst.num_rules(); ++t) {
            const auto mask = pointer_mask(s, t);
            CHECK(mask[0]);  // the reject node is always available
            std::vector<int> legal;
            for (int j = 0; j < static_cast<int>(mask.size()); ++j) {
                if (mask[j]) legal.push_back(j);
            }
            step(s, t, legal[rng.next_below(legal.size())]);
            for (std::size_t j = 1; j < s.instance.nodes.size(); ++j) {
                for (std::size_t m = 0; m < kNumResources; ++m) {
                    CHECK(s.used[j][m] <= s.instance.nodes[j].capacity[m] + kFeasibilityEps);
                }
            }
            CHECK(s.used[0] == ResourceVector::zero());
        }
        CHECK(s.step == inst.num_rules());
    }
}

TEST_CASE("episode trace is valid JSONL") {
    const auto inst = tiny_instance({{{1, 1, 1}}}, {{{0.3, 0.3, 0.3}}, {{0.2, 0.2, 0.2}}});
    auto s = reset(inst, RewardKind::Greedy);
    EpisodeTrace trace;
    auto out = step(s, 0, 1);
    trace.record(s, 0, 1, out);
    out = step(s, 1, 0);
    trace.record(s, 1, 0, out);

    const auto& text = trace.text();
    CHECK(text.find("\"step\":1") != std::string::npos);
    CHECK(text.find("\"done\":true") != std::string::npos);
    CHECK(text.find("\"omega_max\":0.7") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}
