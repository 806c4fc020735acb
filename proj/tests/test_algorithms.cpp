// test_algorithms.cpp
#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include <fedbai/algorithms.hpp>

using namespace fedbai;

namespace {

Instance mapped(Instance inst, std::size_t N, double alpha = kBalanced, std::uint64_t seed = 0) {
    inst.mapping = assign_agents(N, inst.num_bandits(), alpha, seed);
    return inst;
}

RunResult run(Algorithm a, Environment& env, double delta, RunOptions opts = {}) {
    const auto& inst = env.instance();
    const std::size_t M = inst.occupied_bandits();
    switch (a) {
        case Algorithm::naive: return run_naive(env, delta, opts);
        case Algorithm::cl_bai: return run_cl_bai(env, delta, inst.eta, opts);
        case Algorithm::bai_cl: return run_bai_cl(env, delta, inst.eta, M, opts);
        case Algorithm::bai_cl_pp: return run_bai_cl_pp(env, delta, inst.eta, inst.eta1, M, opts);
    }
    return {};
}

SEOutcome outcome(std::vector<std::size_t> survivors, std::vector<double> means) {
    SEOutcome o;
    o.survivors = std::move(survivors);
    o.est_means = std::move(means);
    return o;
}

bool pure(const ClusterGraph& g, const Instance& inst) {
    for (const auto& c : g.components)
        for (auto j : c)
            if (inst.mapping[j] != inst.mapping[c.front()]) return false;
    return true;
}

}  // namespace

TEST(Names, RoundTrip) {
    for (auto a : kAllAlgorithms) EXPECT_EQ(algorithm_from_string(to_string(a)), a);
    EXPECT_FALSE(algorithm_from_string("lucb").has_value());
}

TEST(Schedule, FrozenValues) {
    EXPECT_NEAR(schedule::bai_cl_phase1_gamma(0.1, 20), 0.1 * std::log(20.0 / 19.0) / std::log(600.0), 1e-15);
    EXPECT_NEAR(schedule::bai_cl_phase1_gamma(0.1, 20), 8.018e-4, 5e-7);
    EXPECT_NEAR(schedule::coupon_cap(0.1, 20), 124.7128, 1e-4);  // ln 600 / ln(20/19)
    EXPECT_EQ(std::ceil(schedule::coupon_cap(0.1, 20)), 125.0);
    // ceil(32 ln 720 / 0.026^2) = ceil(311443.84)
    EXPECT_EQ(schedule::reference_pull_count(6, 0.1, 0.026), 311444u);
    EXPECT_DOUBLE_EQ(schedule::bai_cl_phase1_gamma(0.3, 1), 0.1);
    EXPECT_DOUBLE_EQ(schedule::naive_gamma(0.1, 4), 0.025);
    EXPECT_DOUBLE_EQ(schedule::cl_bai_phase1_gamma(0.1, 30, 10), std::pow(0.1 / 3600.0, 4.0 / 3.0));
    EXPECT_DOUBLE_EQ(schedule::cl_bai_phase2_gamma(0.1, 3), 0.1 / 6);
    EXPECT_DOUBLE_EQ(schedule::bai_cl_phase2_gamma(0.1, 10), 0.1 / 30);
    EXPECT_DOUBLE_EQ(schedule::bai_cl_pp_phase2_gamma(0.1, 10), 0.1 / 60);
}

TEST(Naive, SingleArmSingleAgent) {
    Instance inst;
    inst.means = MeanMatrix::from_rows({{0.4}});
    inst.mapping = {0};
    Environment env(inst, 1);
    const auto r = run_naive(env, 0.1);
    EXPECT_EQ(r.best_arm, std::vector<std::size_t>{0});
    EXPECT_EQ(r.total_pulls, 0u);
    EXPECT_TRUE(r.correct);
}

TEST(Naive, CommCostDatasetOne) {
    Environment env(mapped(gen_fixed_small(), 6), 3);
    const auto r = run_naive(env, 0.1);
    EXPECT_EQ(r.comm_cost, 24.0);
    EXPECT_EQ(r.ledger.up_bits, 24u);
    EXPECT_EQ(r.ledger.reals(), 0u);
}

TEST(Naive, DeltaPCOnDatasetOne) {
    int errors = 0;
    for (int t = 0; t < 200; ++t) {
        Environment env(mapped(gen_fixed_small(), 6), 100 + t);
        errors += !run_naive(env, 0.1).correct;
    }
    EXPECT_LE(errors, 20);
}

TEST(ClusterGraph, IdenticalEstimatesConnect) {
    std::vector<SEOutcome> o{outcome({0, 1}, {0.5, 0.4}), outcome({0, 1}, {0.5, 0.4})};
    const std::vector<std::size_t> v{0, 1};
    const auto g = build_cluster_graph(o, v, 0.2);
    EXPECT_EQ(g.edges.size(), 1u);
    ASSERT_EQ(g.components.size(), 1u);
    EXPECT_EQ(g.components[0], (std::vector<std::size_t>{0, 1}));
}

TEST(ClusterGraph, StrictBoundary) {
    const double eta = 0.2;
    std::vector<SEOutcome> o{outcome({0, 1}, {0.5, 0.4}), outcome({0, 1}, {0.5 + eta / 2 + 1e-9, 0.4})};
    const std::vector<std::size_t> v{0, 1};
    EXPECT_TRUE(build_cluster_graph(o, v, eta).edges.empty());
    o[1].est_means[0] = 0.5 + eta / 2 - 1e-9;
    EXPECT_EQ(build_cluster_graph(o, v, eta).edges.size(), 1u);
}

TEST(ClusterGraph, TransitiveClosure) {
    std::vector<SEOutcome> o{outcome({0}, {0.0}), outcome({0}, {0.08}), outcome({0}, {0.16})};
    const std::vector<std::size_t> v{0, 1, 2};
    const auto g = build_cluster_graph(o, v, 0.2);
    EXPECT_EQ(g.edges.size(), 2u);  // (0,1), (1,2) but not (0,2)
    ASSERT_EQ(g.components.size(), 1u);
    EXPECT_EQ(g.components[0], (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ClusterGraph, UsesUnionOfSurvivorSetsWithFrozenEstimates) {
    // Agents agree on arm 0 but arm 1 (eliminated by agent 1, frozen low) differs.
    std::vector<SEOutcome> o{outcome({0, 1}, {0.9, 0.8}), outcome({0}, {0.9, 0.1})};
    const std::vector<std::size_t> v{0, 1};
    EXPECT_TRUE(build_cluster_graph(o, v, 0.2).edges.empty());
}

TEST(ClusterGraph, ComponentsPartitionVertexSubset) {
    std::vector<SEOutcome> o{outcome({0}, {0.0}), outcome({0}, {1.0}), outcome({0}, {0.01}), outcome({0}, {1.0})};
    const std::vector<std::size_t> v{3, 1, 0};
    const auto g = build_cluster_graph(o, v, 0.2);
    EXPECT_EQ(g.vertices, (std::vector<std::size_t>{0, 1, 3}));
    std::multiset<std::size_t> all;
    for (const auto& c : g.components) all.insert(c.begin(), c.end());
    EXPECT_EQ(all, (std::multiset<std::size_t>{0, 1, 3}));
    EXPECT_EQ(g.components.size(), 2u);
}

TEST(ClBai, SingleClusterHasOneRepresentative) {
    Instance inst;
    inst.means = MeanMatrix::from_rows({{0.2, 0.5, 0.45, 0.1}});
    inst.eta = 0.05;
    inst.mapping.assign(8, 0);
    Environment env(inst, 5);
    const auto r = run_cl_bai(env, 0.1, 0.05);
    ASSERT_TRUE(r.graph.has_value());
    EXPECT_LE(r.graph->components.size(), 1u);
    EXPECT_LE(r.representatives.size(), 1u);
    EXPECT_TRUE(r.correct);
    if (!r.graph->components.empty()) {
        EXPECT_EQ(r.graph->components[0].size(), 8u - r.singleton_agents.size());
    }
}

TEST(ClBai, DeltaPCAndPurityOnDatasetOne) {
    int errors = 0, pure_runs = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        Environment env(mapped(gen_fixed_small(), 30), 2000 + t);
        const auto r = run_cl_bai(env, 0.1, 0.3);
        errors += !r.correct;
        pure_runs += pure(*r.graph, env.instance());
        if (r.correct) {
            EXPECT_TRUE(pure(*r.graph, env.instance()));
        }
    }
    EXPECT_LE(errors, 20);
    EXPECT_GE(pure_runs, static_cast<int>(0.9 * trials));
}

TEST(ClBai, PhaseOnePerArmPullsWithinCappedSchedule) {
    const std::size_t N = 30, K = 10;
    Environment env(mapped(gen_fixed_small(), N), 8);
    const auto r = run_cl_bai(env, 0.1, 0.3);
    const double g = schedule::cl_bai_phase1_gamma(0.1, N, K);
    const std::uint64_t cap_target = round_pull_count(K, cluster_round_cap(0.3), g);
    EXPECT_EQ(cluster_round_cap(0.3), 6u);
    // Singleton agents never enter phase 2, so their ledger is phase-1 only.
    for (auto i : r.singleton_agents)
        for (std::size_t k = 0; k < K; ++k) EXPECT_LE(r.ledger.pulls_at(i, k), cap_target);
}

TEST(ClBai, AllSingletonsIsNotAnomalous) {
    Environment env(mapped(gen_uniform_gap(5, 20, 0.5), 50), 3);
    const auto r = run_cl_bai(env, 1e-3, 0.5);
    EXPECT_EQ(r.singleton_agents.size(), 50u);
    EXPECT_TRUE(r.graph->components.empty());
    EXPECT_TRUE(r.anomalies.empty());
    EXPECT_TRUE(r.correct);
}

TEST(ClBai, CommunicationMatchesEncodings) {
    const std::size_t N = 12, K = 10;
    const CostModel c;
    Environment env(mapped(gen_fixed_small(), N), 6, c);
    const auto r = run_cl_bai(env, 0.1, 0.3);
    std::uint64_t sum_s = 0;
    for (auto s : r.survivor_counts) sum_s += s;
    const double m = static_cast<double>(r.graph->components.size());
    const double expected = static_cast<double>(N * K) * c.cost_bit + static_cast<double>(sum_s) * c.cost_real +
                            m * c.cost_bit + m * static_cast<double>(ceil_log2(K)) * c.cost_bit;
    EXPECT_DOUBLE_EQ(r.comm_cost, expected);
}

TEST(BaiCl, ExhaustionCase) {
    Environment env(mapped(gen_uniform_gap(2, 2, 0.5), 2), 1);
    const auto r = run_bai_cl(env, 0.1, 0.5, 2);
    EXPECT_EQ(r.phase1_agents.size(), 2u);
    EXPECT_EQ(r.phase_pulls[1], 0u);
    EXPECT_TRUE(r.correct);
}

TEST(BaiCl, AbortsOnMisSpecifiedM) {
    Environment env(mapped(gen_uniform_gap(3, 3, 0.5), 4), 1);
    const auto r = run_bai_cl(env, 0.1, 0.5, 4);
    EXPECT_TRUE(r.aborted);
    EXPECT_FALSE(r.correct);
    EXPECT_EQ(r.phase1_agents.size(), 4u);
}

TEST(BaiCl, SetGrowthProperty) {
    for (int t = 0; t < 30; ++t) {
        Environment env(mapped(gen_fixed_small(), 20, 0.0, t), 300 + t);
        const auto r = run_bai_cl(env, 0.1, 0.3, env.instance().occupied_bandits());
        ASSERT_EQ(r.phase1_set_sizes.size(), r.phase1_agents.size());
        std::size_t expected = 0;
        std::set<std::size_t> seen;
        for (std::size_t s = 0; s < r.phase1_agents.size(); ++s) {
            EXPECT_EQ(r.phase1_set_sizes[s], expected);
            if (seen.insert(r.best_arm[r.phase1_agents[s]]).second) ++expected;
        }
        EXPECT_EQ(r.discovered_arms.size(), env.instance().occupied_bandits());
        EXPECT_EQ(std::set<std::size_t>(r.discovered_arms.begin(), r.discovered_arms.end()).size(),
                  r.discovered_arms.size());
    }
}

TEST(BaiCl, SingleClusterDegenerateCase) {
    Instance inst;
    inst.means = MeanMatrix::from_rows({{0.2, 0.9, 0.4}});
    inst.eta = 0.5;
    inst.mapping.assign(5, 0);
    Environment env(inst, 3);
    const auto r = run_bai_cl(env, 0.1, 0.5, 1);
    EXPECT_EQ(r.phase1_agents.size(), 1u);
    EXPECT_TRUE(r.correct);
}

TEST(BaiCl, CouponCollectorCap) {
    const auto base = gen_uniform_gap(20, 25, 0.3);
    int within = 0;
    const int trials = 30;
    for (int t = 0; t < trials; ++t) {
        Environment env(mapped(base, 2000, 0.0, t), 40 + t);
        const auto r = run_bai_cl(env, 0.1, 0.3, 20);
        within += r.phase1_agents.size() <= 125;
    }
    EXPECT_GE(within, static_cast<int>(0.9 * trials));
}

TEST(BaiCl, CommunicationSchedule) {
    const std::size_t N = 10, K = 10;
    Environment env(mapped(gen_fixed_small(), N), 11);
    const auto r = run_bai_cl(env, 0.1, 0.3, 3);
    const std::uint64_t b = ceil_log2(K);
    std::uint64_t down = 0, up = 0;
    for (auto s : r.phase1_set_sizes) down += s * b;
    up += r.phase1_agents.size() * b;
    const std::size_t rest = N - r.phase1_agents.size();
    down += rest * 3 * b;
    up += rest * ceil_log2(3);
    EXPECT_EQ(r.ledger.down_bits, down);
    EXPECT_EQ(r.ledger.up_bits, up);
    EXPECT_EQ(r.ledger.reals(), 0u);
}

TEST(BaiClPP, ReferencePullsAndExtraReals) {
    const auto inst = mapped(gen_fixed_small(), 12);
    Environment a(inst, 19), b(inst, 19);
    const auto plain = run_bai_cl(a, 0.1, 0.3, 3);
    const auto pp = run_bai_cl_pp(b, 0.1, 0.3, 0.3, 3);
    EXPECT_EQ(plain.phase1_agents, pp.phase1_agents);
    EXPECT_EQ(pp.comm_cost - plain.comm_cost, 3 * 32.0);
    EXPECT_EQ(pp.ledger.up_reals, 3u);
    EXPECT_EQ(pp.phase_pulls[0] - plain.phase_pulls[0], 3 * schedule::reference_pull_count(3, 0.1, 0.3));
}

TEST(BaiClPP, DeltaPCOnTwoClusters) {
    int errors = 0;
    for (int t = 0; t < 200; ++t) {
        Environment env(mapped(gen_uniform_gap(2, 4, 0.2), 10), 600 + t);
        errors += !run_bai_cl_pp(env, 0.05, 0.2, 0.2, 2).correct;
    }
    EXPECT_LE(errors, 10);
}

TEST(AllAlgorithms, ConservationProperty) {
    for (auto a : kAllAlgorithms)
        for (int t = 0; t < 10; ++t) {
            Environment env(mapped(gen_fixed_small(), 9, 0.0, t), 70 + t);
            env.pull_mean(0, 0, 17);  // pre-existing pulls are excluded from the run
            env.record_message(Direction::up, 1, 1);
            const auto before = env.snapshot();
            const auto r = run(a, env, 0.1);
            const auto delta = env.snapshot().since(before);
            EXPECT_EQ(r.total_pulls, delta.total_pulls()) << to_string(a);
            EXPECT_EQ(r.phase_pulls[0] + r.phase_pulls[1], r.total_pulls) << to_string(a);
            EXPECT_DOUBLE_EQ(r.comm_cost, delta.total_comm_cost()) << to_string(a);
            EXPECT_EQ(r.best_arm.size(), 9u);
            for (auto k : r.best_arm) EXPECT_LT(k, 10u);
        }
}

TEST(AllAlgorithms, DeltaPCOnDatasetOne) {
    for (auto a : kAllAlgorithms) {
        int errors = 0;
        for (int t = 0; t < 100; ++t) {
            Environment env(mapped(gen_fixed_small(), 12), 4000 + t);
            errors += !run(a, env, 0.1).correct;
        }
        EXPECT_LE(errors, 10) << to_string(a);
    }
}

TEST(AllAlgorithms, ThreadedRunsMatchSequential) {
    for (auto a : kAllAlgorithms) {
        const auto inst = mapped(gen_random_separated(4, 12, 0.2, 3), 16, 0.0, 3);
        Environment s(inst, 55), p(inst, 55);
        const auto rs = run(a, s, 0.05, {1});
        const auto rp = run(a, p, 0.05, {4});
        EXPECT_EQ(rs.best_arm, rp.best_arm) << to_string(a);
        EXPECT_EQ(rs.ledger, rp.ledger) << to_string(a);
        EXPECT_EQ(rs.anomalies, rp.anomalies) << to_string(a);
    }
}

TEST(AllAlgorithms, ReplayIsDeterministic) {
    for (auto a : kAllAlgorithms) {
        const auto inst = mapped(gen_fixed_small(), 10);
        Environment x(inst, 8), y(inst, 8);
        EXPECT_EQ(to_json(run(a, x, 0.1)), to_json(run(a, y, 0.1))) << to_string(a);
    }
}

TEST(AllAlgorithms, RejectBadParameters) {
    Environment env(mapped(gen_fixed_small(), 3), 1);
    EXPECT_THROW(run_naive(env, 0.0), input_error);
    EXPECT_THROW(run_cl_bai(env, 0.1, 0.0), input_error);
    EXPECT_THROW(run_bai_cl(env, 1.0, 0.3, 3), input_error);
    EXPECT_THROW(run_bai_cl(env, 0.1, 0.3, 0), input_error);
    EXPECT_THROW(run_bai_cl_pp(env, 0.1, 0.3, 0.0, 3), input_error);
}

TEST(Communication, ClBaiCostsMoreThanBaiClWhenSetsAreSmall) {
    // M * ceil(log2 K) <= K * c_r / c_b
    const auto inst = mapped(gen_random_separated(3, 16, 0.2, 4), 24);
    double cl = 0.0, bc = 0.0;
    for (int t = 0; t < 10; ++t) {
        Environment a(inst, 90 + t), b(inst, 90 + t);
        cl += run_cl_bai(a, 0.1, 0.2).comm_cost;
        bc += run_bai_cl(b, 0.1, 0.2, 3).comm_cost;
    }
    EXPECT_GT(cl, bc);
}

TEST(Json, RunResultFields) {
    Environment env(mapped(gen_fixed_small(), 6), 2);
    const auto j = to_json(run_cl_bai(env, 0.1, 0.3));
    EXPECT_EQ(j["algorithm"], "cl_bai");
    EXPECT_TRUE(j.contains("components"));
    EXPECT_EQ(j["ledger"]["total_pulls"], j["total_pulls"]);
}
