// algorithms.hpp
//
// End-to-end federated schemes. Each runs against an Environment, charges
// every message it sends at the fixed encodings below, and returns the
// per-agent declared best arms.
//
//   active set        K-bit bitmap
//   estimated mean    one real
//   arm index         ceil(log2 K) bits
//   set S             |S| * ceil(log2 K) bits
//   index within S    ceil(log2 M) bits
//   instruction       1 bit
#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "env.hpp"
#include "errors.hpp"
#include "se.hpp"
#include "union_find.hpp"

namespace fedbai {

enum class Algorithm { naive, cl_bai, bai_cl, bai_cl_pp };

inline constexpr std::array<Algorithm, 4> kAllAlgorithms{Algorithm::naive, Algorithm::cl_bai, Algorithm::bai_cl,
                                                         Algorithm::bai_cl_pp};

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::naive: return "naive";
        case Algorithm::cl_bai: return "cl_bai";
        case Algorithm::bai_cl: return "bai_cl";
        case Algorithm::bai_cl_pp: return "bai_cl_pp";
    }
    return "?";
}

inline std::optional<Algorithm> algorithm_from_string(std::string_view s) {
    for (auto a : kAllAlgorithms)
        if (s == to_string(a)) return a;
    return std::nullopt;
}

// Confidence and pull schedules shared by the runners and the budget calculators.
namespace schedule {

inline double naive_gamma(double delta, std::size_t N) { return delta / static_cast<double>(N); }

inline double cl_bai_phase1_gamma(double delta, std::size_t N, std::size_t K) {
    return std::pow(delta / (12.0 * static_cast<double>(N) * static_cast<double>(K)), 4.0 / 3.0);
}

inline double cl_bai_phase2_gamma(double delta, std::size_t M) { return delta / (2.0 * static_cast<double>(M)); }

// delta * ln(M / (M-1)) / ln(3M / delta); delta / 3 for a single cluster.
inline double bai_cl_phase1_gamma(double delta, std::size_t M) {
    if (M <= 1) return delta / 3.0;
    const double m = static_cast<double>(M);
    return delta * std::log(m / (m - 1.0)) / std::log(3.0 * m / delta);
}

// Number of agents the coupon-collector phase samples with probability >= 1 - delta/3.
inline double coupon_cap(double delta, std::size_t M) {
    if (M <= 1) return 1.0;
    const double m = static_cast<double>(M);
    return std::log(3.0 * m / delta) / std::log(m / (m - 1.0));
}

inline double bai_cl_phase2_gamma(double delta, std::size_t N) { return delta / (3.0 * static_cast<double>(N)); }

inline double bai_cl_pp_phase2_gamma(double delta, std::size_t N) { return delta / (6.0 * static_cast<double>(N)); }

// Extra pulls of a freshly discovered best arm: ceil(32 ln(12 M / delta) / eta1^2).
inline std::uint64_t reference_pull_count(std::size_t M, double delta, double eta1) {
    if (!(eta1 > 0.0)) throw input_error("reference_pull_count: eta1 must be positive");
    return static_cast<std::uint64_t>(
        std::ceil(32.0 * std::log(12.0 * static_cast<double>(M) / delta) / (eta1 * eta1)));
}

}  // namespace schedule

struct ClusterGraph {
    std::vector<std::size_t> vertices;                          // agent ids
    std::vector<std::pair<std::size_t, std::size_t>> edges;     // agent id pairs, first < second
    std::vector<std::vector<std::size_t>> components;           // ascending members, ordered by first member
};

struct RunResult {
    Algorithm algorithm = Algorithm::naive;
    std::vector<std::size_t> best_arm;  // declared best arm per agent
    bool correct = false;               // simulator-side ground truth check
    bool aborted = false;
    std::uint64_t total_pulls = 0;
    double comm_cost = 0.0;
    std::array<std::uint64_t, 2> phase_pulls{0, 0};
    std::vector<std::string> anomalies;
    Ledger ledger;  // counters accumulated during this run

    // clustering-first diagnostics
    std::optional<ClusterGraph> graph;
    std::vector<std::size_t> singleton_agents;
    std::vector<std::size_t> survivor_counts;  // |S_i| per agent after phase 1
    std::vector<std::size_t> representatives;

    // identification-first diagnostics
    std::vector<std::size_t> phase1_agents;     // in sampling order
    std::vector<std::size_t> phase1_set_sizes;  // |S| sent to each sampled agent
    std::vector<std::size_t> discovered_arms;   // S in discovery order
};

struct RunOptions {
    // Worker threads for the agent-parallel sections; results are identical for any value.
    unsigned threads = 1;
};

namespace detail {

inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < count; i += workers) body(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::vector<std::size_t> all_arms(std::size_t K) {
    std::vector<std::size_t> v(K);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

inline void check_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw input_error("delta must lie in (0, 1)");
}

// Sole survivor, or leader plus an anomaly note when SE stopped on its safety ceiling.
inline std::size_t settle(const SEOutcome& se, std::size_t agent, std::vector<std::string>& notes) {
    if (se.survivors.size() > 1)
        notes.push_back("agent " + std::to_string(agent) + ": elimination truncated with " +
                        std::to_string(se.survivors.size()) + " survivors");
    return se.leader();
}

inline void finish(RunResult& res, const Environment& env, const Ledger& before, std::uint64_t phase1_end) {
    res.ledger = env.snapshot().since(before);
    res.total_pulls = res.ledger.total_pulls();
    res.comm_cost = res.ledger.total_comm_cost();
    res.phase_pulls = {phase1_end - before.total_pulls(), res.ledger.total_pulls() + before.total_pulls() - phase1_end};
    const auto& inst = env.instance();
    res.correct = !res.aborted;
    for (std::size_t i = 0; res.correct && i < inst.num_agents(); ++i)
        res.correct = res.best_arm[i] == inst.agent_best_arm(i);
}

}  // namespace detail

// Every agent runs unbounded elimination over all K arms at confidence delta / N.
inline RunResult run_naive(Environment& env, double delta, RunOptions opts = {}) {
    detail::check_delta(delta);
    const std::size_t N = env.num_agents(), K = env.num_arms();
    const Ledger before = env.snapshot();
    RunResult res;
    res.algorithm = Algorithm::naive;
    res.best_arm.assign(N, 0);
    const auto arms = detail::all_arms(K);
    const double gamma = schedule::naive_gamma(delta, N);
    std::vector<std::vector<std::string>> notes(N);
    detail::parallel_for(N, opts.threads, [&](std::size_t i) {
        const auto se = successive_elimination(env, i, arms, gamma, kUnbounded);
        res.best_arm[i] = detail::settle(se, i, notes[i]);
        env.record_message(Direction::up, 0, ceil_log2(K));
    });
    for (auto& n : notes) res.anomalies.insert(res.anomalies.end(), n.begin(), n.end());
    detail::finish(res, env, before, env.snapshot().total_pulls());
    return res;
}

// Edge (i, j) iff |mu_hat^i_k - mu_hat^j_k| <= eta/2 for every k in S_i u S_j.
// `outcomes` is indexed by agent id; `vertices` selects the agents to cluster.
inline ClusterGraph build_cluster_graph(std::span<const SEOutcome> outcomes, std::span<const std::size_t> vertices,
                                        double eta) {
    ClusterGraph g;
    g.vertices.assign(vertices.begin(), vertices.end());
    std::sort(g.vertices.begin(), g.vertices.end());
    const std::size_t n = g.vertices.size();
    UnionFind uf(n);
    const double tol = eta / 2.0;
    std::vector<std::size_t> uni;
    for (std::size_t a = 0; a < n; ++a) {
        const SEOutcome& oi = outcomes[g.vertices[a]];
        for (std::size_t b = a + 1; b < n; ++b) {
            const SEOutcome& oj = outcomes[g.vertices[b]];
            uni.clear();
            std::set_union(oi.survivors.begin(), oi.survivors.end(), oj.survivors.begin(), oj.survivors.end(),
                           std::back_inserter(uni));
            const bool close = std::all_of(uni.begin(), uni.end(), [&](std::size_t k) {
                return std::abs(oi.est_means.at(k) - oj.est_means.at(k)) <= tol;  // NaN -> false
            });
            if (close) {
                g.edges.emplace_back(g.vertices[a], g.vertices[b]);
                uf.unite(a, b);
            }
        }
    }
    std::vector<std::size_t> comp_of_root(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t root = uf.find(a);
        if (comp_of_root[root] == std::numeric_limits<std::size_t>::max()) {
            comp_of_root[root] = g.components.size();
            g.components.emplace_back();
        }
        g.components[comp_of_root[root]].push_back(g.vertices[a]);
    }
    return g;
}

// Clustering first: capped elimination at every agent, cluster by estimate
// agreement, then one representative per cluster finishes elimination on its
// surviving set.
inline RunResult run_cl_bai(Environment& env, double delta, double eta, RunOptions opts = {}) {
    detail::check_delta(delta);
    if (!(eta > 0.0)) throw input_error("run_cl_bai: eta must be positive");
    const auto& inst = env.instance();
    const std::size_t N = env.num_agents(), K = env.num_arms(), M = inst.num_bandits();
    const Ledger before = env.snapshot();
    RunResult res;
    res.algorithm = Algorithm::cl_bai;
    res.best_arm.assign(N, 0);

    const auto arms = detail::all_arms(K);
    const double gamma1 = schedule::cl_bai_phase1_gamma(delta, N, K);
    const unsigned cap = cluster_round_cap(eta);
    std::vector<SEOutcome> outcomes(N);
    detail::parallel_for(N, opts.threads, [&](std::size_t i) {
        outcomes[i] = successive_elimination(env, i, arms, gamma1, cap);
        env.record_message(Direction::up, outcomes[i].survivors.size(), K);
    });

    std::vector<std::size_t> remaining;
    res.survivor_counts.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        res.survivor_counts[i] = outcomes[i].survivors.size();
        if (outcomes[i].survivors.size() == 1) {
            res.best_arm[i] = outcomes[i].survivors.front();
            res.singleton_agents.push_back(i);
        } else {
            remaining.push_back(i);
        }
    }
    const std::uint64_t phase1_end = env.snapshot().total_pulls();

    ClusterGraph graph = build_cluster_graph(outcomes, remaining, eta);
    if (graph.components.size() > M)
        res.anomalies.push_back("components > M (" + std::to_string(graph.components.size()) + " vs " +
                                std::to_string(M) + ")");

    const double gamma2 = schedule::cl_bai_phase2_gamma(delta, M);
    const std::size_t m = graph.components.size();
    std::vector<std::size_t> answers(m);
    std::vector<std::vector<std::string>> notes(m);
    res.representatives.resize(m);
    for (std::size_t c = 0; c < m; ++c) res.representatives[c] = graph.components[c].front();
    detail::parallel_for(m, opts.threads, [&](std::size_t c) {
        const std::size_t rep = res.representatives[c];
        env.record_message(Direction::down, 0, 1);
        const auto se = successive_elimination(env, rep, outcomes[rep].survivors, gamma2, kUnbounded);
        answers[c] = detail::settle(se, rep, notes[c]);
        env.record_message(Direction::up, 0, ceil_log2(K));
    });
    for (std::size_t c = 0; c < m; ++c) {
        for (auto j : graph.components[c]) res.best_arm[j] = answers[c];
        res.anomalies.insert(res.anomalies.end(), notes[c].begin(), notes[c].end());
    }
    res.graph = std::move(graph);
    detail::finish(res, env, before, phase1_end);
    return res;
}

namespace detail {

struct BaiClParams {
    bool verified = false;  // identification-first with reference means and verified phase 2
    double eta1 = 0.0;
};

inline RunResult run_identification_first(Environment& env, double delta, double eta, std::size_t M,
                                          BaiClParams p, RunOptions opts) {
    check_delta(delta);
    if (!(eta > 0.0)) throw input_error("eta must be positive");
    if (M < 1) throw input_error("number of clusters M must be at least 1");
    if (p.verified && !(p.eta1 > 0.0)) throw input_error("eta1 must be positive");
    const std::size_t N = env.num_agents(), K = env.num_arms();
    const std::uint64_t arm_bits = ceil_log2(K);
    const Ledger before = env.snapshot();
    RunResult res;
    res.algorithm = p.verified ? Algorithm::bai_cl_pp : Algorithm::bai_cl;
    res.best_arm.assign(N, 0);

    const auto arms = all_arms(K);
    const double gamma1 = schedule::bai_cl_phase1_gamma(delta, M);
    const unsigned cap = separation_round_cap(eta);
    std::mt19937_64 learner_rng(hash_keys({env.seed(), hash_string("learner")}));

    std::vector<std::size_t> pool(N);  // A, ascending
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> S;        // discovered best arms, discovery order
    std::vector<double> reference(K, std::numeric_limits<double>::quiet_NaN());

    while (S.size() < M) {
        if (pool.empty()) {
            res.aborted = true;
            res.anomalies.push_back("phase 1 exhausted all agents with |S| = " + std::to_string(S.size()) +
                                    " < M = " + std::to_string(M));
            break;
        }
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t slot = pick(learner_rng);
        const std::size_t i = pool[slot];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(slot));
        res.phase1_agents.push_back(i);
        res.phase1_set_sizes.push_back(S.size());
        env.record_message(Direction::down, 0, S.size() * arm_bits);

        const auto se = successive_elimination(env, i, arms, gamma1, cap);
        std::vector<std::size_t> common;
        for (auto a : se.survivors)
            if (std::find(S.begin(), S.end(), a) != S.end()) common.push_back(a);

        std::size_t chosen = 0;
        if (!common.empty()) {
            chosen = common.front();
            if (common.size() > 1) {
                res.anomalies.push_back("agent " + std::to_string(i) + ": intersection size " +
                                        std::to_string(common.size()) + " > 1");
                for (auto a : common)
                    if (se.est_means[a] > se.est_means[chosen]) chosen = a;
            }
            env.record_message(Direction::up, 0, arm_bits);
        } else {
            const auto fin = successive_elimination(env, i, se.survivors, gamma1, kUnbounded);
            chosen = settle(fin, i, res.anomalies);
            env.record_message(Direction::up, 0, arm_bits);
            if (p.verified) {
                reference[chosen] = env.pull_mean(i, chosen, schedule::reference_pull_count(M, delta, p.eta1));
                env.record_message(Direction::up, 1, 0);
            }
            S.push_back(chosen);
            res.discovered_arms.push_back(chosen);
        }
        res.best_arm[i] = chosen;
    }
    const std::uint64_t phase1_end = env.snapshot().total_pulls();

    if (!res.aborted) {
        std::vector<std::size_t> sorted_S = S;
        std::sort(sorted_S.begin(), sorted_S.end());
        const double gamma2 =
            p.verified ? schedule::bai_cl_pp_phase2_gamma(delta, N) : schedule::bai_cl_phase2_gamma(delta, N);
        const std::uint64_t index_bits = ceil_log2(S.size());
        std::vector<std::vector<std::string>> notes(pool.size());
        parallel_for(pool.size(), opts.threads, [&](std::size_t t) {
            const std::size_t i = pool[t];
            env.record_message(Direction::down, 0, S.size() * arm_bits);
            if (p.verified) {
                const auto out = se_hat(env, i, sorted_S, reference, gamma2, eta, p.eta1);
                if (!out.verified) notes[t].push_back("agent " + std::to_string(i) + ": verification phase limit hit");
                res.best_arm[i] = out.arm;
            } else {
                const auto se = successive_elimination(env, i, sorted_S, gamma2, kUnbounded);
                res.best_arm[i] = settle(se, i, notes[t]);
            }
            env.record_message(Direction::up, 0, index_bits);
        });
        for (auto& n : notes) res.anomalies.insert(res.anomalies.end(), n.begin(), n.end());
    }
    finish(res, env, before, phase1_end);
    return res;
}

}  // namespace detail

// Identification first: sample agents until M distinct best arms are known,
// then every remaining agent eliminates over that set only.
inline RunResult run_bai_cl(Environment& env, double delta, double eta, std::size_t M, RunOptions opts = {}) {
    return detail::run_identification_first(env, delta, eta, M, {false, 0.0}, opts);
}

// As run_bai_cl, plus reference means for discovered arms and a verified phase 2.
inline RunResult run_bai_cl_pp(Environment& env, double delta, double eta, double eta1, std::size_t M,
                               RunOptions opts = {}) {
    return detail::run_identification_first(env, delta, eta, M, {true, eta1}, opts);
}

inline nlohmann::json to_json(const RunResult& r) {
    nlohmann::json j{{"algorithm", to_string(r.algorithm)},
                     {"best_arm", r.best_arm},
                     {"correct", r.correct},
                     {"aborted", r.aborted},
                     {"total_pulls", r.total_pulls},
                     {"comm_cost", r.comm_cost},
                     {"phase_pulls", r.phase_pulls},
                     {"anomalies", r.anomalies},
                     {"ledger", to_json(r.ledger)}};
    if (r.graph) {
        j["components"] = r.graph->components;
        j["singleton_agents"] = r.singleton_agents;
        j["representatives"] = r.representatives;
    }
    if (!r.phase1_agents.empty()) {
        j["phase1_agents"] = r.phase1_agents;
        j["discovered_arms"] = r.discovered_arms;
    }
    return j;
}

}  // namespace fedbai
