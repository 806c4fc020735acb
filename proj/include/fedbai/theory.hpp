// theory.hpp
//
// Deterministic pull-count calculators: change-of-measure lower bounds and
// explicit-constant upper budgets for each scheme.
//
// Divergence convention: D(a, b) = (a - b)^2 for unit-variance Gaussians (no 1/2).
#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "algorithms.hpp"
#include "errors.hpp"
#include "instance.hpp"
#include "se.hpp"

namespace fedbai {

struct LowerBound {
    double arm_term = 0.0;    // identifying every bandit's best arm
    double agent_term = 0.0;  // identifying every agent's bandit
    double value() const { return std::max(arm_term, agent_term); }
};

// max( M (K - M) ln(1/(4 delta)) / (4 Delta^2),  N ln(1/(2.4 delta)) / Delta^2 )
inline LowerBound minimax_lower_bound(std::size_t N, std::size_t M, std::size_t K, double Delta, double delta) {
    if (M < 1 || K < M) throw input_error("minimax_lower_bound: need K >= M >= 1");
    if (!(Delta > 0.0)) throw input_error("minimax_lower_bound: Delta must be positive");
    if (!(delta > 0.0 && delta < 1.0 / 2.4)) throw input_error("minimax_lower_bound: delta must lie in (0, 1/2.4)");
    const double d2 = Delta * Delta;
    LowerBound lb;
    lb.arm_term = static_cast<double>(M) * static_cast<double>(K - M) * std::log(1.0 / (4.0 * delta)) / (4.0 * d2);
    lb.agent_term = static_cast<double>(N) * std::log(1.0 / (2.4 * delta)) / d2;
    return lb;
}

// Instance-dependent bound:
//   arm term   sum_m sum_{k in S_{m,eta}, k != k*_m} L / (mu_{m,k*_m} - mu_{m,k})^2,
//              S_{m,eta} = {k : mu_{m',k} <= mu_{m',k*_{m'}} - eta for every m' != m}
//   agent term sum_i min_k max_{j : M(j) != M(i)} L / (mu_{M(i),k} - mu_{M(j),k})^2
// with L = ln(1 / (2.4 delta)) and coinciding means contributing +inf to the inner max.
inline LowerBound instance_lower_bound(const Instance& inst, double delta) {
    if (!(delta > 0.0 && delta < 1.0 / 2.4)) throw input_error("instance_lower_bound: delta must lie in (0, 1/2.4)");
    if (inst.mapping.empty()) throw input_error("instance_lower_bound: instance has no agent mapping");
    if (!(inst.eta > 0.0)) throw input_error("instance_lower_bound: instance eta must be positive");
    const auto rep = validate(inst.means, inst.eta, 0.0);
    if (!rep.ok) throw input_error("instance_lower_bound: instance violates its separability assumption");

    const std::size_t M = inst.num_bandits(), K = inst.num_arms();
    const double L = std::log(1.0 / (2.4 * delta));
    const double inf = std::numeric_limits<double>::infinity();
    LowerBound lb;

    for (std::size_t m = 0; m < M; ++m) {
        const std::size_t best = rep.best_arms[m];
        for (std::size_t k = 0; k < K; ++k) {
            if (k == best) continue;
            bool in_set = true;
            for (std::size_t o = 0; o < M && in_set; ++o)
                if (o != m) in_set = inst.means(o, k) <= inst.means(o, rep.best_arms[o]) - inst.eta + kMarginTolerance;
            if (!in_set) continue;
            const double d = inst.means(m, best) - inst.means(m, k);
            lb.arm_term += L / (d * d);
        }
    }

    std::vector<bool> occupied(M, false);
    for (auto b : inst.mapping) occupied.at(b) = true;
    std::vector<double> per_bandit(M, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        if (!occupied[m]) continue;
        double best_k = inf;
        bool has_alternative = false;
        for (std::size_t k = 0; k < K; ++k) {
            double worst = 0.0;
            for (std::size_t o = 0; o < M; ++o) {
                if (o == m || !occupied[o]) continue;
                has_alternative = true;
                const double d = inst.means(m, k) - inst.means(o, k);
                worst = std::max(worst, d == 0.0 ? inf : L / (d * d));
            }
            best_k = std::min(best_k, worst);
        }
        per_bandit[m] = has_alternative ? best_k : 0.0;
    }
    for (auto b : inst.mapping) lb.agent_term += per_bandit[b];
    return lb;
}

// ---------------------------------------------------------------------------
// Upper budgets

// First round at which an arm with gap Delta is guaranteed gone on the
// good event (2^{1-r} < Delta); effectively unbounded for Delta <= 0.
inline unsigned elimination_round(double Delta) {
    if (!(Delta > 0.0)) return std::numeric_limits<unsigned>::max();
    return static_cast<unsigned>(std::max(0.0, std::floor(std::log2(1.0 / Delta)))) + 2;
}

// Pulls of one elimination call on `arms` of `bandit`, each arm pulled up to
// its guaranteed elimination round (the leader up to the last one), capped at R.
inline double se_budget(const Instance& inst, std::size_t bandit, const std::vector<std::size_t>& arms, double gamma,
                        RoundCap cap) {
    const std::size_t n = arms.size();
    if (n <= 1) return 0.0;
    std::size_t top = arms.front();
    for (auto a : arms)
        if (inst.mean(bandit, a) > inst.mean(bandit, top)) top = a;
    double runner_up_gap = std::numeric_limits<double>::infinity();
    for (auto a : arms)
        if (a != top) runner_up_gap = std::min(runner_up_gap, inst.mean(bandit, top) - inst.mean(bandit, a));
    double total = 0.0;
    for (auto a : arms) {
        const double gap = a == top ? runner_up_gap : inst.mean(bandit, top) - inst.mean(bandit, a);
        unsigned rounds = elimination_round(gap);
        if (cap) rounds = std::min(rounds, *cap);
        if (rounds == 0) continue;
        if (rounds == std::numeric_limits<unsigned>::max()) return std::numeric_limits<double>::infinity();
        total += static_cast<double>(round_pull_count(n, rounds, gamma));
    }
    return total;
}

struct PhaseBudget {
    double phase1 = 0.0;
    double phase2 = 0.0;
    double total() const { return phase1 + phase2; }
};

struct BudgetParams {
    std::optional<double> eta;          // default: instance eta
    std::optional<double> eta1;         // default: instance eta1
    std::optional<std::size_t> clusters;  // M given to the identification-first schemes; default: occupied bandits
};

namespace detail {

inline std::vector<std::size_t> arms_surviving_cap(const Instance& inst, std::size_t bandit, unsigned cap) {
    std::vector<std::size_t> out;
    const std::size_t best = inst.best_arm(bandit);
    for (std::size_t k = 0; k < inst.num_arms(); ++k)
        if (k == best || elimination_round(inst.gap(bandit, k)) > cap) out.push_back(k);
    return out;
}

}  // namespace detail

inline PhaseBudget upper_budget(const Instance& inst, Algorithm alg, double delta, BudgetParams p = {}) {
    if (!(delta > 0.0 && delta < 1.0)) throw input_error("upper_budget: delta must lie in (0, 1)");
    if (inst.mapping.empty()) throw input_error("upper_budget: instance has no agent mapping");
    const std::size_t N = inst.num_agents(), K = inst.num_arms(), M = inst.num_bandits();
    const double eta = p.eta.value_or(inst.eta);
    const double eta1 = p.eta1.value_or(inst.eta1);
    if (alg != Algorithm::naive && !(eta > 0.0)) throw input_error("upper_budget: scheme requires eta > 0");
    if (alg == Algorithm::bai_cl_pp && !(eta1 > 0.0)) throw input_error("upper_budget: bai_cl_pp requires eta1 > 0");

    std::vector<std::size_t> occupied;
    {
        std::vector<bool> seen(M, false);
        for (auto b : inst.mapping) seen.at(b) = true;
        for (std::size_t m = 0; m < M; ++m)
            if (seen[m]) occupied.push_back(m);
    }
    const auto arms = detail::all_arms(K);
    PhaseBudget out;

    switch (alg) {
        case Algorithm::naive: {
            const double g = schedule::naive_gamma(delta, N);
            std::vector<double> cost(M, 0.0);
            for (auto m : occupied) cost[m] = se_budget(inst, m, arms, g, kUnbounded);
            for (auto b : inst.mapping) out.phase1 += cost[b];
            break;
        }
        case Algorithm::cl_bai: {
            const double g1 = schedule::cl_bai_phase1_gamma(delta, N, K);
            const double g2 = schedule::cl_bai_phase2_gamma(delta, M);
            const unsigned cap = cluster_round_cap(eta);
            std::vector<double> cost(M, 0.0);
            for (auto m : occupied) {
                cost[m] = se_budget(inst, m, arms, g1, cap);
                out.phase2 += se_budget(inst, m, detail::arms_surviving_cap(inst, m, cap), g2, kUnbounded);
            }
            for (auto b : inst.mapping) out.phase1 += cost[b];
            break;
        }
        case Algorithm::bai_cl:
        case Algorithm::bai_cl_pp: {
            const std::size_t Malg = p.clusters.value_or(occupied.size());
            const double g1 = schedule::bai_cl_phase1_gamma(delta, Malg);
            const unsigned cap = separation_round_cap(eta);
            const double sampled =
                std::min(static_cast<double>(N), std::ceil(schedule::coupon_cap(delta, Malg) - 1e-12));
            double worst_capped = 0.0;
            for (auto m : occupied) {
                worst_capped = std::max(worst_capped, se_budget(inst, m, arms, g1, cap));
                out.phase1 += se_budget(inst, m, detail::arms_surviving_cap(inst, m, cap), g1, kUnbounded);
            }
            out.phase1 += sampled * worst_capped;

            std::vector<std::size_t> S;
            for (auto m : occupied) S.push_back(inst.best_arm(m));
            std::sort(S.begin(), S.end());
            std::vector<double> cost(M, 0.0);
            if (alg == Algorithm::bai_cl) {
                const double g2 = schedule::bai_cl_phase2_gamma(delta, N);
                for (auto m : occupied) cost[m] = se_budget(inst, m, S, g2, kUnbounded);
            } else {
                out.phase1 += static_cast<double>(occupied.size()) *
                              static_cast<double>(schedule::reference_pull_count(Malg, delta, eta1));
                const double g2 = schedule::bai_cl_pp_phase2_gamma(delta, N);
                // Expected escalation cost: phase k is entered with probability <= 2^{1-k}.
                constexpr unsigned kPhases = 60;
                for (auto m : occupied) {
                    double c = 0.0;
                    for (unsigned k = 1; k <= kPhases; ++k) {
                        const double delta_k = std::pow(10.0, -static_cast<double>(k));
                        const double phase = se_budget(inst, m, S, delta_k, cap) +
                                             static_cast<double>(verification_pull_count(k, g2, eta1));
                        c += std::ldexp(phase, 1 - static_cast<int>(k));
                    }
                    cost[m] = c;
                }
            }
            for (auto b : inst.mapping) out.phase2 += cost[b];
            break;
        }
    }
    return out;
}

struct BoundReport {
    std::optional<LowerBound> minimax;   // needs a positive common gap and delta < 1/2.4
    std::optional<LowerBound> instance;
    std::map<Algorithm, PhaseBudget> upper;
    std::size_t N = 0, M = 0, K = 0;
    double Delta = 0.0;  // smallest within-bandit gap
    double delta = 0.0, eta = 0.0, eta1 = 0.0;
};

inline BoundReport bound_report(const Instance& inst, std::span<const Algorithm> algs, double delta,
                                BudgetParams p = {}) {
    BoundReport r;
    r.N = inst.num_agents();
    r.M = inst.num_bandits();
    r.K = inst.num_arms();
    r.delta = delta;
    r.eta = p.eta.value_or(inst.eta);
    r.eta1 = p.eta1.value_or(inst.eta1);
    r.Delta = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < r.M; ++m) r.Delta = std::min(r.Delta, inst.min_gap(m));
    if (delta < 1.0 / 2.4 && r.Delta > 0.0 && std::isfinite(r.Delta)) {
        r.minimax = minimax_lower_bound(r.N, r.M, r.K, r.Delta, delta);
        if (inst.eta > 0.0) r.instance = instance_lower_bound(inst, delta);
    }
    for (auto a : algs) r.upper[a] = upper_budget(inst, a, delta, p);
    return r;
}

inline nlohmann::json to_json(const LowerBound& lb) {
    return {{"arm_term", lb.arm_term}, {"agent_term", lb.agent_term}, {"value", lb.value()}};
}

inline nlohmann::json to_json(const BoundReport& r) {
    nlohmann::json up = nlohmann::json::object();
    for (const auto& [a, b] : r.upper) up[to_string(a)] = {{"phase1", b.phase1}, {"phase2", b.phase2}, {"total", b.total()}};
    return {{"minimax_lb", r.minimax ? to_json(*r.minimax) : nlohmann::json(nullptr)},
            {"instance_lb", r.instance ? to_json(*r.instance) : nlohmann::json(nullptr)},
            {"upper_budget", up},
            {"params",
             {{"N", r.N}, {"M", r.M}, {"K", r.K}, {"Delta", r.Delta}, {"delta", r.delta}, {"eta", r.eta}, {"eta1", r.eta1}}}};
}

}  // namespace fedbai
