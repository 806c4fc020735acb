// se.hpp
//
// Successive elimination and its verified variant.
//
// Round r works at accuracy eps_r = 2^-r: every active arm is topped up to the
// cumulative target ceil(8 ln(4 n r^2 / gamma) / eps_r^2) pulls (n = size of the
// input set, fixed across rounds), and arms whose estimate falls more than
// eps_r below the leader are dropped. Estimates use only samples drawn by the
// current invocation.
#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "env.hpp"
#include "errors.hpp"

namespace fedbai {

using RoundCap = std::optional<unsigned>;
inline constexpr RoundCap kUnbounded = std::nullopt;

// Per-arm pull ceiling for one invocation. Unbounded runs that would exceed it
// (only possible on exact ties) stop early and are reported as truncated.
inline constexpr std::uint64_t kMaxArmPulls = std::uint64_t{1} << 36;

inline std::uint64_t round_pull_count(std::size_t input_size, unsigned r, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw input_error("round_pull_count: gamma must lie in (0, 1)");
    if (input_size < 1 || r < 1) throw input_error("round_pull_count: need input_size >= 1 and r >= 1");
    const double rr = static_cast<double>(r);
    const double v = 8.0 * std::log(4.0 * static_cast<double>(input_size) * rr * rr / gamma) * std::ldexp(1.0, 2 * static_cast<int>(r));
    if (v >= 0x1.0p63) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(std::ceil(v));
}

// ceil(x) but immune to x landing a hair above an integer through rounding.
inline int ceil_tight(double x) { return static_cast<int>(std::ceil(x - 1e-12)); }

// Phase-1 round cap of the clustering-first scheme: ceil(log2(17 / eta)).
inline unsigned cluster_round_cap(double eta) {
    if (!(eta > 0.0)) throw input_error("cluster_round_cap: eta must be positive");
    return static_cast<unsigned>(std::max(0, ceil_tight(std::log2(17.0 / eta))));
}

// Capped round count used to isolate best arms at separation eta: ceil(log2(1 / eta)) + 1.
inline unsigned separation_round_cap(double eta) {
    if (!(eta > 0.0)) throw input_error("separation_round_cap: eta must be positive");
    return static_cast<unsigned>(std::max(0, ceil_tight(std::log2(1.0 / eta)))) + 1;
}

struct SERound {
    unsigned round = 0;
    std::uint64_t target = 0;      // cumulative per-arm pulls after this round
    std::uint64_t increment = 0;   // fresh pulls given to each active arm
    std::vector<std::size_t> active;     // A_{r-1}
    std::vector<std::size_t> survivors;  // A_r
};

struct SEOutcome {
    std::vector<std::size_t> survivors;  // ascending
    std::vector<double> est_means;       // indexed by arm; NaN for arms outside the input set or never pulled
    unsigned rounds_run = 0;
    std::uint64_t pulls_used = 0;
    bool truncated = false;
    std::vector<SERound> trace;  // filled when SEOptions::record_trace

    double estimate(std::size_t arm) const { return est_means.at(arm); }

    // Survivor with the largest estimate, lowest index on ties.
    std::size_t leader() const {
        std::size_t best = survivors.front();
        for (auto a : survivors)
            if (est_means[a] > est_means[best]) best = a;
        return best;
    }
};

struct SEOptions {
    bool record_trace = false;
};

namespace detail {

inline std::vector<std::size_t> normalized_arm_set(std::span<const std::size_t> arms, std::size_t K) {
    std::vector<std::size_t> out(arms.begin(), arms.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) throw input_error("successive elimination: empty arm set");
    if (out.back() >= K) throw input_error("successive elimination: arm index out of range");
    return out;
}

}  // namespace detail

inline SEOutcome successive_elimination(Environment& env, std::size_t agent, std::span<const std::size_t> arms,
                                        double gamma, RoundCap cap, SEOptions opts = {}) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw input_error("successive elimination: gamma must lie in (0, 1)");
    const std::size_t K = env.num_arms();
    std::vector<std::size_t> active = detail::normalized_arm_set(arms, K);
    const std::size_t n = active.size();

    SEOutcome out;
    out.est_means.assign(K, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> sums(K, 0.0);
    std::uint64_t per_arm = 0;  // all active arms share the same count
    unsigned r = 0;
    while (active.size() > 1 && (!cap || r < *cap)) {
        const unsigned next = r + 1;
        const std::uint64_t target = round_pull_count(n, next, gamma);
        if (!cap && target > kMaxArmPulls) {
            out.truncated = true;
            break;
        }
        r = next;
        const std::uint64_t inc = target > per_arm ? target - per_arm : 0;
        const double eps = std::ldexp(1.0, -static_cast<int>(r));
        double top = -std::numeric_limits<double>::infinity();
        for (auto a : active) {
            if (inc > 0) sums[a] += env.pull_mean(agent, a, inc) * static_cast<double>(inc);
            out.est_means[a] = sums[a] / static_cast<double>(std::max(target, per_arm));
            top = std::max(top, out.est_means[a]);
        }
        out.pulls_used += inc * active.size();
        per_arm = std::max(target, per_arm);

        std::vector<std::size_t> kept;
        kept.reserve(active.size());
        for (auto a : active)
            if (out.est_means[a] >= top - eps) kept.push_back(a);
        if (opts.record_trace) out.trace.push_back({r, target, inc, active, kept});
        active = std::move(kept);
    }
    out.rounds_run = r;
    out.survivors = std::move(active);
    return out;
}

// ---------------------------------------------------------------------------
// Verified elimination over a candidate set S with reference means mu_bar.

inline std::uint64_t verification_pull_count(unsigned phase, double gamma, double eta1) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw input_error("verification_pull_count: gamma must lie in (0, 1)");
    if (!(eta1 > 0.0)) throw input_error("verification_pull_count: eta1 must be positive");
    const double k = static_cast<double>(phase);
    return static_cast<std::uint64_t>(std::ceil(32.0 * std::log(4.0 * k * k / gamma) / (eta1 * eta1)));
}

struct SEHatOutcome {
    std::size_t arm = 0;
    unsigned phases = 0;           // number of escalation phases used (k at acceptance)
    std::uint64_t pulls_used = 0;
    double verify_estimate = 0.0;  // fresh estimate of `arm` that passed the gate
    bool verified = true;          // false only if the phase limit was hit
};

inline constexpr unsigned kMaxVerificationPhases = 300;  // 10^-k stays representable

// mu_bar is indexed by arm and must be finite on every member of S.
inline SEHatOutcome se_hat(Environment& env, std::size_t agent, std::span<const std::size_t> S,
                           std::span<const double> mu_bar, double gamma, double eta, double eta1) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw input_error("se_hat: gamma must lie in (0, 1)");
    if (!(eta > 0.0 && eta1 > 0.0)) throw input_error("se_hat: eta and eta1 must be positive");
    const auto set = detail::normalized_arm_set(S, env.num_arms());
    for (auto a : set)
        if (a >= mu_bar.size() || !std::isfinite(mu_bar[a]))
            throw input_error("se_hat: reference mean missing for arm " + std::to_string(a));

    const unsigned cap = separation_round_cap(eta);
    SEHatOutcome out;
    for (unsigned k = 1; k <= kMaxVerificationPhases; ++k) {
        const double delta_k = std::pow(10.0, -static_cast<double>(k));
        const SEOutcome se = successive_elimination(env, agent, set, delta_k, cap);
        const std::size_t cand = se.leader();
        const std::uint64_t n = verification_pull_count(k, gamma, eta1);
        const double fresh = env.pull_mean(agent, cand, n);
        out.pulls_used += se.pulls_used + n;
        out.phases = k;
        out.arm = cand;
        out.verify_estimate = fresh;
        if (std::abs(fresh - mu_bar[cand]) < eta1 / 2.0) return out;
    }
    out.verified = false;
    return out;
}

}  // namespace fedbai
