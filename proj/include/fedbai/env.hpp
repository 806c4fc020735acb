// env.hpp
//
// Simulated federation: agents pull arms of their (hidden) bandit and the
// environment keeps an exact ledger of pulls and of every message exchanged
// between agents and the learner.
#pragma once
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "instance.hpp"
#include "rng.hpp"

namespace fedbai {

// Reward noise for one (agent, arm) stream, exposed through its cumulative
// sum: partial_sum(stream, n) is the total noise of pulls 0..n-1. The value
// must depend only on (stream, n).
class NoiseModel {
public:
    virtual ~NoiseModel() = default;
    virtual double partial_sum(std::uint64_t stream, std::uint64_t n) const = 0;
};

// Unit-variance Gaussian noise.
class GaussianNoise final : public NoiseModel {
public:
    double partial_sum(std::uint64_t stream, std::uint64_t n) const override { return GaussianWalk::at(stream, n); }
};

struct CostModel {
    double cost_real = 32.0;  // c_r, units per real number
    double cost_bit = 1.0;    // c_b, units per bit
};

enum class Direction { up, down };  // up: agent -> learner

// ceil(log2(x)) for x >= 1; 0 for x <= 1.
constexpr std::uint64_t ceil_log2(std::uint64_t x) noexcept {
    std::uint64_t bits = 0;
    while ((std::uint64_t{1} << bits) < x) ++bits;
    return bits;
}

struct Ledger {
    std::size_t num_agents = 0;
    std::size_t num_arms = 0;
    std::vector<std::uint64_t> pulls;  // agent-major, num_agents x num_arms
    std::uint64_t up_reals = 0;
    std::uint64_t up_bits = 0;
    std::uint64_t down_reals = 0;
    std::uint64_t down_bits = 0;
    CostModel costs;

    std::uint64_t pulls_at(std::size_t agent, std::size_t arm) const { return pulls.at(agent * num_arms + arm); }

    std::uint64_t total_pulls() const { return std::accumulate(pulls.begin(), pulls.end(), std::uint64_t{0}); }

    std::uint64_t agent_pulls(std::size_t agent) const {
        std::uint64_t s = 0;
        for (std::size_t k = 0; k < num_arms; ++k) s += pulls_at(agent, k);
        return s;
    }

    std::uint64_t reals() const { return up_reals + down_reals; }
    std::uint64_t bits() const { return up_bits + down_bits; }

    double total_comm_cost() const {
        return costs.cost_real * static_cast<double>(reals()) + costs.cost_bit * static_cast<double>(bits());
    }

    // Counters accumulated since `before` (same environment, earlier snapshot).
    Ledger since(const Ledger& before) const {
        Ledger d = *this;
        for (std::size_t i = 0; i < pulls.size(); ++i) d.pulls[i] -= before.pulls.at(i);
        d.up_reals -= before.up_reals;
        d.up_bits -= before.up_bits;
        d.down_reals -= before.down_reals;
        d.down_bits -= before.down_bits;
        return d;
    }

    bool operator==(const Ledger& o) const {
        return num_agents == o.num_agents && num_arms == o.num_arms && pulls == o.pulls && up_reals == o.up_reals &&
               up_bits == o.up_bits && down_reals == o.down_reals && down_bits == o.down_bits &&
               costs.cost_real == o.costs.cost_real && costs.cost_bit == o.costs.cost_bit;
    }
};

inline nlohmann::json to_json(const Ledger& l) {
    std::vector<std::uint64_t> per_agent(l.num_agents);
    for (std::size_t i = 0; i < l.num_agents; ++i) per_agent[i] = l.agent_pulls(i);
    return {{"total_pulls", l.total_pulls()},
            {"pulls_per_agent", per_agent},
            {"up_reals", l.up_reals},
            {"up_bits", l.up_bits},
            {"down_reals", l.down_reals},
            {"down_bits", l.down_bits},
            {"cost_real", l.costs.cost_real},
            {"cost_bit", l.costs.cost_bit},
            {"total_comm_cost", l.total_comm_cost()}};
}

// Pulls on distinct (agent, arm) pairs may run concurrently; message
// accounting is serialized internally.
class Environment {
public:
    Environment(Instance instance, std::uint64_t seed, CostModel costs = {},
                std::shared_ptr<const NoiseModel> noise = std::make_shared<GaussianNoise>())
        : instance_(std::move(instance)), seed_(seed), noise_(std::move(noise)) {
        if (instance_.mapping.empty()) throw input_error("Environment: instance has no agent mapping");
        for (auto b : instance_.mapping)
            if (b >= instance_.num_bandits()) throw input_error("Environment: mapping entry out of range");
        ledger_.num_agents = instance_.num_agents();
        ledger_.num_arms = instance_.num_arms();
        ledger_.pulls.assign(ledger_.num_agents * ledger_.num_arms, 0);
        ledger_.costs = costs;
        noise_at_count_.assign(ledger_.pulls.size(), 0.0);
    }

    Environment(const Environment&) = delete;
    Environment& operator=(const Environment&) = delete;

    const Instance& instance() const noexcept { return instance_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t num_agents() const noexcept { return ledger_.num_agents; }
    std::size_t num_arms() const noexcept { return ledger_.num_arms; }
    const CostModel& costs() const noexcept { return ledger_.costs; }

    double pull(std::size_t agent, std::size_t arm) { return pull_mean(agent, arm, 1); }

    // Mean of n fresh rewards of `arm` at `agent`.
    double pull_mean(std::size_t agent, std::size_t arm, std::uint64_t n) {
        if (n == 0) throw input_error("pull_mean: n must be positive");
        const std::size_t idx = index(agent, arm);
        const std::uint64_t from = ledger_.pulls[idx];
        const double before = noise_at_count_[idx];
        const double after = noise_->partial_sum(stream_key(agent, arm), from + n);
        ledger_.pulls[idx] = from + n;
        noise_at_count_[idx] = after;
        return instance_.agent_mean(agent, arm) + (after - before) / static_cast<double>(n);
    }

    void record_message(Direction dir, std::uint64_t reals, std::uint64_t bits) {
        std::lock_guard lock(msg_mutex_);
        if (dir == Direction::up) {
            ledger_.up_reals += reals;
            ledger_.up_bits += bits;
        } else {
            ledger_.down_reals += reals;
            ledger_.down_bits += bits;
        }
    }

    Ledger snapshot() const {
        std::lock_guard lock(msg_mutex_);
        return ledger_;
    }

    std::uint64_t pulls_at(std::size_t agent, std::size_t arm) const { return ledger_.pulls[index(agent, arm)]; }

private:
    std::size_t index(std::size_t agent, std::size_t arm) const {
        if (agent >= ledger_.num_agents || arm >= ledger_.num_arms)
            throw input_error("Environment: agent " + std::to_string(agent) + " / arm " + std::to_string(arm) +
                              " out of range");
        return agent * ledger_.num_arms + arm;
    }

    std::uint64_t stream_key(std::size_t agent, std::size_t arm) const {
        return hash_keys({seed_, static_cast<std::uint64_t>(agent), static_cast<std::uint64_t>(arm)});
    }

    Instance instance_;
    std::uint64_t seed_;
    std::shared_ptr<const NoiseModel> noise_;
    Ledger ledger_;
    std::vector<double> noise_at_count_;  // partial_sum at the current pull count, per pair
    mutable std::mutex msg_mutex_;
};

}  // namespace fedbai
