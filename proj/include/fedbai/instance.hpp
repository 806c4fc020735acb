// instance.hpp
//
// Problem instances for clustered multi-agent best-arm identification:
// an M x K matrix of mean rewards (one row per latent bandit), a map from
// agents to bandits, and the two separability levels the algorithms rely on.
//
//   eta  : every bandit's best arm is at least eta worse under any other bandit.
//   eta1 : every bandit's best arm differs by at least eta1 between its home
//          bandit and any other bandit.
//
// All indices are zero-based.
#pragma once
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "errors.hpp"

namespace fedbai {

// Absolute slack used when checking separability margins, so that instances
// built as 1 and 1 - eta validate at exactly eta despite rounding.
inline constexpr double kMarginTolerance = 1e-12;

class MeanMatrix {
public:
    MeanMatrix() = default;
    MeanMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static MeanMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return {};
        MeanMatrix m(rows.size(), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols_)
                throw input_error("ragged mean matrix: row " + std::to_string(r) + " has " +
                                  std::to_string(rows[r].size()) + " entries, expected " +
                                  std::to_string(m.cols_));
            std::copy(rows[r].begin(), rows[r].end(), m.data_.begin() + r * m.cols_);
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<std::vector<double>> to_rows() const {
        std::vector<std::vector<double>> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r].assign(row(r).begin(), row(r).end());
        return out;
    }

    bool operator==(const MeanMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct Instance {
    MeanMatrix means;                  // bandit x arm
    std::vector<std::size_t> mapping;  // agent -> bandit
    double eta = 0.0;
    double eta1 = 0.0;                 // 0 when unknown / unused
    std::string provenance;

    std::size_t num_agents() const noexcept { return mapping.size(); }
    std::size_t num_bandits() const noexcept { return means.rows(); }
    std::size_t num_arms() const noexcept { return means.cols(); }

    double mean(std::size_t bandit, std::size_t arm) const { return means(bandit, arm); }
    double agent_mean(std::size_t agent, std::size_t arm) const { return means(mapping.at(agent), arm); }

    std::size_t best_arm(std::size_t bandit) const { return argmax(means.row(bandit)); }
    std::size_t agent_best_arm(std::size_t agent) const { return best_arm(mapping.at(agent)); }

    // Delta_{m,j} = mu_{m,k*_m} - mu_{m,j}
    double gap(std::size_t bandit, std::size_t arm) const {
        return means(bandit, best_arm(bandit)) - means(bandit, arm);
    }

    // Smallest positive gap of the bandit (gap to the runner-up); +inf when K = 1.
    double min_gap(std::size_t bandit) const {
        const std::size_t best = best_arm(bandit);
        double g = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < num_arms(); ++k)
            if (k != best) g = std::min(g, gap(bandit, k));
        return g;
    }

    std::vector<std::size_t> best_arms() const {
        std::vector<std::size_t> out(num_bandits());
        for (std::size_t m = 0; m < num_bandits(); ++m) out[m] = best_arm(m);
        return out;
    }

    // Number of distinct bandits that at least one agent is mapped to.
    std::size_t occupied_bandits() const {
        std::vector<bool> seen(num_bandits(), false);
        for (auto b : mapping) seen.at(b) = true;
        return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
    }
};

// ---------------------------------------------------------------------------
// Validation

enum class Assumption { unique_argmax, separability, best_arm_separation };

inline const char* to_string(Assumption a) {
    switch (a) {
        case Assumption::unique_argmax: return "unique_argmax";
        case Assumption::separability: return "separability";
        case Assumption::best_arm_separation: return "best_arm_separation";
    }
    return "?";
}

struct Violation {
    Assumption assumption;
    std::size_t bandit_a;  // owner of the best arm in question
    std::size_t bandit_b;  // bandit under which it is evaluated (== bandit_a for unique_argmax)
    std::size_t arm;
    double margin;
};

struct ValidationReport {
    bool ok = false;
    std::vector<std::size_t> best_arms;
    double max_eta = std::numeric_limits<double>::infinity();   // +inf when M = 1
    double max_eta1 = std::numeric_limits<double>::infinity();  // +inf when M = 1
    std::vector<double> min_gap_per_bandit;
    std::vector<Violation> violations;
};

inline ValidationReport validate(const MeanMatrix& means, double requested_eta, double requested_eta1) {
    const std::size_t M = means.rows();
    const std::size_t K = means.cols();
    if (M < 1) throw input_error("validate: mean matrix has no rows");
    if (K < M) throw input_error("validate: need at least as many arms as bandits (K >= M)");
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < K; ++k)
            if (!std::isfinite(means(m, k)))
                throw input_error("validate: non-finite mean at bandit " + std::to_string(m) + ", arm " +
                                  std::to_string(k));

    ValidationReport rep;
    rep.best_arms.resize(M);
    rep.min_gap_per_bandit.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        const auto row = means.row(m);
        const std::size_t best = argmax(row);
        rep.best_arms[m] = best;
        double g = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            if (k == best) continue;
            g = std::min(g, row[best] - row[k]);
            if (row[k] == row[best])
                rep.violations.push_back({Assumption::unique_argmax, m, m, k, 0.0});
        }
        rep.min_gap_per_bandit[m] = g;
    }

    for (std::size_t a = 0; a < M; ++a) {
        const std::size_t ka = rep.best_arms[a];
        for (std::size_t b = 0; b < M; ++b) {
            if (a == b) continue;
            const double sep = means(b, rep.best_arms[b]) - means(b, ka);
            rep.max_eta = std::min(rep.max_eta, sep);
            if (sep < requested_eta - kMarginTolerance)
                rep.violations.push_back({Assumption::separability, a, b, ka, sep});

            const double sep1 = std::abs(means(a, ka) - means(b, ka));
            rep.max_eta1 = std::min(rep.max_eta1, sep1);
            if (requested_eta1 > 0.0 && sep1 < requested_eta1 - kMarginTolerance)
                rep.violations.push_back({Assumption::best_arm_separation, a, b, ka, sep1});
        }
    }
    rep.ok = rep.violations.empty();
    return rep;
}

// ---------------------------------------------------------------------------
// Generators

// Three bandits, ten arms; best arms are 3, 5 and 6.
inline Instance gen_fixed_small() {
    Instance inst;
    inst.means = MeanMatrix::from_rows({
        {.09, .26, .49, .91, .56, .16, .31, .75, .76, .77},
        {.02, .27, .36, .42, .47, .92, .32, .62, .82, .9},
        {.14, .46, .64, .44, .7, .03, .96, .72, .79, .95},
    });
    inst.eta = 0.3;
    inst.eta1 = 0.3;
    inst.provenance = "fixed_small";
    return inst;
}

inline Instance gen_random_separated(std::size_t M, std::size_t K, double eta, std::uint64_t seed) {
    if (M < 1 || K < M) throw input_error("gen_random_separated: need K >= M >= 1");
    if (!(eta > 0.0 && eta < 0.5)) throw input_error("gen_random_separated: eta must lie in (0, 1/2)");

    std::mt19937_64 rng(seed);
    constexpr int kMaxAttempts = 100;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        std::vector<std::size_t> arms(K);
        std::iota(arms.begin(), arms.end(), std::size_t{0});
        std::shuffle(arms.begin(), arms.end(), rng);
        arms.resize(M);  // best arm of bandit m is arms[m]

        std::vector<bool> is_best(K, false);
        for (auto a : arms) is_best[a] = true;

        Instance inst;
        inst.means = MeanMatrix(M, K);
        std::uniform_real_distribution<double> top(1.0 - eta, 1.0);
        std::uniform_real_distribution<double> cross(0.0, 1.0 - 2.0 * eta);
        for (std::size_t m = 0; m < M; ++m) {
            const double best = top(rng);
            inst.means(m, arms[m]) = best;
            std::uniform_real_distribution<double> rest(0.0, best);
            for (std::size_t k = 0; k < K; ++k) {
                if (k == arms[m]) continue;
                inst.means(m, k) = is_best[k] ? cross(rng) : rest(rng);
            }
        }
        inst.eta = eta;
        inst.eta1 = eta;
        inst.provenance = "random_separated(M=" + std::to_string(M) + ",K=" + std::to_string(K) +
                          ",seed=" + std::to_string(seed) + ")";
        const auto rep = validate(inst.means, eta, eta);
        bool canonical = rep.ok;
        for (std::size_t m = 0; canonical && m < M; ++m) canonical = rep.best_arms[m] == arms[m];
        if (canonical) return inst;
    }
    throw input_error("gen_random_separated: could not draw a valid instance in 100 attempts");
}

// Bandit m has best arm m with mean 1; every other entry is 1 - eta.
inline Instance gen_uniform_gap(std::size_t M, std::size_t K, double eta) {
    if (M < 1 || K < M) throw input_error("gen_uniform_gap: need K >= M >= 1");
    if (!(eta > 0.0)) throw input_error("gen_uniform_gap: eta must be positive");
    Instance inst;
    inst.means = MeanMatrix(M, K, 1.0 - eta);
    for (std::size_t m = 0; m < M; ++m) inst.means(m, m) = 1.0;
    inst.eta = eta;
    inst.eta1 = eta;
    inst.provenance = "uniform_gap(M=" + std::to_string(M) + ",K=" + std::to_string(K) + ")";
    return inst;
}

// alpha < 0 selects the deterministic balanced mapping (agent i -> i mod M).
inline constexpr double kBalanced = -1.0;

// Agent i lands in cluster c (zero-based) with probability (c+1)^alpha / sum_j j^alpha.
inline std::vector<std::size_t> assign_agents(std::size_t N, std::size_t M, double alpha, std::uint64_t seed) {
    if (N < 1 || M < 1) throw input_error("assign_agents: need N >= 1 and M >= 1");
    std::vector<std::size_t> mapping(N);
    if (alpha < 0.0) {
        for (std::size_t i = 0; i < N; ++i) mapping[i] = i % M;
        return mapping;
    }
    std::vector<double> weights(M);
    for (std::size_t c = 0; c < M; ++c) weights[c] = std::pow(static_cast<double>(c + 1), alpha);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::mt19937_64 rng(seed);
    for (auto& b : mapping) b = pick(rng);
    return mapping;
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

// "# eta=0.0027 eta1=0.026"
inline void parse_header(std::string_view line, std::size_t row, double& eta, bool& has_eta, double& eta1,
                         bool& has_eta1) {
    line.remove_prefix(1);
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        double v = 0.0;
        if (key != "eta" && key != "eta1") continue;
        if (!parse_double(std::string_view(tok).substr(eq + 1), v))
            throw parse_error("row " + std::to_string(row) + ": bad value for " + key + " in header", row);
        if (key == "eta") {
            eta = v;
            has_eta = true;
        } else {
            eta1 = v;
            has_eta1 = true;
        }
    }
}

}  // namespace detail

// One row per bandit, one column per arm; optional "# eta=<v> eta1=<v>" line.
// Without a header, eta / eta1 default to the largest levels the matrix satisfies.
inline Instance parse_means_csv(std::istream& in, std::string provenance = "csv") {
    std::vector<std::vector<double>> rows;
    double eta = 0.0, eta1 = 0.0;
    bool has_eta = false, has_eta1 = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            detail::parse_header(t, lineno, eta, has_eta, eta1, has_eta1);
            continue;
        }
        std::vector<double> row;
        std::size_t col = 0, start = 0;
        while (true) {
            const auto comma = t.find(',', start);
            const auto cell = t.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
            ++col;
            double v = 0.0;
            if (!detail::parse_double(cell, v) || !std::isfinite(v))
                throw parse_error("row " + std::to_string(lineno) + ", column " + std::to_string(col) +
                                      ": not a finite number: '" + std::string(detail::trim(cell)) + "'",
                                  lineno, col);
            row.push_back(v);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw parse_error("row " + std::to_string(lineno) + ": ragged row with " + std::to_string(row.size()) +
                                  " columns, expected " + std::to_string(rows.front().size()),
                              lineno);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw parse_error("mean CSV contains no data rows", 0);

    Instance inst;
    inst.means = MeanMatrix::from_rows(rows);
    inst.provenance = std::move(provenance);
    const auto rep = validate(inst.means, 0.0, 0.0);
    if (has_eta) {
        inst.eta = eta;
    } else if (std::isinf(rep.max_eta)) {
        // M = 1: separability is vacuous; fall back to the bandit's own gap.
        inst.eta = rep.min_gap_per_bandit.front();
    } else {
        inst.eta = std::max(0.0, rep.max_eta);
    }
    if (has_eta1) inst.eta1 = eta1;
    else inst.eta1 = std::isinf(rep.max_eta1) ? inst.eta : std::max(0.0, rep.max_eta1);
    return inst;
}

inline Instance load_means_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open mean CSV '" + path + "'", 0);
    return parse_means_csv(in, path);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Instance& inst) {
    return {{"means", inst.means.to_rows()},
            {"mapping", inst.mapping},
            {"eta", inst.eta},
            {"eta1", inst.eta1},
            {"provenance", inst.provenance}};
}

inline Instance instance_from_json(const nlohmann::json& j) {
    Instance inst;
    try {
        inst.means = MeanMatrix::from_rows(j.at("means").get<std::vector<std::vector<double>>>());
        if (j.contains("mapping")) inst.mapping = j.at("mapping").get<std::vector<std::size_t>>();
        inst.eta = j.value("eta", 0.0);
        inst.eta1 = j.value("eta1", 0.0);
        inst.provenance = j.value("provenance", std::string("json"));
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("instance JSON: ") + e.what(), 0);
    }
    for (auto b : inst.mapping)
        if (b >= inst.num_bandits()) throw input_error("instance JSON: mapping entry out of range");
    return inst;
}

inline nlohmann::json to_json(const ValidationReport& rep) {
    auto finite_or_null = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::json viol = nlohmann::json::array();
    for (const auto& v : rep.violations)
        viol.push_back({{"assumption", to_string(v.assumption)},
                        {"bandit_a", v.bandit_a},
                        {"bandit_b", v.bandit_b},
                        {"arm", v.arm},
                        {"margin", v.margin}});
    nlohmann::json gaps = nlohmann::json::array();
    for (double g : rep.min_gap_per_bandit) gaps.push_back(finite_or_null(g));
    std::vector<std::size_t> one_based;
    for (auto a : rep.best_arms) one_based.push_back(a + 1);
    return {{"ok", rep.ok},
            {"best_arms", rep.best_arms},
            {"best_arms_one_based", one_based},
            {"max_eta", finite_or_null(rep.max_eta)},
            {"max_eta1", finite_or_null(rep.max_eta1)},
            {"min_gap_per_bandit", gaps},
            {"violations", viol}};
}

}  // namespace fedbai
