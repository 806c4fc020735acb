// experiment.hpp
//
// Seeded trial batches over an optional parameter sweep, reduced into one
// report row per (sweep value, algorithm). Output bytes depend only on the
// configuration.
//
// Config document:
//   {
//     "instance":   {"family": "fixed_small" | "random_separated" | "uniform_gap" | "csv" | "json",
//                    "M": 5, "K": 20, "eta": 0.15, "eta1": 0.15, "seed": 7, "path": "means.csv"},
//     "mapping":    {"N": 50, "alpha": "balanced" | <number >= 0>},
//     "algorithms": ["naive", "cl_bai", "bai_cl", "bai_cl_pp"],
//     "delta": 0.1, "trials": 50, "seed": 1, "cost_bit": 1, "cost_real": 32,
//     "sweep":      {"param": "N" | "eta" | "alpha" | "delta", "values": [...]},
//     "output":     {"path": "report.csv", "format": "csv" | "json"},
//     "threads": 1, "theory_overlay": false
//   }
#pragma once
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "algorithms.hpp"
#include "env.hpp"
#include "errors.hpp"
#include "instance.hpp"
#include "theory.hpp"

namespace fedbai {

struct InstanceSpec {
    std::string family = "fixed_small";
    std::size_t M = 0;
    std::size_t K = 0;
    std::optional<double> eta;
    std::optional<double> eta1;
    std::uint64_t seed = 0;
    std::string path;
};

struct MappingSpec {
    std::size_t N = 1;
    double alpha = kBalanced;
};

struct SweepSpec {
    std::string param;
    std::vector<double> values;
};

struct OutputSpec {
    std::string path;
    std::string format = "csv";
};

struct ExperimentConfig {
    InstanceSpec instance;
    MappingSpec mapping;
    std::vector<Algorithm> algorithms;
    double delta = 0.1;
    std::size_t trials = 50;
    std::uint64_t seed = 1;
    CostModel costs;
    std::optional<SweepSpec> sweep;
    OutputSpec output;
    unsigned threads = 1;
    bool theory_overlay = false;
    nlohmann::json source;  // echoed into JSON reports
};

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using nlohmann::json;
    if (!j.is_object()) throw config_error("<root>", "config must be a JSON object");
    ExperimentConfig c;
    c.source = j;
    auto number = [](const json& node, const std::string& field) -> double {
        if (!node.is_number()) throw config_error(field, "expected a number");
        return node.get<double>();
    };
    auto count = [&](const json& node, const std::string& field) -> std::size_t {
        const double v = number(node, field);
        if (v < 0 || v != std::floor(v)) throw config_error(field, "expected a nonnegative integer");
        return static_cast<std::size_t>(v);
    };

    if (!j.contains("instance") || !j["instance"].is_object()) throw config_error("instance", "missing object");
    const auto& ji = j["instance"];
    if (!ji.contains("family") || !ji["family"].is_string()) throw config_error("instance.family", "missing string");
    c.instance.family = ji["family"].get<std::string>();
    static const std::vector<std::string> families{"fixed_small", "random_separated", "uniform_gap", "csv", "json"};
    if (std::find(families.begin(), families.end(), c.instance.family) == families.end())
        throw config_error("instance.family", "unknown family '" + c.instance.family + "'");
    if (ji.contains("M")) c.instance.M = count(ji["M"], "instance.M");
    if (ji.contains("K")) c.instance.K = count(ji["K"], "instance.K");
    if (ji.contains("eta")) c.instance.eta = number(ji["eta"], "instance.eta");
    if (ji.contains("eta1")) c.instance.eta1 = number(ji["eta1"], "instance.eta1");
    if (ji.contains("seed")) c.instance.seed = count(ji["seed"], "instance.seed");
    if (ji.contains("path")) {
        if (!ji["path"].is_string()) throw config_error("instance.path", "expected a string");
        c.instance.path = ji["path"].get<std::string>();
    }
    const auto& fam = c.instance.family;
    if (fam == "random_separated" || fam == "uniform_gap") {
        if (c.instance.M < 1) throw config_error("instance.M", "required, >= 1");
        if (c.instance.K < c.instance.M) throw config_error("instance.K", "required, >= M");
        if (!c.instance.eta) throw config_error("instance.eta", "required for generated families");
    }
    if ((fam == "csv" || fam == "json") && c.instance.path.empty())
        throw config_error("instance.path", "required for family '" + fam + "'");

    if (!j.contains("mapping") || !j["mapping"].is_object()) throw config_error("mapping", "missing object");
    const auto& jm = j["mapping"];
    if (!jm.contains("N")) throw config_error("mapping.N", "required");
    c.mapping.N = count(jm["N"], "mapping.N");
    if (c.mapping.N < 1) throw config_error("mapping.N", "must be >= 1");
    if (jm.contains("alpha")) {
        const auto& a = jm["alpha"];
        if (a.is_string()) {
            if (a.get<std::string>() != "balanced") throw config_error("mapping.alpha", "expected \"balanced\" or a number");
            c.mapping.alpha = kBalanced;
        } else {
            c.mapping.alpha = number(a, "mapping.alpha");
        }
    }

    if (!j.contains("algorithms") || !j["algorithms"].is_array() || j["algorithms"].empty())
        throw config_error("algorithms", "nonempty array required");
    for (const auto& a : j["algorithms"]) {
        const auto alg = a.is_string() ? algorithm_from_string(a.get<std::string>()) : std::nullopt;
        if (!alg) throw config_error("algorithms", "unknown algorithm " + a.dump());
        if (std::find(c.algorithms.begin(), c.algorithms.end(), *alg) == c.algorithms.end()) c.algorithms.push_back(*alg);
    }

    if (j.contains("delta")) c.delta = number(j["delta"], "delta");
    if (!(c.delta > 0.0 && c.delta < 1.0)) throw config_error("delta", "must lie in (0, 1)");
    if (j.contains("trials")) c.trials = count(j["trials"], "trials");
    if (c.trials < 1) throw config_error("trials", "must be >= 1");
    if (j.contains("seed")) c.seed = count(j["seed"], "seed");
    if (j.contains("cost_bit")) c.costs.cost_bit = number(j["cost_bit"], "cost_bit");
    if (j.contains("cost_real")) c.costs.cost_real = number(j["cost_real"], "cost_real");
    if (c.costs.cost_bit < 0) throw config_error("cost_bit", "must be >= 0");
    if (c.costs.cost_real < 0) throw config_error("cost_real", "must be >= 0");
    if (j.contains("threads")) c.threads = static_cast<unsigned>(std::max<std::size_t>(1, count(j["threads"], "threads")));
    if (j.contains("theory_overlay")) {
        if (!j["theory_overlay"].is_boolean()) throw config_error("theory_overlay", "expected a boolean");
        c.theory_overlay = j["theory_overlay"].get<bool>();
    }

    if (j.contains("sweep") && !j["sweep"].is_null()) {
        const auto& js = j["sweep"];
        SweepSpec s;
        if (!js.contains("param") || !js["param"].is_string()) throw config_error("sweep.param", "missing string");
        s.param = js["param"].get<std::string>();
        if (s.param != "N" && s.param != "eta" && s.param != "alpha" && s.param != "delta")
            throw config_error("sweep.param", "must be one of N, eta, alpha, delta");
        if (!js.contains("values") || !js["values"].is_array() || js["values"].empty())
            throw config_error("sweep.values", "nonempty array required");
        for (const auto& v : js["values"]) s.values.push_back(number(v, "sweep.values"));
        for (double v : s.values) {
            if (s.param == "N" && (v < 1 || v != std::floor(v))) throw config_error("sweep.values", "N must be a positive integer");
            if (s.param == "delta" && !(v > 0 && v < 1)) throw config_error("sweep.values", "delta must lie in (0, 1)");
            if (s.param == "eta" && !(v > 0)) throw config_error("sweep.values", "eta must be positive");
        }
        c.sweep = std::move(s);
    }

    if (j.contains("output")) {
        const auto& jo = j["output"];
        if (!jo.is_object()) throw config_error("output", "expected an object");
        if (jo.contains("path")) c.output.path = jo["path"].get<std::string>();
        if (jo.contains("format")) c.output.format = jo["format"].get<std::string>();
        if (c.output.format != "csv" && c.output.format != "json")
            throw config_error("output.format", "must be csv or json");
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("<file>", "cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("<file>", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------

// Parameters in effect at one sweep point.
struct SweepPoint {
    std::size_t index = 0;
    std::optional<double> value;
    Instance instance;  // mapping empty; filled per trial
    std::size_t N = 1;
    double alpha = kBalanced;
    double delta = 0.1;
    double eta = 0.0;
    double eta1 = 0.0;
};

inline bool uses_eta1(const ExperimentConfig& c) {
    return std::find(c.algorithms.begin(), c.algorithms.end(), Algorithm::bai_cl_pp) != c.algorithms.end();
}

inline Instance build_instance(const InstanceSpec& spec, std::optional<double> eta_override) {
    const auto& fam = spec.family;
    Instance inst;
    if (fam == "fixed_small") {
        inst = gen_fixed_small();
    } else if (fam == "random_separated") {
        inst = gen_random_separated(spec.M, spec.K, eta_override.value_or(*spec.eta), spec.seed);
    } else if (fam == "uniform_gap") {
        inst = gen_uniform_gap(spec.M, spec.K, eta_override.value_or(*spec.eta));
    } else if (fam == "csv") {
        inst = load_means_csv(spec.path);
    } else {
        std::ifstream in(spec.path);
        if (!in) throw parse_error("cannot open instance JSON '" + spec.path + "'", 0);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(std::string("instance JSON: ") + e.what(), 0);
        }
        inst = instance_from_json(j);
        inst.mapping.clear();
    }
    const bool generated = fam == "random_separated" || fam == "uniform_gap";
    if (!generated && spec.eta) inst.eta = *spec.eta;
    if (spec.eta1) inst.eta1 = *spec.eta1;
    if (eta_override && !generated) inst.eta = *eta_override;
    return inst;
}

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& c) {
    std::vector<SweepPoint> pts;
    const std::size_t count = c.sweep ? c.sweep->values.size() : 1;
    for (std::size_t s = 0; s < count; ++s) {
        SweepPoint p;
        p.index = s;
        p.N = c.mapping.N;
        p.alpha = c.mapping.alpha;
        p.delta = c.delta;
        std::optional<double> eta_override;
        if (c.sweep) {
            const double v = c.sweep->values[s];
            p.value = v;
            if (c.sweep->param == "N") p.N = static_cast<std::size_t>(v);
            else if (c.sweep->param == "alpha") p.alpha = v;
            else if (c.sweep->param == "delta") p.delta = v;
            else eta_override = v;
        }
        p.instance = build_instance(c.instance, eta_override);
        p.eta = p.instance.eta;
        p.eta1 = p.instance.eta1;
        const auto rep = validate(p.instance.means, p.eta, uses_eta1(c) ? p.eta1 : 0.0);
        if (!rep.ok) {
            std::ostringstream msg;
            msg << "instance fails validation at eta=" << p.eta;
            if (uses_eta1(c)) msg << ", eta1=" << p.eta1;
            msg << " (max_eta=" << rep.max_eta << ", max_eta1=" << rep.max_eta1 << ", " << rep.violations.size()
                << " violations)";
            throw config_error("instance", msg.str());
        }
        if (uses_eta1(c) && !(p.eta1 > 0.0)) throw config_error("instance.eta1", "bai_cl_pp requires eta1 > 0");
        for (auto a : c.algorithms)
            if (a != Algorithm::naive && !(p.eta > 0.0)) throw config_error("instance.eta", "must be positive");
        pts.push_back(std::move(p));
    }
    return pts;
}

inline std::uint64_t mapping_seed(std::uint64_t seed, std::size_t sweep_index, std::size_t trial) {
    return hash_keys({seed, sweep_index, hash_string("mapping"), trial});
}

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t sweep_index, Algorithm alg, std::size_t trial) {
    return hash_keys({seed, sweep_index, hash_string(to_string(alg)), trial});
}

inline Instance trial_instance(const ExperimentConfig& c, const SweepPoint& p, std::size_t trial) {
    Instance inst = p.instance;
    inst.mapping = assign_agents(p.N, inst.num_bandits(), p.alpha, mapping_seed(c.seed, p.index, trial));
    return inst;
}

// One algorithm on one trial of one sweep point.
inline RunResult run_trial(const ExperimentConfig& c, const SweepPoint& p, Algorithm alg, std::size_t trial,
                           RunOptions opts = {}) {
    Environment env(trial_instance(c, p, trial), trial_seed(c.seed, p.index, alg, trial), c.costs);
    const std::size_t clusters = env.instance().occupied_bandits();
    switch (alg) {
        case Algorithm::naive: return run_naive(env, p.delta, opts);
        case Algorithm::cl_bai: return run_cl_bai(env, p.delta, p.eta, opts);
        case Algorithm::bai_cl: return run_bai_cl(env, p.delta, p.eta, clusters, opts);
        case Algorithm::bai_cl_pp: return run_bai_cl_pp(env, p.delta, p.eta, p.eta1, clusters, opts);
    }
    throw input_error("unknown algorithm");
}

struct TrialSummary {
    std::uint64_t total_pulls = 0;
    std::uint64_t phase1_pulls = 0;
    std::uint64_t phase2_pulls = 0;
    double comm_cost = 0.0;
    bool correct = false;
    std::size_t anomalies = 0;
    std::size_t phase1_agents = 0;
};

struct ReportRow {
    std::string sweep_param = "none";
    std::optional<double> sweep_value;
    Algorithm algorithm = Algorithm::naive;
    std::size_t trials = 0;
    double mean_pulls = 0.0;
    double std_pulls = 0.0;  // sample standard deviation; 0 for a single trial
    double mean_comm = 0.0;
    std::size_t errors = 0;
    std::size_t anomalies = 0;
    double mean_phase1_pulls = 0.0;
    double mean_phase2_pulls = 0.0;
    double mean_phase1_agents = 0.0;
    std::optional<double> minimax_lb;
    std::optional<double> upper_budget;
    std::vector<TrialSummary> per_trial;
};

struct Report {
    std::vector<ReportRow> rows;
    nlohmann::json config;
};

inline ReportRow summarize(std::vector<TrialSummary> trials) {
    ReportRow row;
    row.trials = trials.size();
    const double n = static_cast<double>(trials.size());
    for (const auto& t : trials) {
        row.mean_pulls += static_cast<double>(t.total_pulls);
        row.mean_comm += t.comm_cost;
        row.mean_phase1_pulls += static_cast<double>(t.phase1_pulls);
        row.mean_phase2_pulls += static_cast<double>(t.phase2_pulls);
        row.mean_phase1_agents += static_cast<double>(t.phase1_agents);
        row.errors += t.correct ? 0 : 1;
        row.anomalies += t.anomalies;
    }
    if (n > 0) {
        row.mean_pulls /= n;
        row.mean_comm /= n;
        row.mean_phase1_pulls /= n;
        row.mean_phase2_pulls /= n;
        row.mean_phase1_agents /= n;
    }
    if (trials.size() > 1) {
        double ss = 0.0;
        for (const auto& t : trials) {
            const double d = static_cast<double>(t.total_pulls) - row.mean_pulls;
            ss += d * d;
        }
        row.std_pulls = std::sqrt(ss / (n - 1.0));
    }
    row.per_trial = std::move(trials);
    return row;
}

inline Report run_experiment(const ExperimentConfig& c) {
    Report rep;
    rep.config = c.source;
    const auto points = sweep_points(c);
    const std::size_t A = c.algorithms.size();
    for (const auto& p : points) {
        std::vector<TrialSummary> slots(A * c.trials);
        detail::parallel_for(slots.size(), c.threads, [&](std::size_t idx) {
            const Algorithm alg = c.algorithms[idx / c.trials];
            const std::size_t t = idx % c.trials;
            const RunResult r = run_trial(c, p, alg, t);
            slots[idx] = {r.total_pulls, r.phase_pulls[0], r.phase_pulls[1], r.comm_cost,
                          r.correct,     r.anomalies.size(), r.phase1_agents.size()};
        });
        for (std::size_t a = 0; a < A; ++a) {
            ReportRow row = summarize({slots.begin() + static_cast<std::ptrdiff_t>(a * c.trials),
                                       slots.begin() + static_cast<std::ptrdiff_t>((a + 1) * c.trials)});
            row.algorithm = c.algorithms[a];
            if (c.sweep) {
                row.sweep_param = c.sweep->param;
                row.sweep_value = p.value;
            }
            if (c.theory_overlay) {
                const Instance inst = trial_instance(c, p, 0);
                const auto br = bound_report(inst, std::span(&c.algorithms[a], 1), p.delta, {p.eta, p.eta1, {}});
                if (br.minimax) row.minimax_lb = br.minimax->value();
                row.upper_budget = br.upper.at(c.algorithms[a]).total();
            }
            rep.rows.push_back(std::move(row));
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline constexpr const char* kReportCsvHeader =
    "sweep_param,sweep_value,algorithm,trials,mean_pulls,std_pulls,mean_comm,errors,anomalies";

inline std::string to_csv(const Report& r) {
    std::ostringstream out;
    out << kReportCsvHeader << '\n';
    for (const auto& row : r.rows) {
        out << row.sweep_param << ',' << (row.sweep_value ? format_number(*row.sweep_value) : "") << ','
            << to_string(row.algorithm) << ',' << row.trials << ',' << format_number(row.mean_pulls) << ','
            << format_number(row.std_pulls) << ',' << format_number(row.mean_comm) << ',' << row.errors << ','
            << row.anomalies << '\n';
    }
    return out.str();
}

inline nlohmann::json to_json(const ReportRow& row) {
    nlohmann::json j{{"sweep_param", row.sweep_param},
                     {"sweep_value", row.sweep_value ? nlohmann::json(*row.sweep_value) : nlohmann::json(nullptr)},
                     {"algorithm", to_string(row.algorithm)},
                     {"trials", row.trials},
                     {"mean_pulls", row.mean_pulls},
                     {"std_pulls", row.std_pulls},
                     {"mean_comm", row.mean_comm},
                     {"errors", row.errors},
                     {"anomalies", row.anomalies},
                     {"mean_phase1_pulls", row.mean_phase1_pulls},
                     {"mean_phase2_pulls", row.mean_phase2_pulls},
                     {"mean_phase1_agents", row.mean_phase1_agents}};
    if (row.minimax_lb) j["minimax_lb"] = *row.minimax_lb;
    if (row.upper_budget) j["upper_budget"] = *row.upper_budget;
    return j;
}

inline std::string to_json_text(const Report& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) rows.push_back(to_json(row));
    return nlohmann::json{{"config", r.config}, {"rows", rows}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Bounds

struct BoundsRow {
    std::string sweep_param = "none";
    std::optional<double> sweep_value;
    BoundReport bounds;
};

inline std::vector<BoundsRow> emit_bounds(const ExperimentConfig& c) {
    std::vector<BoundsRow> out;
    for (const auto& p : sweep_points(c)) {
        BoundsRow row;
        if (c.sweep) {
            row.sweep_param = c.sweep->param;
            row.sweep_value = p.value;
        }
        row.bounds = bound_report(trial_instance(c, p, 0), c.algorithms, p.delta, {p.eta, p.eta1, {}});
        out.push_back(std::move(row));
    }
    return out;
}

inline constexpr const char* kBoundsCsvHeader = "sweep_param,sweep_value,quantity,algorithm,value";

inline std::string bounds_to_csv(const std::vector<BoundsRow>& rows) {
    std::ostringstream out;
    out << kBoundsCsvHeader << '\n';
    for (const auto& r : rows) {
        const std::string prefix = r.sweep_param + ',' + (r.sweep_value ? format_number(*r.sweep_value) : "") + ',';
        auto line = [&](const std::string& q, const std::string& alg, double v) {
            out << prefix << q << ',' << alg << ',' << format_number(v) << '\n';
        };
        if (r.bounds.minimax) {
            line("minimax_lb", "", r.bounds.minimax->value());
            line("minimax_arm_term", "", r.bounds.minimax->arm_term);
            line("minimax_agent_term", "", r.bounds.minimax->agent_term);
        }
        if (r.bounds.instance) {
            line("instance_lb", "", r.bounds.instance->value());
            line("instance_arm_term", "", r.bounds.instance->arm_term);
            line("instance_agent_term", "", r.bounds.instance->agent_term);
        }
        for (const auto& [a, b] : r.bounds.upper) {
            line("upper_budget", to_string(a), b.total());
            line("upper_phase1", to_string(a), b.phase1);
            line("upper_phase2", to_string(a), b.phase2);
        }
    }
    return out.str();
}

inline std::string bounds_to_json_text(const std::vector<BoundsRow>& rows, const nlohmann::json& config) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        auto j = to_json(r.bounds);
        j["sweep_param"] = r.sweep_param;
        j["sweep_value"] = r.sweep_value ? nlohmann::json(*r.sweep_value) : nlohmann::json(nullptr);
        arr.push_back(std::move(j));
    }
    return nlohmann::json{{"config", config}, {"rows", arr}}.dump(2) + "\n";
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

}  // namespace fedbai
