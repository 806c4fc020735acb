// fedbai_cli.cpp
//
//   fedbai_cli validate <csv> [--eta v] [--eta1 v]
//   fedbai_cli generate <family> [--M m] [--K k] [--eta v] [--seed s] [--N n] [--alpha a] -o <json>
//   fedbai_cli run -c <config.json> [-o path] [--format csv|json] [--trials n] [--threads n]
//   fedbai_cli bounds -c <config.json> [-o path] [--format csv|json]
//
// Exit codes: 0 success, 1 config or validation error, 2 runtime failure.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <fedbai/fedbai.hpp>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        fedbai::write_text(path, text);
    }
}

int cmd_validate(const std::string& path, std::optional<double> eta, std::optional<double> eta1) {
    const auto inst = fedbai::load_means_csv(path);
    const double e = eta.value_or(inst.eta);
    const double e1 = eta1.value_or(inst.eta1);
    const auto rep = fedbai::validate(inst.means, e, e1);
    auto j = fedbai::to_json(rep);
    j["requested_eta"] = e;
    j["requested_eta1"] = e1;
    j["M"] = inst.num_bandits();
    j["K"] = inst.num_arms();
    std::cout << j.dump(2) << "\n";
    return rep.ok ? kOk : kConfigError;
}

int cmd_generate(const std::string& family, std::size_t M, std::size_t K, std::optional<double> eta,
                 std::uint64_t seed, std::size_t N, double alpha, const std::string& out) {
    fedbai::InstanceSpec spec;
    spec.family = family;
    spec.M = M;
    spec.K = K;
    spec.eta = eta;
    spec.seed = seed;
    if (family == "random_separated" || family == "uniform_gap") {
        if (M < 1 || K < M) throw fedbai::config_error("--M/--K", "need K >= M >= 1");
        if (!eta) throw fedbai::config_error("--eta", "required for family '" + family + "'");
    } else if (family != "fixed_small") {
        throw fedbai::config_error("family", "unknown generator '" + family + "'");
    }
    auto inst = fedbai::build_instance(spec, std::nullopt);
    if (N > 0) inst.mapping = fedbai::assign_agents(N, inst.num_bandits(), alpha, seed);
    emit(fedbai::to_json(inst).dump(2) + "\n", out);
    return kOk;
}

fedbai::ExperimentConfig load(const std::string& path, std::optional<std::size_t> trials,
                              std::optional<unsigned> threads, const std::string& format) {
    auto cfg = fedbai::load_config(path);
    if (trials) {
        if (*trials < 1) throw fedbai::config_error("--trials", "must be >= 1");
        cfg.trials = *trials;
    }
    if (threads) cfg.threads = std::max(1u, *threads);
    if (!format.empty()) {
        if (format != "csv" && format != "json") throw fedbai::config_error("--format", "must be csv or json");
        cfg.output.format = format;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated clustered best-arm identification: simulations and bounds"};
    app.require_subcommand(1);

    std::string csv_path;
    std::optional<double> v_eta, v_eta1;
    auto* validate = app.add_subcommand("validate", "Check a mean-matrix CSV against the separability assumptions");
    validate->add_option("csv", csv_path, "Mean matrix CSV (one row per bandit)")->required();
    validate->add_option("--eta", v_eta, "Requested separability level (default: header or largest valid)");
    validate->add_option("--eta1", v_eta1, "Requested best-arm separation level");

    std::string family, gen_out;
    std::size_t g_M = 0, g_K = 0, g_N = 0;
    std::optional<double> g_eta;
    std::uint64_t g_seed = 0;
    std::string g_alpha = "balanced";
    auto* generate = app.add_subcommand("generate", "Emit a generated instance as JSON");
    generate->add_option("family", family, "fixed_small | random_separated | uniform_gap")->required();
    generate->add_option("--M", g_M, "Number of bandits");
    generate->add_option("--K", g_K, "Number of arms");
    generate->add_option("--eta", g_eta, "Separation parameter");
    generate->add_option("--seed", g_seed, "Generator seed");
    generate->add_option("--N", g_N, "Also assign N agents");
    generate->add_option("--alpha", g_alpha, "Mapping skew exponent or 'balanced'");
    generate->add_option("-o,--output", gen_out, "Output path (default stdout)");

    std::string run_cfg, run_out, run_format;
    std::optional<std::size_t> run_trials;
    std::optional<unsigned> run_threads;
    auto* run = app.add_subcommand("run", "Run an experiment and write its report");
    run->add_option("-c,--config", run_cfg, "Experiment config JSON")->required();
    run->add_option("-o,--output", run_out, "Override report path ('-' for stdout)");
    run->add_option("--format", run_format, "Override report format (csv|json)");
    run->add_option("--trials", run_trials, "Override trial count");
    run->add_option("--threads", run_threads, "Override worker threads");

    std::string b_cfg, b_out, b_format;
    auto* bounds = app.add_subcommand("bounds", "Evaluate lower bounds and upper budgets for a config");
    bounds->add_option("-c,--config", b_cfg, "Experiment config JSON")->required();
    bounds->add_option("-o,--output", b_out, "Output path ('-' for stdout)");
    bounds->add_option("--format", b_format, "csv|json (default: config output format)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*validate) return cmd_validate(csv_path, v_eta, v_eta1);
        if (*generate) {
            double alpha = fedbai::kBalanced;
            if (g_alpha != "balanced") {
                try {
                    alpha = std::stod(g_alpha);
                } catch (const std::exception&) {
                    throw fedbai::config_error("--alpha", "expected a number or 'balanced'");
                }
            }
            return cmd_generate(family, g_M, g_K, g_eta, g_seed, g_N, alpha, gen_out);
        }
        if (*run) {
            const auto cfg = load(run_cfg, run_trials, run_threads, run_format);
            const auto report = fedbai::run_experiment(cfg);
            const std::string text = cfg.output.format == "json" ? fedbai::to_json_text(report) : fedbai::to_csv(report);
            emit(text, run_out.empty() ? cfg.output.path : run_out);
            return kOk;
        }
        if (*bounds) {
            const auto cfg = load(b_cfg, std::nullopt, std::nullopt, b_format);
            const auto rows = fedbai::emit_bounds(cfg);
            const std::string text =
                cfg.output.format == "json" ? fedbai::bounds_to_json_text(rows, cfg.source) : fedbai::bounds_to_csv(rows);
            emit(text, b_out);
            return kOk;
        }
    } catch (const fedbai::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const fedbai::parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kConfigError;
    } catch (const fedbai::input_error& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kOk;
}
