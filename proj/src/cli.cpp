#include "jbsde/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "jbsde/config.hpp"
#include "jbsde/errors.hpp"

namespace jbsde {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::size_t> paths;
};

ExperimentConfig load(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config '" + o.config + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + o.config + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (o.seed) j["mc"]["seed"] = *o.seed;
    if (o.paths) j["mc"]["n_paths"] = *o.paths;
    auto cfg = parse_config(j);
    if (o.workers) cfg.setup.mc.workers = std::max<std::size_t>(1, *o.workers);
    // the worker count never changes results, so it is not part of the echo
    if (cfg.raw.contains("mc")) cfg.raw["mc"].erase("workers");
    return cfg;
}

fs::path out_dir(const Options& o) {
    if (o.out_dir.empty()) throw ConfigError("--out is required for this command");
    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    return dir;
}

nlohmann::json provenance(const ExperimentConfig& cfg) {
    return {{"version", kVersion}, {"seed", cfg.setup.mc.seed}, {"config", cfg.raw}};
}

void write_csv(const fs::path& path, const ExperimentConfig& cfg, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write '" + path.string() + "'");
    os << "# jbsde " << kVersion << '\n';
    os << "# seed: " << cfg.setup.mc.seed << '\n';
    os << "# config: " << cfg.raw.dump() << '\n';
    body(os);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write '" + path.string() + "'");
    os << j.dump(2) << '\n';
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Options& o, std::ostream& out) {
    const auto cfg = load(o);
    const auto dir = out_dir(o);
    const auto& s = cfg.setup;
    const auto bundle = simulate_paths(s.model, s.measure, s.grid, {s.mc.n_paths, s.mc.seed, s.mc.workers});
    write_csv(dir / "paths.csv", cfg, [&](std::ostream& os) { write_paths_csv(os, bundle); });
    write_csv(dir / "events.csv", cfg, [&](std::ostream& os) { write_events_csv(os, bundle); });
    std::size_t n_events = 0;
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) n_events += bundle.events(p).size();
    out << "simulated " << bundle.n_paths() << " paths x " << s.grid.n_nodes() << " nodes, " << n_events
        << " jump events -> " << dir.string() << '\n';
    return kExitOk;
}

nlohmann::json audit_json(const ExperimentConfig& cfg, const GeneratorSpec& gen, bool& passed) {
    const auto& s = cfg.setup;
    const auto validation = validate_model(s.model, s.measure, gen, cfg.terminal, s.grid, cfg.validation);
    const auto report = audit_all(gen, s.measure, s.grid, s.audit);
    passed = validation.passed() && report.passed();
    nlohmann::json j = report.to_json();
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : validation.checks) {
        checks.push_back({{"name", c.name}, {"status", c.passed ? "pass" : "fail"}, {"witness", c.witness}});
    }
    j["model_validation"] = {{"status", validation.passed() ? "pass" : "fail"},
                             {"checks", checks},
                             {"warnings", validation.warnings}};
    j["status"] = passed ? "pass" : "fail";
    return j;
}

int cmd_audit(const Options& o, std::ostream& out) {
    const auto cfg = load(o);
    bool passed = true;
    nlohmann::json j = provenance(cfg);
    j["generator"] = audit_json(cfg, cfg.generator, passed);
    if (cfg.generator2) {
        bool passed2 = true;
        j["generator2"] = audit_json(cfg, *cfg.generator2, passed2);
        passed = passed && passed2;
    }
    j["status"] = passed ? "pass" : "fail";
    if (!o.out_dir.empty()) write_json(out_dir(o) / "audit.json", j);
    out << j.dump(2) << '\n';
    if (!passed) {
        out << "audit failed:";
        for (const char* key : {"generator", "generator2"}) {
            if (!j.contains(key)) continue;
            for (const auto& name : j[key]["failed"]) out << ' ' << key << '.' << name.get<std::string>();
            for (const auto& c : j[key]["model_validation"]["checks"]) {
                if (c["status"] == "fail") out << ' ' << key << '.' << c["name"].get<std::string>();
            }
        }
        out << '\n';
    }
    return passed ? kExitOk : kExitVerdict;
}

int cmd_solve(const Options& o, std::ostream& out) {
    const auto cfg = load(o);
    const auto dir = out_dir(o);
    const auto& s = cfg.setup;
    require_audited(cfg.generator, "generator", s);
    const auto bundle = simulate_paths(s.model, s.measure, s.grid, {s.mc.n_paths, s.mc.seed, s.mc.workers});
    const auto xi = terminal_values(bundle, cfg.terminal);
    BackwardOptions bopts = s.mc.backward;
    bopts.workers = s.mc.workers;
    const auto sol = solve_backward(bundle, cfg.generator, s.measure, xi, nullptr, bopts);

    if (cfg.dump_paths) {
        write_csv(dir / "paths.csv", cfg, [&](std::ostream& os) { write_paths_csv(os, bundle); });
        write_csv(dir / "events.csv", cfg, [&](std::ostream& os) { write_events_csv(os, bundle); });
    }
    if (cfg.dump_solution) {
        write_csv(dir / "solution.csv", cfg, [&](std::ostream& os) { write_solution_csv(os, sol); });
    }
    std::vector<std::string> quantities{"continuation", "gamma"};
    for (std::size_t j = 0; j < s.model.dim_w; ++j) quantities.push_back("z" + std::to_string(j + 1));
    for (const auto& q : quantities) {
        write_csv(dir / ("coefficients_" + q + ".csv"), cfg,
                  [&](std::ostream& os) { write_coefficients_csv(os, sol, q); });
    }
    const auto z0 = sol.z0();
    write_csv(dir / "summary.csv", cfg, [&](std::ostream& os) {
        os << "experiment,seed,Y0,SE";
        for (Eigen::Index j = 0; j < z0.size(); ++j) os << ",Z0_" << j + 1;
        os << ",Gamma0\n";
        os << cfg.id << ',' << s.mc.seed << ',' << fmt(sol.y0()) << ',' << fmt(sol.y0_se());
        for (Eigen::Index j = 0; j < z0.size(); ++j) os << ',' << fmt(z0[j]);
        os << ',' << fmt(sol.gamma0()) << '\n';
    });
    out << cfg.id << ": Y0 = " << fmt(sol.y0()) << " (SE " << fmt(sol.y0_se()) << ")\n";
    return kExitOk;
}

int write_report(const ExperimentConfig& cfg, ComparisonReport report, const fs::path& dir, std::ostream& out) {
    report.experiment = cfg.id;
    nlohmann::json j = provenance(cfg);
    j["report"] = report.to_json();
    write_json(dir / "report.json", j);
    write_csv(dir / "report.csv", cfg, [&](std::ostream& os) {
        os << ComparisonReport::csv_header() << '\n' << report.csv_row() << '\n';
    });
    out << ComparisonReport::csv_header() << '\n' << report.csv_row() << '\n';
    for (const auto& n : report.notes) out << "note: " << n << '\n';
    return report.verdict == Verdict::violated ? kExitVerdict : kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
    const auto cfg = load(o);
    const auto dir = out_dir(o);
    if (!cfg.generator2) throw ConfigError("compare needs a 'generator2' section");
    if (cfg.strict_margin) {
        return write_report(cfg, run_strict_comparison(cfg.generator, *cfg.generator2, cfg.terminal, *cfg.strict_margin, cfg.setup),
                            dir, out);
    }
    const TerminalSpec& h2 = cfg.terminal2 ? *cfg.terminal2 : cfg.terminal;
    return write_report(cfg, run_comparison(cfg.generator, *cfg.generator2, cfg.terminal, h2, cfg.setup), dir, out);
}

int cmd_converse(const Options& o, std::ostream& out) {
    const auto cfg = load(o);
    const auto dir = out_dir(o);
    if (!cfg.generator2) throw ConfigError("converse needs a 'generator2' section");
    if (!cfg.converse) throw ConfigError("converse needs a 'converse' section");
    return write_report(cfg, run_converse_experiment(cfg.generator, *cfg.generator2, cfg.terminal, *cfg.converse, cfg.setup),
                        dir, out);
}

struct OracleCase {
    std::string name;
    nlohmann::json generator;
    nlohmann::json terminal;
    std::string oracle;
    std::map<std::string, double> params;
    std::function<double(const BackwardSolution&)> tolerance;
};

int cmd_oracles(const Options& o, std::ostream& out) {
    const std::size_t n_paths = o.paths.value_or(10000);
    const std::uint64_t seed = o.seed.value_or(1);
    const std::size_t workers = o.workers.value_or(1);
    const std::vector<OracleCase> cases{
        {"zero_driver_martingale", {{"preset", "zero"}}, {{"preset", "identity"}}, "zero_driver_martingale",
         {{"sigma", 1.0}}, [](const BackwardSolution& s) { return 3.0 * s.y0_se(); }},
        {"constant_driver", {{"preset", "constant"}, {"value", 1.0}}, {{"preset", "constant"}, {"value", 0.0}},
         "constant_driver", {{"k", 1.0}, {"T", 1.0}}, [](const BackwardSolution&) { return 1e-12; }},
        {"linear_ode", {{"preset", "linear_ode"}, {"rho", 0.5}}, {{"preset", "constant"}, {"value", 1.0}}, "linear_ode",
         {{"rho", 0.5}, {"T", 1.0}, {"terminal", 1.0}}, [](const BackwardSolution&) { return 0.01; }},
    };
    bool all = true;
    out << std::left << std::setw(24) << "oracle" << std::setw(26) << "Y0" << std::setw(26) << "expected"
        << std::setw(14) << "tolerance" << "result\n";
    for (const auto& c : cases) {
        nlohmann::json j = {{"id", c.name},
                            {"model", {{"preset", "scalar_jump_diffusion"}, {"sigma", 1.0}, {"jump_size", 1.0}, {"intensity", 1.0}}},
                            {"generator", c.generator},
                            {"terminal", c.terminal},
                            {"grid", {{"t_start", 0.0}, {"T_max", 1.0}, {"n_steps", 100}}},
                            {"mc", {{"n_paths", n_paths}, {"seed", seed}}}};
        auto cfg = parse_config(j);
        const auto& s = cfg.setup;
        const auto bundle = simulate_paths(s.model, s.measure, s.grid, {s.mc.n_paths, s.mc.seed, workers});
        const auto xi = terminal_values(bundle, cfg.terminal);
        BackwardOptions bopts = s.mc.backward;
        bopts.workers = workers;
        const auto sol = solve_backward(bundle, cfg.generator, s.measure, xi, nullptr, bopts);
        const double expected = closed_form_oracle(c.oracle, c.params)(0.0, s.model.x0).y;
        const double tol = c.tolerance(sol);
        const bool ok = std::abs(sol.y0() - expected) <= tol;
        all = all && ok;
        out << std::setw(24) << c.name << std::setw(26) << fmt(sol.y0()) << std::setw(26) << fmt(expected)
            << std::setw(14) << tol << (ok ? "PASS" : "FAIL") << '\n';
    }
    return all ? kExitOk : kExitVerdict;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Monte Carlo laboratory for forward-backward SDEs with jumps and their comparison theorems", "jbsde"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Options o;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::size_t paths = 0;
    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", o.config, "experiment configuration (JSON)")->required();
        auto* opt = sub->add_option("--out", o.out_dir, "output directory");
        if (needs_out) opt->required();
        sub->add_option("--seed", seed, "override mc.seed");
        sub->add_option("--workers", workers, "worker threads (results do not depend on it)");
        sub->add_option("--paths", paths, "override mc.n_paths");
    };
    std::map<std::string, std::function<int(const Options&, std::ostream&)>> commands{
        {"simulate", cmd_simulate}, {"solve", cmd_solve},       {"audit", cmd_audit},
        {"compare", cmd_compare},   {"converse", cmd_converse}, {"oracles", cmd_oracles}};
    add_common(app.add_subcommand("simulate", "simulate forward paths and dump them as CSV"), true);
    add_common(app.add_subcommand("solve", "solve the backward equation and dump the solution"), true);
    add_common(app.add_subcommand("audit", "audit the generator assumptions; exit 1 on failure"), false);
    add_common(app.add_subcommand("compare", "comparison or strict comparison experiment"), true);
    add_common(app.add_subcommand("converse", "converse comparison experiment"), true);
    auto* oracles = app.add_subcommand("oracles", "run the closed-form oracle suite");
    oracles->add_option("--seed", seed, "seed");
    oracles->add_option("--workers", workers, "worker threads");
    oracles->add_option("--paths", paths, "paths per oracle");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--workers")) o.workers = workers;
    if (sub->count("--paths")) o.paths = paths;
    try {
        return commands.at(sub->get_name())(o, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const AssumptionError& e) {
        err << "assumption audit failed: " << e.what() << '\n';
        return kExitVerdict;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ModelError& e) {
        err << "model error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace jbsde
