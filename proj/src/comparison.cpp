#include "jbsde/comparison.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jbsde/errors.hpp"
#include "jbsde/rng.hpp"

namespace jbsde {

namespace {

constexpr double kSeRule = 3.0;
constexpr double kStrictTol = 0.25;

struct PairedSolve {
    BackwardSolution first;
    BackwardSolution second;
};

double paired_se(const BackwardSolution& a, const BackwardSolution& b) {
    const auto& sa = a.pathwise_samples();
    const auto& sb = b.pathwise_samples();
    const std::size_t n = sa.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += sa[p] - sb[p];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const double d = sa[p] - sb[p] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n - 1);
    return std::sqrt(var / static_cast<double>(n));
}

void fill_estimates(ComparisonReport& r, const BackwardSolution& s1, const BackwardSolution& s2) {
    r.y1 = {s1.y0(), s1.y0_se()};
    r.y2 = {s2.y0(), s2.y0_se()};
    r.diff = s1.y0() - s2.y0();
    r.diff_se = paired_se(s1, s2);
}

std::vector<std::size_t> cloud_paths(std::size_t n_paths) {
    std::vector<std::size_t> out;
    const std::size_t stride = std::max<std::size_t>(1, n_paths / 64);
    for (std::size_t p = 0; p < n_paths; p += stride) out.push_back(p);
    return out;
}

/// min over the cloud of f1 - f2 evaluated along the first solution.
double min_generator_difference(const GeneratorSpec& f1, const GeneratorSpec& f2, const PathBundle& bundle,
                                const BackwardSolution& sol) {
    double lo = INFINITY;
    const auto& grid = bundle.grid();
    Eigen::RowVectorXd z(static_cast<Eigen::Index>(bundle.dim_w()));
    for (std::size_t p : cloud_paths(bundle.n_paths())) {
        for (std::size_t i = 0; i < std::min(sol.stop_node(p), grid.n_steps()); ++i) {
            const State x = bundle.state_vector(p, i);
            auto zs = sol.z(p, i);
            for (std::size_t j = 0; j < zs.size(); ++j) z[static_cast<Eigen::Index>(j)] = zs[j];
            const double y = sol.y(p, i);
            const double g = sol.gamma(p, i);
            const double t = grid.node(i);
            lo = std::min(lo, f1(t, x, y, z, g) - f2(t, x, y, z, g));
        }
    }
    return lo;
}

std::uint64_t fresh_seed(std::uint64_t seed) { return mix64(seed ^ 0x2545f4914f6cdd1dULL); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::ordered: return "ordered";
        case Verdict::strictly_ordered: return "strictly_ordered";
        case Verdict::violated: return "violated";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

nlohmann::json ComparisonReport::to_json() const {
    nlohmann::json j;
    j["experiment"] = experiment;
    j["seed"] = seed;
    j["Y1"] = {{"estimate", y1.value}, {"se", y1.se}};
    j["Y2"] = {{"estimate", y2.value}, {"se", y2.se}};
    j["difference"] = {{"estimate", diff}, {"paired_se", diff_se}};
    j["verdict"] = to_string(verdict);
    j["vacuous"] = vacuous;
    j["surface_violations"] = surface_violations;
    j["measured_margin"] = measured_margin;
    if (generator_gap) {
        const auto& g = *generator_gap;
        j["generator_gap"] = {{"t", g.t},
                              {"x", std::vector<double>(g.x.data(), g.x.data() + g.x.size())},
                              {"u1", g.u},
                              {"chi1", std::vector<double>(g.chi.data(), g.chi.data() + g.chi.size())},
                              {"zeta1", g.zeta},
                              {"f1", g.f1},
                              {"f2", g.f2},
                              {"gap", g.gap},
                              {"extrapolated", g.extrapolated}};
    }
    if (tau_stats) j["tau_stats"] = {{"mean", tau_stats->mean}, {"min", tau_stats->min}, {"max", tau_stats->max}};
    if (sign_agreement) j["sign_agreement"] = *sign_agreement;
    if (!deterministic_times.empty()) {
        j["deterministic_times"] = nlohmann::json::array();
        for (const auto& d : deterministic_times) {
            j["deterministic_times"].push_back({{"v", d.v}, {"difference", d.diff}, {"paired_se", d.diff_se}});
        }
    }
    if (max_second_derivative) j["max_second_derivative"] = *max_second_derivative;
    j["notes"] = notes;
    return j;
}

std::string ComparisonReport::csv_header() { return "experiment,seed,Y1,SE1,Y2,SE2,gap,tau_mean,verdict"; }

std::string ComparisonReport::csv_row() const {
    std::ostringstream os;
    os << experiment << ',' << seed << ',' << fmt(y1.value) << ',' << fmt(y1.se) << ',' << fmt(y2.value) << ','
       << fmt(y2.se) << ',' << (generator_gap ? fmt(generator_gap->gap) : "") << ','
       << (tau_stats ? fmt(tau_stats->mean) : "") << ',' << to_string(verdict);
    return os.str();
}

// ---------------------------------------------------------------------------

void require_audited(const GeneratorSpec& gen, const std::string& which, const ExperimentSetup& setup) {
    AuditOptions opts = setup.audit;
    opts.dim_x = setup.model.dim_x;
    opts.dim_w = setup.model.dim_w;
    if (opts.x_ref.size() == 0) opts.x_ref = setup.model.x0;
    const auto report = audit_all(gen, setup.measure, setup.grid, opts);
    if (!report.passed()) {
        std::string msg = "generator " + which + " refused: failed";
        for (const auto& name : report.failed()) msg += " " + name;
        for (const auto& r : report.results) {
            if (!r.passed && !r.witnesses.empty()) msg += "; " + r.name + ": " + r.witnesses.front();
        }
        throw AssumptionError(msg);
    }
}

std::vector<GapRow> scan_generator_gap(const GeneratorSpec& f1, const GeneratorSpec& f2,
                                       const BackwardSolution& solution, const ForwardModel& model,
                                       const JumpMeasureSpec& measure,
                                       const std::vector<std::pair<double, State>>& anchors) {
    const ValueFn u = as_value_fn(solution);
    std::vector<GapRow> rows;
    for (const auto& [t, x] : anchors) {
        GapRow row;
        row.t = t;
        row.x = x;
        const auto v = value_function(solution, t, x);
        row.u = v.value;
        row.extrapolated = v.extrapolated;
        row.chi = feynman_kac_z(u, model, t, x);
        row.zeta = feynman_kac_u(u, model, f1, measure, t, x);
        row.f1 = f1(t, x, row.u, row.chi, row.zeta);
        row.f2 = f2(t, x, row.u, row.chi, row.zeta);
        row.gap = row.f1 - row.f2;
        rows.push_back(std::move(row));
    }
    return rows;
}

ComparisonReport run_comparison(const GeneratorSpec& f1, const GeneratorSpec& f2, const TerminalSpec& h1,
                                const TerminalSpec& h2, const ExperimentSetup& setup) {
    require_audited(f1, "f1", setup);
    require_audited(f2, "f2", setup);
    const auto bundle = simulate_paths(setup.model, setup.measure, setup.grid,
                                       {setup.mc.n_paths, setup.mc.seed, setup.mc.workers});
    const auto xi1 = terminal_values(bundle, h1);
    const auto xi2 = terminal_values(bundle, h2);
    BackwardOptions bopts = setup.mc.backward;
    bopts.workers = setup.mc.workers;
    const auto s1 = solve_backward(bundle, f1, setup.measure, xi1, nullptr, bopts);
    const auto s2 = solve_backward(bundle, f2, setup.measure, xi2, nullptr, bopts);

    ComparisonReport r;
    r.experiment = "compare";
    r.seed = setup.mc.seed;
    fill_estimates(r, s1, s2);

    r.measured_margin = -min_generator_difference(f1, f2, bundle, s1);  // min of f2 - f1
    if (r.measured_margin < 0.0) {
        r.vacuous = true;
        r.notes.push_back("hypothesis f1 <= f2 fails on the sampled cloud (min f2 - f1 = " + fmt(r.measured_margin) + ")");
    }
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
        if (xi1[p] > xi2[p]) {
            r.vacuous = true;
            r.notes.push_back("hypothesis h1 <= h2 fails on path " + std::to_string(p));
            break;
        }
    }

    const double slack = kSeRule * r.combined_se();
    const auto& grid = setup.grid;
    for (std::size_t i = 1; i < grid.n_nodes(); i += std::max<std::size_t>(1, grid.n_steps() / 10)) {
        for (std::size_t p : cloud_paths(bundle.n_paths())) {
            const State x = bundle.state_vector(p, i);
            if (s1.value_at(i, x).value > s2.value_at(i, x).value + slack) ++r.surface_violations;
        }
    }

    r.generator_gap = scan_generator_gap(f1, f2, s1, setup.model, setup.measure, {{grid.t_start(), setup.model.x0}}).front();

    if (r.vacuous) {
        r.verdict = Verdict::inconclusive;
    } else {
        r.verdict = r.y1.value <= r.y2.value + slack ? Verdict::ordered : Verdict::violated;
    }
    return r;
}

ComparisonReport run_strict_comparison(const GeneratorSpec& f1, const GeneratorSpec& f2, const TerminalSpec& h,
                                       double margin, const ExperimentSetup& setup) {
    require_audited(f1, "f1", setup);
    require_audited(f2, "f2", setup);
    const auto bundle = simulate_paths(setup.model, setup.measure, setup.grid,
                                       {setup.mc.n_paths, setup.mc.seed, setup.mc.workers});
    const auto xi = terminal_values(bundle, h);
    BackwardOptions bopts = setup.mc.backward;
    bopts.workers = setup.mc.workers;
    const auto s1 = solve_backward(bundle, f1, setup.measure, xi, nullptr, bopts);
    const auto s2 = solve_backward(bundle, f2, setup.measure, xi, nullptr, bopts);

    ComparisonReport r;
    r.experiment = "strict_compare";
    r.seed = setup.mc.seed;
    fill_estimates(r, s1, s2);
    r.measured_margin = min_generator_difference(f1, f2, bundle, s1);
    r.generator_gap =
        scan_generator_gap(f1, f2, s1, setup.model, setup.measure, {{setup.grid.t_start(), setup.model.x0}}).front();

    const double slack = kSeRule * r.combined_se();
    if (!(margin > 0.0)) {
        r.vacuous = true;
        r.notes.push_back("configured margin must be > 0");
    } else if (r.measured_margin < margin) {
        r.vacuous = true;
        r.notes.push_back("f1 - f2 >= margin fails on the sampled cloud (min f1 - f2 = " + fmt(r.measured_margin) + ")");
    }
    const double horizon = setup.grid.t_end() - setup.grid.t_start();
    if (r.vacuous) {
        r.verdict = Verdict::inconclusive;
    } else if (r.diff >= margin * horizon * (1.0 - kStrictTol) - slack) {
        r.verdict = Verdict::strictly_ordered;
    } else if (r.diff < -slack) {
        r.verdict = Verdict::violated;
    } else {
        r.verdict = Verdict::inconclusive;
    }
    return r;
}

ComparisonReport run_converse_experiment(const GeneratorSpec& f1, const GeneratorSpec& f2, const TerminalSpec& h,
                                         const ConverseParams& params, const ExperimentSetup& setup) {
    require_audited(f1, "f1", setup);
    require_audited(f2, "f2", setup);
    const auto& grid = setup.grid;
    const auto anchor = grid.index_of(params.t);
    if (!anchor) throw ConfigError("converse anchor t=" + fmt(params.t) + " is not a grid node");
    if (anchor == grid.n_steps()) throw ConfigError("converse anchor is the last grid node");
    if (static_cast<std::size_t>(params.x.size()) != setup.model.dim_x) {
        throw ConfigError("converse anchor state has the wrong dimension");
    }
    BackwardOptions bopts = setup.mc.backward;
    bopts.workers = setup.mc.workers;

    // (1) global fit of u¹
    const auto global = simulate_paths(setup.model, setup.measure, grid,
                                       {setup.mc.n_paths, setup.mc.seed, setup.mc.workers});
    const auto xi = terminal_values(global, h);
    const auto u1 = solve_backward(global, f1, setup.measure, xi, nullptr, bopts);

    // (2) fresh paths from (t, x)
    ForwardModel local_model = setup.model;
    local_model.x0 = params.x;
    local_model.t0 = params.t;
    const TimeGrid local_grid = grid.slice(*anchor, grid.n_steps());
    const auto fresh = simulate_paths(local_model, setup.measure, local_grid,
                                      {setup.mc.n_paths, fresh_seed(setup.mc.seed), setup.mc.workers});

    // (3) hitting time
    const StoppingRule rule{params.eta, params.delta, params.t, params.x};
    const auto tau = hitting_time(fresh, rule);

    ComparisonReport r;
    r.experiment = "converse";
    r.seed = setup.mc.seed;
    TauStats ts{0.0, INFINITY, -INFINITY};
    for (std::size_t p = 0; p < tau.size(); ++p) {
        const double dt = local_grid.node(tau[p]) - params.t;
        ts.mean += dt;
        ts.min = std::min(ts.min, dt);
        ts.max = std::max(ts.max, dt);
    }
    ts.mean /= static_cast<double>(std::max<std::size_t>(1, tau.size()));
    r.tau_stats = ts;

    // (4) localized solves with terminal u¹(τ, X_τ)
    auto localized = [&](const std::vector<std::size_t>& stops, std::size_t& extrapolated) {
        std::vector<double> terminal(fresh.n_paths());
        extrapolated = 0;
        for (std::size_t p = 0; p < fresh.n_paths(); ++p) {
            const auto v = u1.value_at(*anchor + stops[p], fresh.state_vector(p, stops[p]));
            terminal[p] = v.value;
            if (v.extrapolated) ++extrapolated;
        }
        auto a = solve_backward(fresh, f1, setup.measure, terminal, &stops, bopts);
        auto b = solve_backward(fresh, f2, setup.measure, terminal, &stops, bopts);
        return PairedSolve{std::move(a), std::move(b)};
    };
    std::size_t n_extrapolated = 0;
    const auto solved = localized(tau, n_extrapolated);
    fill_estimates(r, solved.first, solved.second);
    const double extrapolated_fraction =
        static_cast<double>(n_extrapolated) / static_cast<double>(std::max<std::size_t>(1, fresh.n_paths()));
    bool inconclusive = false;
    if (extrapolated_fraction > params.max_extrapolated_fraction) {
        inconclusive = true;
        r.notes.push_back("u1(tau, X_tau) extrapolated on " + fmt(100.0 * extrapolated_fraction) + "% of paths");
    }

    // deterministic stopping times v = t + kδ/4
    for (int k = 1; k <= 4; ++k) {
        const double v = params.t + params.delta * k / 4.0;
        if (v > local_grid.t_end() + 1e-12) break;
        const std::size_t node = local_grid.floor_index(v);
        if (node == 0) continue;
        std::size_t ignored = 0;
        const auto det = localized(std::vector<std::size_t>(fresh.n_paths(), node), ignored);
        r.deterministic_times.push_back({local_grid.node(node), det.first.y0() - det.second.y0(),
                                         paired_se(det.first, det.second)});
    }

    // (5) generator gap at the anchor
    r.generator_gap = scan_generator_gap(f1, f2, u1, setup.model, setup.measure, {{params.t, params.x}}).front();
    if (r.generator_gap->extrapolated) {
        inconclusive = true;
        r.notes.push_back("anchor lies outside the fitted cloud");
    }

    // C^{1,2} diagnostic: second differences of u¹(t, ·) around the anchor
    {
        const ValueFn u = as_value_fn(u1);
        const double hh = std::max(1e-2, 0.05 * params.eta);
        double worst = 0.0;
        for (double s : {-0.5, 0.0, 0.5}) {
            for (Eigen::Index j = 0; j < params.x.size(); ++j) {
                State c = params.x;
                c[j] += s * params.eta;
                State up = c, down = c;
                up[j] += hh;
                down[j] -= hh;
                worst = std::max(worst, std::abs(u(params.t, up) - 2.0 * u(params.t, c) + u(params.t, down)) / (hh * hh));
            }
        }
        r.max_second_derivative = worst;
    }

    const double gap = r.generator_gap->gap;
    const double gap_tol = 1e-12 * std::max({1.0, std::abs(r.generator_gap->f1), std::abs(r.generator_gap->f2)});
    const int gap_sign = gap > gap_tol ? 1 : (gap < -gap_tol ? -1 : 0);
    const double diff_slack = kSeRule * r.diff_se;
    const int diff_sign = r.diff > diff_slack ? 1 : (r.diff < -diff_slack ? -1 : 0);
    r.sign_agreement = gap_sign == diff_sign;
    if (inconclusive) {
        r.verdict = Verdict::inconclusive;
    } else if (gap_sign == diff_sign) {
        r.verdict = Verdict::ordered;
    } else if (diff_sign == 0) {
        r.verdict = Verdict::inconclusive;
        r.notes.push_back("Y1 - Y2 not resolved at this delta and path count");
    } else {
        r.verdict = Verdict::violated;
    }
    return r;
}

}  // namespace jbsde
