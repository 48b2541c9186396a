#include "jbsde/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "jbsde/errors.hpp"

namespace jbsde {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected a section");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + where + "." + key + "'");
    }
}

std::vector<double> vec_or(const json& obj, const char* key, std::size_t n, double fill, const std::string& where) {
    if (!obj.contains(key)) return std::vector<double>(n, fill);
    auto v = get_or<std::vector<double>>(obj, key, {}, where);
    if (v.size() != n) throw ConfigError("'" + where + "." + key + "' needs " + std::to_string(n) + " entries");
    return v;
}

Eigen::MatrixXd mat_or(const json& obj, const char* key, std::size_t rows, std::size_t cols, const std::string& where) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!obj.contains(key)) return out;
    auto v = get_or<std::vector<std::vector<double>>>(obj, key, {}, where);
    if (v.size() != rows) throw ConfigError("'" + where + "." + key + "' needs " + std::to_string(rows) + " rows");
    for (std::size_t i = 0; i < rows; ++i) {
        if (v[i].size() != cols) {
            throw ConfigError("'" + where + "." + key + "' needs " + std::to_string(cols) + " columns");
        }
        for (std::size_t j = 0; j < cols; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j];
    }
    return out;
}

struct ModelParts {
    ForwardModel model;
    JumpMeasureSpec measure;
};

// Affine coefficient tables, or the scalar preset.
ModelParts make_model(const json& j) {
    const std::string where = "model";
    ModelParts out;
    if (j.contains("preset")) {
        check_keys(j, {"preset", "x0", "sigma", "drift", "jump_size", "intensity"}, where);
        const auto preset = get_or<std::string>(j, "preset", "", where);
        if (preset != "scalar_jump_diffusion") throw ConfigError("unknown model preset '" + preset + "'");
        const double sigma = get_or<double>(j, "sigma", 1.0, where);
        const double drift = get_or<double>(j, "drift", 0.0, where);
        const double size = get_or<double>(j, "jump_size", 0.0, where);
        const double intensity = get_or<double>(j, "intensity", 1.0, where);
        auto& m = out.model;
        m.dim_x = 1;
        m.dim_w = 1;
        m.x0 = State::Constant(1, get_or<double>(j, "x0", 0.0, where));
        m.a = [drift](double, const State&) { return State::Constant(1, drift); };
        m.b = [sigma](double, const State&) { return Eigen::MatrixXd::Constant(1, 1, sigma); };
        m.c = [size](double, const State&, double e) { return Eigen::MatrixXd::Constant(1, 1, size * e); };
        if (size != 0.0) out.measure.components.push_back({{1.0}, {intensity}});
        else out.measure.components.push_back({{}, {}});
        return out;
    }
    check_keys(j, {"m", "d", "l", "x0", "drift", "diffusion", "jump_size", "jumps"}, where);
    const auto m = get_or<std::size_t>(j, "m", 1, where);
    const auto d = get_or<std::size_t>(j, "d", 1, where);
    const auto l = get_or<std::size_t>(j, "l", 0, where);
    if (m == 0 || d == 0) throw ConfigError("model.m and model.d must be >= 1");
    const auto x0 = vec_or(j, "x0", m, 0.0, where);

    const json drift = j.value("drift", json::object());
    check_keys(drift, {"const", "linear"}, where + ".drift");
    const auto a0 = vec_or(drift, "const", m, 0.0, where + ".drift");
    const Eigen::MatrixXd a1 = mat_or(drift, "linear", m, m, where + ".drift");
    const State a0v = Eigen::Map<const State>(a0.data(), static_cast<Eigen::Index>(m));

    const json diff = j.value("diffusion", json::object());
    check_keys(diff, {"const", "proportional"}, where + ".diffusion");
    const Eigen::MatrixXd b0 = mat_or(diff, "const", m, d, where + ".diffusion");
    const Eigen::MatrixXd b1 = mat_or(diff, "proportional", m, d, where + ".diffusion");

    const json jump = j.value("jump_size", json::object());
    check_keys(jump, {"const", "proportional"}, where + ".jump_size");
    const Eigen::MatrixXd c0 = mat_or(jump, "const", m, l, where + ".jump_size");
    const Eigen::MatrixXd c1 = mat_or(jump, "proportional", m, l, where + ".jump_size");

    auto& model = out.model;
    model.dim_x = m;
    model.dim_w = d;
    model.x0 = Eigen::Map<const State>(x0.data(), static_cast<Eigen::Index>(m));
    model.a = [a0v, a1](double, const State& x) { return State(a0v + a1 * x); };
    model.b = [b0, b1](double, const State& x) { return Eigen::MatrixXd(b0 + (b1.array().colwise() * x.array()).matrix()); };
    model.c = [c0, c1](double, const State& x, double e) {
        return Eigen::MatrixXd((c0 + (c1.array().colwise() * x.array()).matrix()) * e);
    };

    const json jumps = j.value("jumps", json::array());
    if (!jumps.is_array() || jumps.size() != l) {
        throw ConfigError("'model.jumps' needs one entry per jump component (l = " + std::to_string(l) + ")");
    }
    for (std::size_t i = 0; i < l; ++i) {
        const std::string w = where + ".jumps[" + std::to_string(i) + "]";
        check_keys(jumps[i], {"marks", "intensities"}, w);
        JumpComponent comp;
        comp.marks = get_or<std::vector<double>>(jumps[i], "marks", {}, w);
        comp.intensities = get_or<std::vector<double>>(jumps[i], "intensities", {}, w);
        out.measure.components.push_back(std::move(comp));
    }
    try {
        out.measure.check();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("model.jumps: ") + e.what());
    }
    return out;
}

}  // namespace

GeneratorSpec make_generator(const json& j, const JumpMeasureSpec& measure, std::size_t dim_x, std::size_t dim_w,
                             const std::string& where) {
    check_keys(j, {"preset", "value", "rho", "table", "gamma", "u1", "u2"}, where);
    struct Table {
        double k = 0.0, t = 0.0, t2 = 0.0, y = 0.0, g = 0.0, sin_z = 0.0, inv_t = 0.0;
        double step_at = 0.0, step_height = 0.0;
        std::vector<double> x, z;
    } tab;
    tab.x.assign(dim_x, 0.0);
    tab.z.assign(dim_w, 0.0);

    const auto preset = get_or<std::string>(j, "preset", "table", where);
    if (preset == "zero") {
    } else if (preset == "constant") {
        tab.k = get_or<double>(j, "value", 1.0, where);
    } else if (preset == "linear_ode") {
        tab.y = -get_or<double>(j, "rho", 0.5, where);
    } else if (preset == "gamma_driver") {
        tab.g = 1.0;
    } else if (preset != "table") {
        throw ConfigError("unknown generator preset '" + preset + "' in " + where);
    }
    if (j.contains("table")) {
        const std::string w = where + ".table";
        const json& t = j.at("table");
        check_keys(t, {"const", "t", "t2", "x", "y", "z", "gamma_integral", "sin_z", "inv_t", "step_at", "step_height"}, w);
        tab.k += get_or<double>(t, "const", 0.0, w);
        tab.t += get_or<double>(t, "t", 0.0, w);
        tab.t2 += get_or<double>(t, "t2", 0.0, w);
        tab.y += get_or<double>(t, "y", 0.0, w);
        tab.g += get_or<double>(t, "gamma_integral", 0.0, w);
        tab.sin_z += get_or<double>(t, "sin_z", 0.0, w);
        tab.inv_t += get_or<double>(t, "inv_t", 0.0, w);
        tab.step_at = get_or<double>(t, "step_at", 0.0, w);
        tab.step_height = get_or<double>(t, "step_height", 0.0, w);
        const auto xs = vec_or(t, "x", dim_x, 0.0, w);
        const auto zs = vec_or(t, "z", dim_w, 0.0, w);
        for (std::size_t i = 0; i < dim_x; ++i) tab.x[i] += xs[i];
        for (std::size_t i = 0; i < dim_w; ++i) tab.z[i] += zs[i];
    }

    GeneratorSpec gen;
    gen.label = preset;
    gen.f1 = [tab](double t, const State& x, double y, const Eigen::RowVectorXd& z, double g) {
        double v = tab.k + tab.t * t + tab.t2 * t * t + tab.y * y + tab.g * g;
        for (std::size_t i = 0; i < tab.x.size(); ++i) v += tab.x[i] * x[static_cast<Eigen::Index>(i)];
        for (std::size_t i = 0; i < tab.z.size(); ++i) v += tab.z[i] * z[static_cast<Eigen::Index>(i)];
        if (tab.sin_z != 0.0) v += tab.sin_z * std::sin(z[0]);
        if (tab.inv_t != 0.0) v += tab.inv_t / t;
        if (tab.step_height != 0.0 && t >= tab.step_at) v += tab.step_height;
        return v;
    };

    // γ: constant per component, or per mark
    const std::size_t l = measure.dim();
    std::vector<std::vector<double>> by_mark(l);
    std::vector<double> gconst(l, 0.0);
    if (j.contains("gamma")) {
        const std::string w = where + ".gamma";
        const json& g = j.at("gamma");
        check_keys(g, {"const", "by_mark"}, w);
        gconst = vec_or(g, "const", l, 0.0, w);
        if (g.contains("by_mark")) {
            by_mark = get_or<std::vector<std::vector<double>>>(g, "by_mark", {}, w);
            if (by_mark.size() != l) throw ConfigError("'" + w + ".by_mark' needs one row per jump component");
            for (std::size_t i = 0; i < l; ++i) {
                if (by_mark[i].size() != measure.components[i].marks.size()) {
                    throw ConfigError("'" + w + ".by_mark' row " + std::to_string(i) + " needs one value per mark");
                }
            }
        }
    }
    const auto marks = measure;
    gen.gamma = [gconst, by_mark, marks](double, double e) {
        Eigen::RowVectorXd row(static_cast<Eigen::Index>(gconst.size()));
        for (std::size_t i = 0; i < gconst.size(); ++i) {
            double v = gconst[i];
            if (!by_mark[i].empty()) {
                const auto& ms = marks.components[i].marks;
                for (std::size_t k = 0; k < ms.size(); ++k) {
                    if (ms[k] == e) v = by_mark[i][k];
                }
            }
            row[static_cast<Eigen::Index>(i)] = v;
        }
        return row;
    };

    // declared moduli: numbers, or "auto" from the table
    double gamma_norm2 = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
        const auto& comp = measure.components[i];
        for (std::size_t k = 0; k < comp.marks.size(); ++k) {
            const double gv = by_mark[i].empty() ? gconst[i] : by_mark[i][k];
            gamma_norm2 += gv * gv * comp.intensities[k];
        }
    }
    double znorm = 0.0;
    for (double v : tab.z) znorm += v * v;
    const double auto_u1 = std::abs(tab.y);
    const double auto_u2 = std::max(std::sqrt(znorm) + std::abs(tab.sin_z), std::sqrt(gamma_norm2));
    auto modulus = [&](const char* key, double automatic) -> double {
        if (!j.contains(key)) return automatic;
        const json& v = j.at(key);
        if (v.is_string() && v.get<std::string>() == "auto") return automatic;
        if (v.is_number()) return v.get<double>();
        throw ConfigError("'" + where + "." + key + "' must be a number or \"auto\"");
    };
    const double u1 = modulus("u1", auto_u1);
    const double u2 = modulus("u2", auto_u2);
    gen.u1 = [u1](double) { return u1; };
    gen.u2 = [u2](double) { return u2; };
    return gen;
}

TerminalSpec make_terminal(const json& j, std::size_t dim_x, const std::string& where) {
    check_keys(j, {"preset", "value", "slope", "offset", "growth_constant"}, where);
    const auto preset = get_or<std::string>(j, "preset", "identity", where);
    TerminalSpec term;
    if (preset == "identity") {
        term.h = [](const State& x) { return x[0]; };
        term.growth_constant = 1.0;
    } else if (preset == "constant") {
        const double v = get_or<double>(j, "value", 0.0, where);
        term.h = [v](const State&) { return v; };
        term.growth_constant = std::abs(v);
    } else if (preset == "affine") {
        const double offset = get_or<double>(j, "offset", 0.0, where);
        const auto slope = vec_or(j, "slope", dim_x, 0.0, where);
        const State s = Eigen::Map<const State>(slope.data(), static_cast<Eigen::Index>(dim_x));
        term.h = [offset, s](const State& x) { return offset + s.dot(x); };
        term.growth_constant = std::max(std::abs(offset), s.norm());
    } else if (preset == "square") {
        term.h = [](const State& x) { return x.squaredNorm(); };
        term.growth_constant = 1.0;
    } else {
        throw ConfigError("unknown terminal preset '" + preset + "' in " + where);
    }
    term.growth_constant = get_or<double>(j, "growth_constant", term.growth_constant, where);
    return term;
}

ExperimentConfig parse_config(const json& j) {
    check_keys(j, {"id", "model", "generator", "generator2", "terminal", "terminal2", "grid", "mc", "regression",
                   "audit", "compare", "converse", "validation", "output"},
               "");
    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.id = get_or<std::string>(j, "id", "experiment", "");

    if (!j.contains("grid")) throw ConfigError("missing section 'grid'");
    const json& g = j.at("grid");
    check_keys(g, {"t_start", "T_max", "n_steps", "nodes"}, "grid");
    if (g.contains("nodes")) {
        cfg.setup.grid = TimeGrid::from_nodes(get_or<std::vector<double>>(g, "nodes", {}, "grid"));
    } else {
        cfg.setup.grid = TimeGrid::uniform(get_or<double>(g, "t_start", 0.0, "grid"), get_or<double>(g, "T_max", 1.0, "grid"),
                                           get_or<std::size_t>(g, "n_steps", 100, "grid"));
    }

    auto parts = make_model(j.value("model", json::object()));
    cfg.setup.model = std::move(parts.model);
    cfg.setup.model.t0 = cfg.setup.grid.t_start();
    cfg.setup.measure = std::move(parts.measure);
    const std::size_t m = cfg.setup.model.dim_x;
    const std::size_t d = cfg.setup.model.dim_w;

    cfg.generator = make_generator(j.value("generator", json{{"preset", "zero"}}), cfg.setup.measure, m, d, "generator");
    if (j.contains("generator2")) cfg.generator2 = make_generator(j.at("generator2"), cfg.setup.measure, m, d, "generator2");
    cfg.terminal = make_terminal(j.value("terminal", json::object()), m, "terminal");
    if (j.contains("terminal2")) cfg.terminal2 = make_terminal(j.at("terminal2"), m, "terminal2");

    const json mc = j.value("mc", json::object());
    check_keys(mc, {"n_paths", "seed", "workers"}, "mc");
    cfg.setup.mc.n_paths = get_or<std::size_t>(mc, "n_paths", 10000, "mc");
    cfg.setup.mc.seed = get_or<std::uint64_t>(mc, "seed", 0, "mc");
    cfg.setup.mc.workers = get_or<std::size_t>(mc, "workers", 1, "mc");
    if (cfg.setup.mc.n_paths < 2) throw ConfigError("mc.n_paths must be >= 2");

    const json reg = j.value("regression", json::object());
    check_keys(reg, {"degree", "ridge"}, "regression");
    cfg.setup.mc.backward.degree = get_or<std::size_t>(reg, "degree", 2, "regression");
    cfg.setup.mc.backward.ridge = get_or<double>(reg, "ridge", 1e-8, "regression");

    const json au = j.value("audit", json::object());
    check_keys(au, {"n_samples", "seed", "tol", "x_radius", "y_range", "z_range", "gamma_range", "tail_tolerance",
                    "a3_mesh", "a3_tol"},
               "audit");
    auto& ao = cfg.setup.audit;
    ao.n_samples = get_or<std::size_t>(au, "n_samples", ao.n_samples, "audit");
    ao.seed = get_or<std::uint64_t>(au, "seed", cfg.setup.mc.seed, "audit");
    ao.tol = get_or<double>(au, "tol", ao.tol, "audit");
    ao.x_radius = get_or<double>(au, "x_radius", ao.x_radius, "audit");
    ao.y_range = get_or<double>(au, "y_range", ao.y_range, "audit");
    ao.z_range = get_or<double>(au, "z_range", ao.z_range, "audit");
    ao.gamma_range = get_or<double>(au, "gamma_range", ao.gamma_range, "audit");
    ao.tail_tolerance = get_or<double>(au, "tail_tolerance", ao.tail_tolerance, "audit");
    ao.a3_mesh = get_or<std::size_t>(au, "a3_mesh", ao.a3_mesh, "audit");
    ao.a3_tol = get_or<double>(au, "a3_tol", ao.a3_tol, "audit");
    ao.dim_x = m;
    ao.dim_w = d;
    ao.x_ref = cfg.setup.model.x0;

    const json val = j.value("validation", json::object());
    check_keys(val, {"domain_radius", "n_samples"}, "validation");
    cfg.validation.domain_radius = get_or<double>(val, "domain_radius", cfg.validation.domain_radius, "validation");
    cfg.validation.n_samples = get_or<std::size_t>(val, "n_samples", cfg.validation.n_samples, "validation");
    cfg.validation.seed = cfg.setup.mc.seed;
    cfg.validation.tail_tolerance = ao.tail_tolerance;

    if (j.contains("compare")) {
        const json& c = j.at("compare");
        check_keys(c, {"margin"}, "compare");
        if (c.contains("margin")) cfg.strict_margin = get_or<double>(c, "margin", 0.0, "compare");
    }
    if (j.contains("converse")) {
        const json& c = j.at("converse");
        check_keys(c, {"t", "x", "eta", "delta", "max_extrapolated_fraction"}, "converse");
        ConverseParams p;
        p.t = get_or<double>(c, "t", cfg.setup.grid.t_start(), "converse");
        const auto x = vec_or(c, "x", m, 0.0, "converse");
        p.x = Eigen::Map<const State>(x.data(), static_cast<Eigen::Index>(m));
        p.eta = get_or<double>(c, "eta", p.eta, "converse");
        p.delta = get_or<double>(c, "delta", p.delta, "converse");
        p.max_extrapolated_fraction = get_or<double>(c, "max_extrapolated_fraction", p.max_extrapolated_fraction, "converse");
        cfg.converse = p;
    }
    const json out = j.value("output", json::object());
    check_keys(out, {"paths", "solution"}, "output");
    cfg.dump_paths = get_or<bool>(out, "paths", true, "output");
    cfg.dump_solution = get_or<bool>(out, "solution", true, "output");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

}  // namespace jbsde
