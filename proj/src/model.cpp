#include "jbsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jbsde/errors.hpp"
#include "jbsde/rng.hpp"

namespace jbsde {

namespace {

std::string format_state(const State& x) {
    std::ostringstream os;
    os << '(';
    for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
}

template <typename Fn>
auto evaluate(const char* what, const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw ModelError(std::string("coefficient evaluation error: ") + what + " at " + where +
                         ": " + e.what());
    }
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Composite midpoint rule; the integrands here are smooth moduli.
double integrate(const ModulusFn& f, double a, double b, std::size_t n = 2048) {
    if (!f || b <= a) return 0.0;
    const double h = (b - a) / static_cast<double>(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += f(a + (static_cast<double>(i) + 0.5) * h);
    return s * h;
}

}  // namespace

// ---------------------------------------------------------------------------

TimeGrid TimeGrid::uniform(double t_start, double t_end, std::size_t n_steps) {
    if (n_steps == 0) throw ConfigError("time grid needs n_steps >= 1");
    if (!(t_end > t_start) || !std::isfinite(t_start) || !std::isfinite(t_end) || t_start < 0.0) {
        throw ConfigError("time grid needs 0 <= t_start < t_end");
    }
    std::vector<double> nodes(n_steps + 1);
    const double dt = (t_end - t_start) / static_cast<double>(n_steps);
    for (std::size_t i = 0; i <= n_steps; ++i) nodes[i] = t_start + static_cast<double>(i) * dt;
    nodes.back() = t_end;
    return TimeGrid(std::move(nodes));
}

TimeGrid TimeGrid::from_nodes(std::vector<double> nodes) {
    if (nodes.size() < 2) throw ConfigError("time grid needs at least two nodes");
    if (nodes.front() < 0.0) throw ConfigError("time grid needs t_start >= 0");
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (!(nodes[i] > nodes[i - 1]) || !std::isfinite(nodes[i])) {
            throw ConfigError("time grid nodes must be finite and strictly increasing");
        }
    }
    return TimeGrid(std::move(nodes));
}

double TimeGrid::tolerance() const { return 1e-9 * std::max(1.0, std::abs(t_end())); }

std::optional<std::size_t> TimeGrid::index_of(double t) const {
    const std::size_t i = floor_index(std::max(t, t_start()));
    if (std::abs(nodes_[i] - t) <= tolerance()) return i;
    if (i + 1 < nodes_.size() && std::abs(nodes_[i + 1] - t) <= tolerance()) return i + 1;
    return std::nullopt;
}

std::size_t TimeGrid::floor_index(double t) const {
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t + tolerance());
    if (it == nodes_.begin()) return 0;
    return static_cast<std::size_t>(std::distance(nodes_.begin(), it)) - 1;
}

std::size_t TimeGrid::step_containing(double t) const {
    // first node >= t, minus one
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
    std::size_t j = static_cast<std::size_t>(std::distance(nodes_.begin(), it));
    if (j == 0) return 0;
    return std::min(j - 1, n_steps() - 1);
}

TimeGrid TimeGrid::slice(std::size_t first, std::size_t last) const {
    if (!(first < last) || last >= nodes_.size()) throw ConfigError("invalid grid slice");
    return TimeGrid(std::vector<double>(nodes_.begin() + static_cast<std::ptrdiff_t>(first),
                                        nodes_.begin() + static_cast<std::ptrdiff_t>(last) + 1));
}

// ---------------------------------------------------------------------------

double JumpComponent::total_intensity() const {
    double s = 0.0;
    for (double l : intensities) s += l;
    return s;
}

double JumpMeasureSpec::total_intensity() const {
    double s = 0.0;
    for (const auto& c : components) s += c.total_intensity();
    return s;
}

void JumpMeasureSpec::check() const {
    for (std::size_t i = 0; i < components.size(); ++i) {
        const auto& c = components[i];
        if (c.marks.size() != c.intensities.size()) {
            throw ConfigError("jump component " + std::to_string(i + 1) +
                              ": marks and intensities differ in length");
        }
        for (double l : c.intensities) {
            if (!(l > 0.0) || !std::isfinite(l)) {
                throw ConfigError("jump component " + std::to_string(i + 1) +
                                  ": intensities must be finite and > 0");
            }
        }
        for (double e : c.marks) {
            if (!std::isfinite(e)) throw ConfigError("jump marks must be finite");
        }
    }
}

double gamma_square_integral(const GeneratorSpec& gen, const JumpMeasureSpec& measure, double t) {
    double s = 0.0;
    for (std::size_t i = 0; i < measure.components.size(); ++i) {
        const auto& comp = measure.components[i];
        for (std::size_t k = 0; k < comp.marks.size(); ++k) {
            const double g = gen.gamma(t, comp.marks[k])[static_cast<Eigen::Index>(i)];
            s += g * g * comp.intensities[k];
        }
    }
    return s;
}

// ---------------------------------------------------------------------------

bool ValidationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const InvariantCheck* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

std::vector<State> sample_states(const State& centre, double radius, std::size_t n_random,
                                 std::uint64_t seed) {
    const auto m = centre.size();
    std::vector<State> out;
    out.push_back(centre);
    // axis points at ±radius/2 and ±radius
    for (Eigen::Index j = 0; j < m; ++j) {
        for (double s : {-1.0, -0.5, 0.5, 1.0}) {
            State x = centre;
            x[j] += s * radius;
            out.push_back(x);
        }
    }
    // box corners for small dimensions
    if (m > 1 && m <= 6) {
        for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
            State x = centre;
            for (Eigen::Index j = 0; j < m; ++j) x[j] += ((mask >> j) & 1u) ? radius : -radius;
            out.push_back(x);
        }
    }
    auto eng = make_engine(seed, 0, Stream::sampling);
    std::uniform_real_distribution<double> u(-radius, radius);
    for (std::size_t n = 0; n < n_random; ++n) {
        State x = centre;
        for (Eigen::Index j = 0; j < m; ++j) x[j] += u(eng);
        out.push_back(x);
    }
    return out;
}

ValidationReport validate_model(const ForwardModel& model, const JumpMeasureSpec& measure,
                                const GeneratorSpec& gen, const TerminalSpec& term,
                                const TimeGrid& grid, const ValidationOptions& options) {
    ValidationReport report;
    auto add = [&](std::string name, std::optional<std::string> witness) {
        report.checks.push_back({std::move(name), !witness.has_value(), witness.value_or("")});
    };

    const auto m = static_cast<Eigen::Index>(model.dim_x);
    const auto d = static_cast<Eigen::Index>(model.dim_w);
    const auto l = static_cast<Eigen::Index>(measure.dim());

    // structure
    {
        std::optional<std::string> w;
        if (model.x0.size() != m) w = "x0 has " + std::to_string(model.x0.size()) + " components";
        if (!model.a || !model.b || !model.c) w = "missing forward coefficient";
        if (!gen.f1 || !gen.gamma || !gen.u1 || !gen.u2) w = "missing generator component";
        if (!term.h) w = "missing terminal function";
        if (term.growth_constant < 0.0) w = "negative growth constant";
        add("structure", w);
        if (w) return report;
    }

    // grid
    {
        std::optional<std::string> w;
        for (std::size_t i = 0; i < grid.n_steps(); ++i) {
            if (!(grid.dt(i) > 0.0)) {
                w = "non-increasing nodes at index " + std::to_string(i);
                break;
            }
        }
        add("grid", w);
    }

    // jump measure
    {
        std::optional<std::string> w;
        try {
            measure.check();
        } catch (const ConfigError& e) {
            w = e.what();
        }
        add("jump_measure", w);
    }

    const auto states = sample_states(model.x0, options.domain_radius, options.n_samples, options.seed);
    std::vector<double> times;
    const std::size_t stride = std::max<std::size_t>(1, grid.n_nodes() / 16);
    for (std::size_t i = 0; i < grid.n_nodes(); i += stride) times.push_back(grid.node(i));
    if (times.back() != grid.t_end()) times.push_back(grid.t_end());

    // coefficients finite with the declared shapes
    {
        std::optional<std::string> w;
        for (double t : times) {
            for (const auto& x : states) {
                const std::string where = "t=" + std::to_string(t) + ", x=" + format_state(x);
                const State a = evaluate("a", where, [&] { return model.a(t, x); });
                const Eigen::MatrixXd b = evaluate("b", where, [&] { return model.b(t, x); });
                if (a.size() != m || b.rows() != m || b.cols() != d) {
                    w = "coefficient shape mismatch at " + where;
                } else if (!all_finite(a) || !all_finite(b)) {
                    w = "non-finite a or b at " + where;
                }
                for (Eigen::Index i = 0; i < l && !w; ++i) {
                    for (double e : measure.components[static_cast<std::size_t>(i)].marks) {
                        const Eigen::MatrixXd c = evaluate("c", where, [&] { return model.c(t, x, e); });
                        if (c.rows() != m || c.cols() != l) {
                            w = "jump coefficient shape mismatch at " + where;
                        } else if (!all_finite(c)) {
                            w = "non-finite c at " + where + ", mark " + std::to_string(e);
                        }
                        if (w) break;
                    }
                }
                if (w) break;
            }
            if (w) break;
        }
        add("coefficients_finite", w);
    }

    // γ ≥ -1 componentwise
    {
        std::optional<std::string> w;
        for (std::size_t n = 0; n < grid.n_nodes() && !w; ++n) {
            const double t = grid.node(n);
            for (Eigen::Index i = 0; i < l && !w; ++i) {
                for (double e : measure.components[static_cast<std::size_t>(i)].marks) {
                    const Eigen::RowVectorXd g =
                        evaluate("gamma", "t=" + std::to_string(t), [&] { return gen.gamma(t, e); });
                    if (g.size() != l) {
                        w = "gamma has wrong width at t=" + std::to_string(t);
                        break;
                    }
                    if (!(g[i] >= -1.0)) {
                        std::ostringstream os;
                        os << "A4: gamma^" << i + 1 << "(t=" << t << ", e=" << e << ") = " << g[i]
                           << " < -1";
                        w = os.str();
                        break;
                    }
                }
            }
        }
        add("gamma_lower_bound", w);
    }

    // ∫|γ|²λ ≤ u2²
    {
        std::optional<std::string> w;
        for (std::size_t n = 0; n < grid.n_nodes() && !w; ++n) {
            const double t = grid.node(n);
            const double s = gamma_square_integral(gen, measure, t);
            const double u2 = gen.u2(t);
            if (!(s <= u2 * u2)) {
                std::ostringstream os;
                os << "A4: integral |gamma|^2 lambda = " << s << " > u2(t)^2 = " << u2 * u2
                   << " at t=" << t;
                w = os.str();
            }
        }
        add("gamma_square_bound", w);
    }

    // moduli nonnegative, integrable on the horizon
    {
        std::optional<std::string> w;
        for (double t : times) {
            const double u1 = gen.u1(t);
            const double u2 = gen.u2(t);
            if (!(u1 >= 0.0) || !(u2 >= 0.0) || !std::isfinite(u1) || !std::isfinite(u2)) {
                w = "u1/u2 negative or non-finite at t=" + std::to_string(t);
                break;
            }
        }
        if (!w) {
            auto integrand = [&](double t) {
                const double u2 = gen.u2(t);
                return gen.u1(t) + u2 * u2;
            };
            const double total = integrate(integrand, grid.t_start(), grid.t_end());
            if (!std::isfinite(total)) w = "integral of u1 + u2^2 is not finite";
            const double tail = integrate(integrand, grid.t_end(), 2.0 * grid.t_end());
            if (tail > options.tail_tolerance) {
                report.warnings.push_back("truncation tail integral of u1 + u2^2 on [T, 2T] = " +
                                          std::to_string(tail) + " exceeds " +
                                          std::to_string(options.tail_tolerance));
            }
        }
        add("moduli_integrable", w);
    }

    // |h(x)| ≤ C(1+|x|), worst violation reported
    {
        std::optional<std::string> w;
        double worst = 0.0;
        for (const auto& x : states) {
            const double hx = evaluate("h", "x=" + format_state(x), [&] { return term.h(x); });
            const double bound = term.growth_constant * (1.0 + x.norm());
            if (!std::isfinite(hx)) {
                w = "h not finite at x=" + format_state(x);
                break;
            }
            const double excess = std::abs(hx) - bound;
            if (excess > worst) {
                worst = excess;
                std::ostringstream os;
                os << "x=" << format_state(x) << ": |h(x)| = " << std::abs(hx) << " > " << bound;
                w = os.str();
            }
        }
        add("terminal_growth", w);
    }

    return report;
}

}  // namespace jbsde
