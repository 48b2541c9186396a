#include "jbsde/bsde.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "jbsde/errors.hpp"
#include "jbsde/parallel.hpp"

namespace jbsde {

namespace {

FittedSurface scaled(FittedSurface s, double factor) {
    s.intercept *= factor;
    s.slope *= factor;
    return s;
}

double block_sum(const std::vector<double>& v, std::size_t workers) {
    std::vector<double> parts(block_count(v.size()), 0.0);
    parallel_blocks(v.size(), workers, kReductionBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += v[i];
        parts[b] = s;
    });
    if (parts.empty()) return 0.0;
    return tree_reduce(std::move(parts), [](double a, double b) { return a + b; });
}

}  // namespace

BackwardSolution::BackwardSolution(TimeGrid grid, std::size_t n_paths, std::size_t dim_w,
                                   RegressionBasis basis)
    : grid_(std::move(grid)),
      n_paths_(n_paths),
      dim_w_(dim_w),
      basis_(std::move(basis)),
      y_(n_paths * grid_.n_nodes(), 0.0),
      z_(n_paths * grid_.n_nodes() * dim_w, 0.0),
      gamma_(n_paths * grid_.n_nodes(), 0.0),
      stop_(n_paths, grid_.n_steps()),
      fits_(grid_.n_nodes()),
      samples_(n_paths, 0.0) {}

Eigen::RowVectorXd BackwardSolution::z0() const {
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(dim_w_));
    for (std::size_t p = 0; p < n_paths_; ++p) {
        auto zp = z(p, 0);
        for (std::size_t j = 0; j < dim_w_; ++j) out[static_cast<Eigen::Index>(j)] += zp[j];
    }
    return out / static_cast<double>(std::max<std::size_t>(1, n_paths_));
}

double BackwardSolution::gamma0() const {
    double s = 0.0;
    for (std::size_t p = 0; p < n_paths_; ++p) s += gamma(p, 0);
    return s / static_cast<double>(std::max<std::size_t>(1, n_paths_));
}

bool BackwardSolution::operator==(const BackwardSolution& other) const {
    return grid_.nodes() == other.grid_.nodes() && y_ == other.y_ && z_ == other.z_ &&
           gamma_ == other.gamma_ && stop_ == other.stop_ && y0_ == other.y0_ && y0_se_ == other.y0_se_;
}

ValueEstimate BackwardSolution::surface_value(std::size_t node, const State& x) const {
    const NodeFit& f = fits_[node];
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    const double c = f.continuation.evaluate(basis_, xs);
    Eigen::RowVectorXd zv(static_cast<Eigen::Index>(dim_w_));
    for (std::size_t j = 0; j < dim_w_; ++j) zv[static_cast<Eigen::Index>(j)] = f.z[j].evaluate(basis_, xs);
    const double g = f.gamma.evaluate(basis_, xs);
    const double t = grid_.node(node);
    return {c + gen_(t, x, c, zv, g) * grid_.dt(node), !f.continuation.in_hull(xs)};
}

ValueEstimate BackwardSolution::value_at(std::size_t node, const State& x) const {
    if (node >= grid_.n_nodes()) throw ConfigError("node index out of range");
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    if (node == grid_.n_steps()) {
        if (!terminal_fitted_) return {0.0, true};
        return {terminal_fit_.evaluate(basis_, xs), !terminal_fit_.in_hull(xs)};
    }
    const NodeFit& f = fits_[node];
    if (!f.fitted) {
        auto next = value_at(node + 1, x);
        next.extrapolated = true;
        return next;
    }
    if (!f.continuation.degenerate) return surface_value(node, x);

    // Every path sits at one state here, so the regression is a plain mean
    // and carries no x-dependence. Keep the Monte Carlo value at that state
    // and borrow the shape from one Euler step of the next node's surface.
    const State anchor = f.continuation.lower;
    const double t = grid_.node(node);
    const double dt = grid_.dt(node);
    Eigen::RowVectorXd zc(static_cast<Eigen::Index>(dim_w_));
    for (std::size_t j = 0; j < dim_w_; ++j) zc[static_cast<Eigen::Index>(j)] = f.z[j].intercept;
    const double gc = f.gamma.intercept;
    auto step = [&](const State& s) {
        const auto v = value_at(node + 1, s);
        return ValueEstimate{v.value + gen_(t, s, v.value, zc, gc) * dt, v.extrapolated};
    };
    if ((x - anchor).cwiseAbs().maxCoeff() == 0.0) return {f.mean_y, false};
    const auto at_x = step(x);
    const auto at_anchor = step(anchor);
    return {f.mean_y + at_x.value - at_anchor.value, at_x.extrapolated};
}

// ---------------------------------------------------------------------------

BackwardSolution solve_backward(const PathBundle& bundle, const GeneratorSpec& gen,
                                const JumpMeasureSpec& measure, std::span<const double> terminal,
                                const std::vector<std::size_t>* stop_nodes,
                                const BackwardOptions& options) {
    const TimeGrid& grid = bundle.grid();
    const std::size_t n_paths = bundle.n_paths();
    const std::size_t N = grid.n_steps();
    const std::size_t d = bundle.dim_w();
    const std::size_t workers = options.workers;

    if (terminal.size() != n_paths) throw ConfigError("terminal values do not match the path count");
    if (stop_nodes && stop_nodes->size() != n_paths) throw ConfigError("stop nodes do not match the path count");
    if (!gen.f1 || !gen.gamma) throw ConfigError("generator is incomplete");
    for (std::size_t p = 0; p < n_paths; ++p) {
        if (!std::isfinite(terminal[p])) {
            throw NumericalError("non-finite terminal value on path " + std::to_string(p));
        }
    }

    BackwardSolution sol(grid, n_paths, d, RegressionBasis(bundle.dim_x(), options.degree, options.ridge));
    sol.gen_ = gen;
    if (stop_nodes) {
        for (std::size_t p = 0; p < n_paths; ++p) {
            if ((*stop_nodes)[p] > N) throw ConfigError("stop node beyond the grid");
            sol.stop_[p] = (*stop_nodes)[p];
        }
    }
    const std::size_t nn = grid.n_nodes();

    // terminal values carried over every node at or after the stop
    for (std::size_t p = 0; p < n_paths; ++p) {
        for (std::size_t i = sol.stop_[p]; i < nn; ++i) sol.y_[p * nn + i] = terminal[p];
        sol.samples_[p] = terminal[p];
    }

    // event offsets per step (CSR) and compensators per node
    std::vector<std::vector<std::size_t>> first_event(n_paths);
    parallel_blocks(n_paths, workers, kReductionBlock, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p) {
            const auto& events = bundle.events(p);
            auto& off = first_event[p];
            off.assign(N + 1, events.size());
            std::size_t k = 0;
            for (std::size_t i = 0; i < N; ++i) {
                off[i] = k;
                while (k < events.size() && grid.step_containing(events[k].time) == i) ++k;
            }
        }
    });
    std::vector<double> compensator(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const double t = grid.node(i);
        for (std::size_t c = 0; c < measure.components.size(); ++c) {
            const auto& comp = measure.components[c];
            for (std::size_t k = 0; k < comp.marks.size(); ++k) {
                compensator[i] += gen.gamma(t, comp.marks[k])[static_cast<Eigen::Index>(c)] * comp.intensities[k];
            }
        }
    }

    std::vector<std::size_t> active;
    active.reserve(n_paths);
    for (std::size_t ii = N; ii-- > 0;) {
        const double t = grid.node(ii);
        const double dt = grid.dt(ii);
        active.clear();
        for (std::size_t p = 0; p < n_paths; ++p) {
            if (sol.stop_[p] > ii) active.push_back(p);
        }
        NodeFit& fit = sol.fits_[ii];
        fit.n_active = active.size();
        if (active.empty()) continue;

        std::vector<std::span<const double>> states(active.size());
        for (std::size_t r = 0; r < active.size(); ++r) states[r] = bundle.state(active[r], ii);
        NodeDesign design(sol.basis_, states, workers);

        const auto n = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd next(n, 1);
        for (Eigen::Index r = 0; r < n; ++r) next(r, 0) = sol.y_[active[static_cast<std::size_t>(r)] * nn + ii + 1];
        fit.continuation = design.fit(next, ii).front();

        Eigen::VectorXd cont(n);
        Eigen::MatrixXd products(n, static_cast<Eigen::Index>(d) + 1);
        parallel_blocks(active.size(), workers, kReductionBlock, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t r = b; r < e; ++r) {
                const auto ri = static_cast<Eigen::Index>(r);
                const std::size_t p = active[r];
                cont[ri] = design.fitted(fit.continuation, r);
                const double resid = next(ri, 0) - cont[ri];
                auto dw = bundle.increment(p, ii);
                for (std::size_t j = 0; j < d; ++j) products(ri, static_cast<Eigen::Index>(j)) = resid * dw[j];
                double m_inc = -dt * compensator[ii];
                const auto& events = bundle.events(p);
                for (std::size_t k = first_event[p][ii]; k < first_event[p][ii + 1]; ++k) {
                    const auto& ev = events[k];
                    const double mark = measure.components[ev.component].marks[ev.mark_index];
                    m_inc += gen.gamma(t, mark)[static_cast<Eigen::Index>(ev.component)];
                }
                products(ri, static_cast<Eigen::Index>(d)) = resid * m_inc;
            }
        });
        auto surfaces = design.fit(products, ii);
        fit.z.clear();
        for (std::size_t j = 0; j < d; ++j) fit.z.push_back(scaled(surfaces[j], 1.0 / dt));
        fit.gamma = scaled(surfaces[d], 1.0 / dt);
        fit.fitted = true;

        parallel_blocks(active.size(), workers, kReductionBlock, [&](std::size_t, std::size_t b, std::size_t e) {
            Eigen::RowVectorXd zv(static_cast<Eigen::Index>(d));
            for (std::size_t r = b; r < e; ++r) {
                const std::size_t p = active[r];
                for (std::size_t j = 0; j < d; ++j) {
                    zv[static_cast<Eigen::Index>(j)] = design.fitted(surfaces[j], r) / dt;
                }
                const double g = design.fitted(surfaces[d], r) / dt;
                const double c = cont[static_cast<Eigen::Index>(r)];
                const double f = gen(t, bundle.state_vector(p, ii), c, zv, g);
                if (!std::isfinite(f)) {
                    throw NumericalError("non-finite generator value at (node " + std::to_string(ii) +
                                         ", path " + std::to_string(p) + ")");
                }
                sol.y_[p * nn + ii] = c + f * dt;
                for (std::size_t j = 0; j < d; ++j) sol.z_[(p * nn + ii) * d + j] = zv[static_cast<Eigen::Index>(j)];
                sol.gamma_[p * nn + ii] = g;
                sol.samples_[p] += f * dt;
            }
        });

        std::vector<double> ys(active.size());
        for (std::size_t r = 0; r < active.size(); ++r) ys[r] = sol.y_[active[r] * nn + ii];
        fit.mean_y = block_sum(ys, workers) / static_cast<double>(active.size());
    }

    // surface for u¹ at the last node from paths that reach it
    {
        std::vector<std::span<const double>> states;
        Eigen::VectorXd xi_values;
        std::vector<double> xs;
        for (std::size_t p = 0; p < n_paths; ++p) {
            if (sol.stop_[p] == N) {
                states.push_back(bundle.state(p, N));
                xs.push_back(terminal[p]);
            }
        }
        if (!states.empty()) {
            NodeDesign design(sol.basis_, states, workers);
            sol.terminal_fit_ = design.fit(Eigen::Map<Eigen::MatrixXd>(xs.data(), static_cast<Eigen::Index>(xs.size()), 1), N).front();
            sol.terminal_fitted_ = true;
        }
    }

    std::vector<double> y0s(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) y0s[p] = sol.y_[p * nn];
    const double np = static_cast<double>(std::max<std::size_t>(1, n_paths));
    sol.y0_ = block_sum(y0s, workers) / np;
    const double mean_s = block_sum(sol.samples_, workers) / np;
    std::vector<double> dev(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) dev[p] = (sol.samples_[p] - mean_s) * (sol.samples_[p] - mean_s);
    const double var = n_paths > 1 ? block_sum(dev, workers) / (np - 1.0) : 0.0;
    sol.y0_se_ = std::sqrt(var / np);
    if (!std::isfinite(sol.y0_)) throw NumericalError("non-finite Y at the first node");
    return sol;
}

std::vector<double> terminal_values(const PathBundle& bundle, const TerminalSpec& term) {
    std::vector<double> out(bundle.n_paths());
    const std::size_t last = bundle.grid().n_steps();
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) out[p] = term.h(bundle.state_vector(p, last));
    return out;
}

ValueEstimate value_function(const BackwardSolution& solution, double t, const State& x) {
    const auto node = solution.grid().index_of(t);
    if (!node) throw ConfigError("value_function: t=" + std::to_string(t) + " is not a grid node");
    return solution.value_at(*node, x);
}

ValueFn as_value_fn(const BackwardSolution& solution) {
    return [&solution](double t, const State& x) { return value_function(solution, t, x).value; };
}

// ---------------------------------------------------------------------------

double fd_step(double x) { return std::max(1e-4, 1e-4 * std::abs(x)); }

Eigen::RowVectorXd feynman_kac_z(const ValueFn& u, const ForwardModel& model, double t, const State& x) {
    Eigen::VectorXd grad(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = fd_step(x[j]);
        State up = x;
        State down = x;
        up[j] += h;
        down[j] -= h;
        grad[j] = (u(t, up) - u(t, down)) / (2.0 * h);
    }
    return grad.transpose() * model.b(t, x);
}

double feynman_kac_u(const ValueFn& u, const ForwardModel& model, const GeneratorSpec& gen,
                     const JumpMeasureSpec& measure, double t, const State& x) {
    const double base = u(t, x);
    double total = 0.0;
    for (std::size_t i = 0; i < measure.components.size(); ++i) {
        const auto& comp = measure.components[i];
        const auto col = static_cast<Eigen::Index>(i);
        for (std::size_t k = 0; k < comp.marks.size(); ++k) {
            const double e = comp.marks[k];
            const State shifted = x + model.c(t, x, e).col(col);
            total += (u(t, shifted) - base) * gen.gamma(t, e)[col] * comp.intensities[k];
        }
    }
    return total;
}

// ---------------------------------------------------------------------------

OracleFn closed_form_oracle(const std::string& name, const std::map<std::string, double>& params) {
    auto get = [&](const char* key, double fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    if (name == "zero_driver_martingale") {
        const double sigma = get("sigma", 1.0);
        const double jump = get("jump_gamma", 0.0);
        return [=](double, const State& x) { return OracleValue{x[0], sigma, jump}; };
    }
    if (name == "constant_driver") {
        const double k = get("k", 1.0);
        const double T = get("T", 1.0);
        const double xi = get("terminal", 0.0);
        return [=](double t, const State&) { return OracleValue{xi + k * (T - t), 0.0, 0.0}; };
    }
    if (name == "linear_ode") {
        const double rho = get("rho", 0.5);
        const double T = get("T", 1.0);
        const double xi = get("terminal", 1.0);
        return [=](double t, const State&) { return OracleValue{xi * std::exp(-rho * (T - t)), 0.0, 0.0}; };
    }
    throw ConfigError("unknown oracle '" + name + "'");
}

// ---------------------------------------------------------------------------

void write_solution_csv(std::ostream& os, const BackwardSolution& solution) {
    os << "node,time,path,Y";
    for (std::size_t j = 0; j < solution.dim_w(); ++j) os << ",Z" << j + 1;
    os << ",Gamma\n";
    os.precision(17);
    const auto& grid = solution.grid();
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
        for (std::size_t p = 0; p < solution.n_paths(); ++p) {
            os << i << ',' << grid.node(i) << ',' << p << ',' << solution.y(p, i);
            for (double z : solution.z(p, i)) os << ',' << z;
            os << ',' << solution.gamma(p, i) << '\n';
        }
    }
}

void write_coefficients_csv(std::ostream& os, const BackwardSolution& solution, const std::string& quantity) {
    os << "node,basis_index,coefficient\n";
    os.precision(17);
    for (std::size_t i = 0; i < solution.grid().n_steps(); ++i) {
        const NodeFit& f = solution.fit(i);
        if (!f.fitted) continue;
        const FittedSurface* s = nullptr;
        if (quantity == "continuation") {
            s = &f.continuation;
        } else if (quantity == "gamma") {
            s = &f.gamma;
        } else if (quantity.size() > 1 && quantity[0] == 'z') {
            const std::size_t j = std::stoul(quantity.substr(1));
            if (j >= 1 && j <= f.z.size()) s = &f.z[j - 1];
        }
        if (!s) throw ConfigError("unknown coefficient quantity '" + quantity + "'");
        const Eigen::VectorXd raw = s->raw_coefficients();
        for (Eigen::Index k = 0; k < raw.size(); ++k) os << i << ',' << k << ',' << raw[k] << '\n';
    }
}

}  // namespace jbsde
