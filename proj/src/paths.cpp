#include "jbsde/paths.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <string>

#include "jbsde/errors.hpp"
#include "jbsde/parallel.hpp"
#include "jbsde/rng.hpp"

namespace jbsde {

PathBundle::PathBundle(TimeGrid grid, std::size_t n_paths, std::size_t dim_x, std::size_t dim_w)
    : grid_(std::move(grid)),
      n_paths_(n_paths),
      dim_x_(dim_x),
      dim_w_(dim_w),
      states_(n_paths * grid_.n_nodes() * dim_x, 0.0),
      increments_(n_paths * grid_.n_steps() * dim_w, 0.0),
      events_(n_paths) {}

std::span<const double> PathBundle::state(std::size_t path, std::size_t node) const {
    return {states_.data() + (path * grid_.n_nodes() + node) * dim_x_, dim_x_};
}

std::span<double> PathBundle::state(std::size_t path, std::size_t node) {
    return {states_.data() + (path * grid_.n_nodes() + node) * dim_x_, dim_x_};
}

State PathBundle::state_vector(std::size_t path, std::size_t node) const {
    auto s = state(path, node);
    return Eigen::Map<const State>(s.data(), static_cast<Eigen::Index>(s.size()));
}

std::span<const double> PathBundle::increment(std::size_t path, std::size_t step) const {
    return {increments_.data() + (path * grid_.n_steps() + step) * dim_w_, dim_w_};
}

std::span<double> PathBundle::increment(std::size_t path, std::size_t step) {
    return {increments_.data() + (path * grid_.n_steps() + step) * dim_w_, dim_w_};
}

bool PathBundle::operator==(const PathBundle& other) const {
    if (grid_.nodes() != other.grid_.nodes() || n_paths_ != other.n_paths_ ||
        states_ != other.states_ || increments_ != other.increments_) {
        return false;
    }
    for (std::size_t p = 0; p < n_paths_; ++p) {
        const auto& a = events_[p];
        const auto& b = other.events_[p];
        if (a.size() != b.size()) return false;
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (a[k].time != b[k].time || a[k].component != b[k].component ||
                a[k].mark_index != b[k].mark_index || a[k].pre_state.size() != b[k].pre_state.size() ||
                a[k].pre_state != b[k].pre_state) {
                return false;
            }
        }
    }
    return true;
}

namespace {

std::vector<JumpEvent> sample_path_events(const JumpMeasureSpec& measure, double t_start,
                                          double t_end, std::uint64_t seed, std::size_t path) {
    std::vector<JumpEvent> events;
    auto eng = make_engine(seed, path, Stream::jumps);
    for (std::size_t i = 0; i < measure.components.size(); ++i) {
        const auto& comp = measure.components[i];
        const double rate = comp.total_intensity();
        if (!(rate > 0.0)) continue;
        std::exponential_distribution<double> wait(rate);
        std::discrete_distribution<std::size_t> pick(comp.intensities.begin(), comp.intensities.end());
        double t = t_start;
        while (true) {
            t += wait(eng);
            if (t > t_end) break;
            events.push_back({t, i, pick(eng), State()});
        }
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });
    return events;
}

}  // namespace

std::vector<std::vector<JumpEvent>> sample_jump_events(const JumpMeasureSpec& measure,
                                                       const TimeGrid& grid, std::size_t n_paths,
                                                       std::uint64_t seed, std::size_t workers) {
    std::vector<std::vector<JumpEvent>> out(n_paths);
    parallel_blocks(n_paths, workers, kReductionBlock, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p) {
            out[p] = sample_path_events(measure, grid.t_start(), grid.t_end(), seed, p);
        }
    });
    return out;
}

PathBundle simulate_paths(const ForwardModel& model, const JumpMeasureSpec& measure,
                          const TimeGrid& grid, const SimulationOptions& options) {
    measure.check();
    const std::size_t m = model.dim_x;
    const std::size_t d = model.dim_w;
    if (static_cast<std::size_t>(model.x0.size()) != m) {
        throw ConfigError("x0 has " + std::to_string(model.x0.size()) + " components, expected " +
                          std::to_string(m));
    }
    PathBundle bundle(grid, options.n_paths, m, d);
    const std::size_t n_steps = grid.n_steps();

    parallel_blocks(options.n_paths, options.workers, kReductionBlock,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
        Eigen::VectorXd dw(static_cast<Eigen::Index>(d));
        for (std::size_t p = begin; p < end; ++p) {
            auto eng = make_engine(options.seed, p, Stream::brownian);
            std::normal_distribution<double> normal(0.0, 1.0);
            auto events = sample_path_events(measure, grid.t_start(), grid.t_end(), options.seed, p);

            State x = model.x0;
            std::copy(x.data(), x.data() + m, bundle.state(p, 0).begin());
            std::size_t next_event = 0;
            for (std::size_t i = 0; i < n_steps; ++i) {
                const double t = grid.node(i);
                const double dt = grid.dt(i);
                const double sqdt = std::sqrt(dt);
                auto inc = bundle.increment(p, i);
                for (std::size_t j = 0; j < d; ++j) {
                    inc[j] = sqdt * normal(eng);
                    dw[static_cast<Eigen::Index>(j)] = inc[j];
                }
                const State x_node = x;
                State drift = model.a(t, x_node) * dt + model.b(t, x_node) * dw;
                for (std::size_t ci = 0; ci < measure.components.size(); ++ci) {
                    const auto& comp = measure.components[ci];
                    for (std::size_t k = 0; k < comp.marks.size(); ++k) {
                        drift -= dt * comp.intensities[k] *
                                 model.c(t, x_node, comp.marks[k]).col(static_cast<Eigen::Index>(ci));
                    }
                }
                const double t_next = grid.node(i + 1);
                while (next_event < events.size() &&
                       (events[next_event].time <= t_next || i + 1 == n_steps)) {
                    auto& ev = events[next_event];
                    ev.pre_state = x;
                    const double mark = measure.components[ev.component].marks[ev.mark_index];
                    x += model.c(t, x, mark).col(static_cast<Eigen::Index>(ev.component));
                    ++next_event;
                }
                x += drift;
                if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e150) {
                    throw NumericalError("explosion at (path " + std::to_string(p) + ", step " +
                                         std::to_string(i) + ")");
                }
                std::copy(x.data(), x.data() + m, bundle.state(p, i + 1).begin());
            }
            bundle.events(p) = std::move(events);
        }
    });
    return bundle;
}

std::vector<std::size_t> hitting_time(const PathBundle& bundle, const StoppingRule& rule) {
    const auto& grid = bundle.grid();
    const auto anchor = grid.index_of(rule.anchor_time);
    if (!anchor) {
        throw ConfigError("stopping rule anchor t=" + std::to_string(rule.anchor_time) +
                          " is not a grid node");
    }
    if (!(rule.eta > 0.0) || !(rule.delta > 0.0) || !std::isfinite(rule.eta) ||
        !std::isfinite(rule.delta)) {
        throw ConfigError("stopping rule needs finite eta > 0 and delta > 0");
    }
    if (static_cast<std::size_t>(rule.anchor_state.size()) != bundle.dim_x()) {
        throw ConfigError("stopping rule anchor state has the wrong dimension");
    }
    const double cap_time = rule.anchor_time + std::min(rule.eta, rule.delta);
    const std::size_t cap = grid.floor_index(std::min(cap_time, grid.t_end()));
    if (cap <= *anchor) {
        throw ConfigError("stopping horizon min(eta, delta) is shorter than one grid step");
    }
    std::vector<std::size_t> tau(bundle.n_paths(), cap);
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
        for (std::size_t s = *anchor + 1; s < cap; ++s) {
            auto x = bundle.state(p, s);
            double r2 = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double dx = x[j] - rule.anchor_state[static_cast<Eigen::Index>(j)];
                r2 += dx * dx;
            }
            if (std::sqrt(r2) > rule.eta) {
                tau[p] = s;
                break;
            }
        }
    }
    return tau;
}

void write_paths_csv(std::ostream& os, const PathBundle& bundle) {
    os << "path,node,time";
    for (std::size_t j = 0; j < bundle.dim_x(); ++j) os << ",x" << j + 1;
    os << '\n';
    os.precision(17);
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
        for (std::size_t i = 0; i < bundle.grid().n_nodes(); ++i) {
            os << p << ',' << i << ',' << bundle.grid().node(i);
            for (double v : bundle.state(p, i)) os << ',' << v;
            os << '\n';
        }
    }
}

void write_events_csv(std::ostream& os, const PathBundle& bundle) {
    os << "path,time,component,mark_index\n";
    os.precision(17);
    for (std::size_t p = 0; p < bundle.n_paths(); ++p) {
        for (const auto& ev : bundle.events(p)) {
            os << p << ',' << ev.time << ',' << ev.component + 1 << ',' << ev.mark_index << '\n';
        }
    }
}

}  // namespace jbsde
