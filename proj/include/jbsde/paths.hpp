#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "jbsde/model.hpp"

namespace jbsde {

/// One atom of the Poisson random measure on a path.
struct JumpEvent {
    double time = 0.0;
    std::size_t component = 0;   // 0-based
    std::size_t mark_index = 0;  // into JumpComponent::marks
    State pre_state;             // X_{time-}; empty when sampled without a forward model
};

/// Simulated Brownian increments, jump events and forward states.
/// Layouts are row-major: [path][step][dim_w] and [path][node][dim_x].
class PathBundle {
public:
    PathBundle(TimeGrid grid, std::size_t n_paths, std::size_t dim_x, std::size_t dim_w);

    const TimeGrid& grid() const { return grid_; }
    std::size_t n_paths() const { return n_paths_; }
    std::size_t dim_x() const { return dim_x_; }
    std::size_t dim_w() const { return dim_w_; }

    std::span<const double> state(std::size_t path, std::size_t node) const;
    std::span<double> state(std::size_t path, std::size_t node);
    State state_vector(std::size_t path, std::size_t node) const;

    std::span<const double> increment(std::size_t path, std::size_t step) const;
    std::span<double> increment(std::size_t path, std::size_t step);

    const std::vector<JumpEvent>& events(std::size_t path) const { return events_[path]; }
    std::vector<JumpEvent>& events(std::size_t path) { return events_[path]; }

    bool operator==(const PathBundle& other) const;

private:
    TimeGrid grid_;
    std::size_t n_paths_;
    std::size_t dim_x_;
    std::size_t dim_w_;
    std::vector<double> states_;
    std::vector<double> increments_;
    std::vector<std::vector<JumpEvent>> events_;
};

struct SimulationOptions {
    std::size_t n_paths = 1000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// Poisson event lists per path on (t_start, t_end]; per component the event
/// times form a Poisson process with rate Σ_k λ_k and marks are drawn with
/// probability λ_k / Σλ. Events are sorted by time across components.
std::vector<std::vector<JumpEvent>> sample_jump_events(const JumpMeasureSpec& measure,
                                                       const TimeGrid& grid, std::size_t n_paths,
                                                       std::uint64_t seed, std::size_t workers = 1);

/// Euler scheme with compensated jumps. Jumps are applied at their sampled
/// times with c evaluated at the pre-jump state; a, b and the compensator use
/// the state at the last node. Bit-identical for a given seed at any worker count.
/// Throws NumericalError("explosion at (path, step)") on non-finite states.
PathBundle simulate_paths(const ForwardModel& model, const JumpMeasureSpec& measure,
                          const TimeGrid& grid, const SimulationOptions& options);

/// Per-path stopping node: the first node s > t with |X_s - x| > η, capped at
/// the last node not after t + min(η, δ). The anchor time must be a node.
std::vector<std::size_t> hitting_time(const PathBundle& bundle, const StoppingRule& rule);

/// CSV dumps: (path,node,time,x1..xm) and (path,time,component,mark_index).
/// Components are written 1-based.
void write_paths_csv(std::ostream& os, const PathBundle& bundle);
void write_events_csv(std::ostream& os, const PathBundle& bundle);

}  // namespace jbsde
