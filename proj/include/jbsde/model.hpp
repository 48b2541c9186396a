#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace jbsde {

using State = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

/// Strictly increasing time nodes t_0 < t_1 < ... < t_N.
class TimeGrid {
public:
    static TimeGrid uniform(double t_start, double t_end, std::size_t n_steps);
    static TimeGrid from_nodes(std::vector<double> nodes);

    std::size_t n_steps() const { return nodes_.size() - 1; }
    std::size_t n_nodes() const { return nodes_.size(); }
    double t_start() const { return nodes_.front(); }
    double t_end() const { return nodes_.back(); }
    double node(std::size_t i) const { return nodes_[i]; }
    double dt(std::size_t i) const { return nodes_[i + 1] - nodes_[i]; }
    const std::vector<double>& nodes() const { return nodes_; }

    /// Index of the node equal to t (relative tolerance 1e-9), if any.
    std::optional<std::size_t> index_of(double t) const;
    /// Largest node index with t_i <= t (same tolerance). Requires t >= t_start.
    std::size_t floor_index(double t) const;
    /// Step index i such that t lies in (t_i, t_{i+1}].
    std::size_t step_containing(double t) const;

    /// Sub-grid made of nodes [first, last].
    TimeGrid slice(std::size_t first, std::size_t last) const;

private:
    explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {}
    double tolerance() const;

    std::vector<double> nodes_;
};

// ---------------------------------------------------------------------------
// Jump measure (finite activity)
// ---------------------------------------------------------------------------

/// Marks and intensities of one component of the Poisson random measure.
struct JumpComponent {
    std::vector<double> marks;
    std::vector<double> intensities;

    double total_intensity() const;
};

/// Finite-activity Lévy measure: one discrete mark list per component.
/// An empty component list disables the jump part.
struct JumpMeasureSpec {
    std::vector<JumpComponent> components;

    std::size_t dim() const { return components.size(); }
    double total_intensity() const;
    /// Throws ConfigError when an intensity is non-positive or the lists disagree.
    void check() const;
};

// ---------------------------------------------------------------------------
// Forward model, generator, terminal condition
// ---------------------------------------------------------------------------

using DriftFn = std::function<State(double t, const State& x)>;
using DiffusionFn = std::function<Eigen::MatrixXd(double t, const State& x)>;
/// m x l matrix; column i is the jump size for an event of component i.
using JumpSizeFn = std::function<Eigen::MatrixXd(double t, const State& x, double mark)>;

/// X_s = x + ∫a dr + ∫b dW + ∫∫c(r, X_{r-}, e) μ̃(dr, de).
struct ForwardModel {
    std::size_t dim_x = 1;
    std::size_t dim_w = 1;
    DriftFn a;
    DiffusionFn b;
    JumpSizeFn c;
    State x0;
    double t0 = 0.0;
};

using DriverFn = std::function<double(double t, const State& x, double y,
                                      const Eigen::RowVectorXd& z, double gamma_integral)>;
/// 1 x l row; entry i weights component i.
using JumpWeightFn = std::function<Eigen::RowVectorXd(double t, double mark)>;
using ModulusFn = std::function<double(double t)>;

/// Generator f1(t, x, y, z, ∫U γᵀ λ(de)) with jump weight γ and declared
/// Lipschitz moduli u1 (in y) and u2 (in z and U).
struct GeneratorSpec {
    DriverFn f1;
    JumpWeightFn gamma;
    ModulusFn u1;
    ModulusFn u2;
    std::string label;

    double operator()(double t, const State& x, double y, const Eigen::RowVectorXd& z,
                      double gamma_integral) const {
        return f1(t, x, y, z, gamma_integral);
    }
};

struct TerminalSpec {
    std::function<double(const State& x)> h;
    double growth_constant = 0.0;
};

/// τ = inf{s > t : |X_s - x| > η} ∧ (t + η) ∧ (t + δ).
struct StoppingRule {
    double eta = 0.0;
    double delta = 0.0;
    double anchor_time = 0.0;
    State anchor_state;
};

/// ∫_B |γ_t(e)|² λ(de) summed over components.
double gamma_square_integral(const GeneratorSpec& gen, const JumpMeasureSpec& measure, double t);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct InvariantCheck {
    std::string name;
    bool passed = true;
    std::string witness;  // empty on pass
};

struct ValidationReport {
    std::vector<InvariantCheck> checks;
    std::vector<std::string> warnings;

    bool passed() const;
    const InvariantCheck* find(const std::string& name) const;
};

struct ValidationOptions {
    /// Sampled states lie in the box x0 ± domain_radius.
    double domain_radius = 3.0;
    std::size_t n_samples = 256;
    std::uint64_t seed = 0;
    /// Warn when ∫_{T}^{2T} u1 + u2² exceeds this.
    double tail_tolerance = 1.0;
};

/// Aggregates the invariants of the model types. Throws ModelError when a
/// coefficient throws during evaluation.
ValidationReport validate_model(const ForwardModel& model, const JumpMeasureSpec& measure,
                                const GeneratorSpec& gen, const TerminalSpec& term,
                                const TimeGrid& grid, const ValidationOptions& options = {});

/// Deterministic sample of states in the box centre ± radius: the lattice of
/// corners, centre and face midpoints first, then seeded uniform points.
std::vector<State> sample_states(const State& centre, double radius, std::size_t n_random,
                                 std::uint64_t seed);

}  // namespace jbsde
