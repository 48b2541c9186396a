#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jbsde/model.hpp"
#include "jbsde/paths.hpp"
#include "jbsde/regression.hpp"

namespace jbsde {

/// Regression surfaces at one time node. Z and Gamma surfaces are already
/// divided by the step length.
struct NodeFit {
    bool fitted = false;
    std::size_t n_active = 0;
    double mean_y = 0.0;                // average of Y_i over the active paths
    FittedSurface continuation;         // E[Y_{i+1} | X_i]
    std::vector<FittedSurface> z;       // one per Brownian component
    FittedSurface gamma;                // E[Y_{i+1} M_i | X_i] / Δt
};

struct BackwardOptions {
    std::size_t degree = 2;
    double ridge = 1e-8;
    std::size_t workers = 1;
};

struct ValueEstimate {
    double value = 0.0;
    bool extrapolated = false;
};

/// Pathwise (Y, Z, Γ) on every node plus the fitted surfaces that define
/// u¹(t_i, ·). Γ estimates ∫_B U γᵀ λ(de); the kernel U itself is never
/// recovered.
class BackwardSolution {
public:
    const TimeGrid& grid() const { return grid_; }
    std::size_t n_paths() const { return n_paths_; }
    std::size_t dim_w() const { return dim_w_; }

    double y(std::size_t path, std::size_t node) const { return y_[path * grid_.n_nodes() + node]; }
    double gamma(std::size_t path, std::size_t node) const { return gamma_[path * grid_.n_nodes() + node]; }
    std::span<const double> z(std::size_t path, std::size_t node) const {
        return {z_.data() + (path * grid_.n_nodes() + node) * dim_w_, dim_w_};
    }
    std::size_t stop_node(std::size_t path) const { return stop_[path]; }
    const std::vector<std::size_t>& stop_nodes() const { return stop_; }

    /// Y at the first node averaged over paths, and its Monte Carlo standard
    /// error from the pathwise samples ξ + Σ f Δt.
    double y0() const { return y0_; }
    double y0_se() const { return y0_se_; }
    const std::vector<double>& pathwise_samples() const { return samples_; }
    /// Z at the first node averaged over paths.
    Eigen::RowVectorXd z0() const;
    double gamma0() const;

    const NodeFit& fit(std::size_t node) const { return fits_[node]; }
    const RegressionBasis& basis() const { return basis_; }

    /// u¹(t_i, x) from the fitted surfaces at node i.
    ValueEstimate value_at(std::size_t node, const State& x) const;

    bool operator==(const BackwardSolution& other) const;

private:
    friend BackwardSolution solve_backward(const PathBundle&, const GeneratorSpec&, const JumpMeasureSpec&,
                                           std::span<const double>, const std::vector<std::size_t>*,
                                           const BackwardOptions&);
    BackwardSolution(TimeGrid grid, std::size_t n_paths, std::size_t dim_w, RegressionBasis basis);
    ValueEstimate surface_value(std::size_t node, const State& x) const;

    TimeGrid grid_;
    std::size_t n_paths_;
    std::size_t dim_w_;
    RegressionBasis basis_;
    GeneratorSpec gen_;
    State start_state_;
    std::vector<double> y_;
    std::vector<double> z_;
    std::vector<double> gamma_;
    std::vector<std::size_t> stop_;
    std::vector<NodeFit> fits_;
    FittedSurface terminal_fit_;
    bool terminal_fitted_ = false;
    std::vector<double> samples_;
    double y0_ = 0.0;
    double y0_se_ = 0.0;
};

/// Explicit backward Euler with regression conditional expectations:
///   Z_i = E_i[(Y_{i+1} - Ŷ) ΔW_i] / Δt,  Γ_i = E_i[(Y_{i+1} - Ŷ) M_i] / Δt,
///   Y_i = Ŷ + f(t_i, X_i, Ŷ, Z_i, Γ_i) Δt,  Ŷ = E_i[Y_{i+1}],
/// where M_i is the compensated γ-integral increment over step i. Paths whose
/// stop node is <= i carry (ξ, 0, 0). `terminal[p]` is ξ at stop node p
/// (the last node when stop_nodes is null).
BackwardSolution solve_backward(const PathBundle& bundle, const GeneratorSpec& gen,
                                const JumpMeasureSpec& measure, std::span<const double> terminal,
                                const std::vector<std::size_t>* stop_nodes = nullptr,
                                const BackwardOptions& options = {});

/// Evaluates h on the final state of every path.
std::vector<double> terminal_values(const PathBundle& bundle, const TerminalSpec& term);

/// u¹(t, x); t must be a node of the solution grid.
ValueEstimate value_function(const BackwardSolution& solution, double t, const State& x);

using ValueFn = std::function<double(double t, const State& x)>;

/// ValueFn view of a solution. The solution must outlive the returned function.
ValueFn as_value_fn(const BackwardSolution& solution);

/// Central-difference step used for χ¹.
double fd_step(double x);

/// χ¹(t, x) = u_x(t, x)ᵀ b(t, x) with central differences.
Eigen::RowVectorXd feynman_kac_z(const ValueFn& u, const ForwardModel& model, double t, const State& x);

/// ζ¹(t, x) = Σ_i Σ_k (u(t, x + c_i(t, x, e_k)) - u(t, x)) γ_t^i(e_k) λ_k.
double feynman_kac_u(const ValueFn& u, const ForwardModel& model, const GeneratorSpec& gen,
                     const JumpMeasureSpec& measure, double t, const State& x);

struct OracleValue {
    double y = 0.0;
    double z = 0.0;
    double gamma = 0.0;
};

using OracleFn = std::function<OracleValue(double t, const State& x)>;

/// Exact solutions of solvable instances:
///   zero_driver_martingale {sigma, jump_gamma}: Y = x1, Z = sigma, Γ = jump_gamma
///   constant_driver {k, T, terminal}: Y = terminal + k (T - t)
///   linear_ode {rho, T, terminal}: Y = terminal e^{-rho (T - t)}
/// Throws ConfigError on an unknown name.
OracleFn closed_form_oracle(const std::string& name, const std::map<std::string, double>& params);

/// CSV dumps: (node,time,path,Y,Z1..Zd,Gamma) and (node,basis_index,coefficient)
/// for quantity "continuation", "z1".."zd" or "gamma".
void write_solution_csv(std::ostream& os, const BackwardSolution& solution);
void write_coefficients_csv(std::ostream& os, const BackwardSolution& solution, const std::string& quantity);

}  // namespace jbsde
