#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "jbsde/model.hpp"

namespace jbsde {

/// Sampling box and tolerances for the statistical audits.
struct AuditOptions {
    std::size_t n_samples = 4000;
    std::uint64_t seed = 0;
    double tol = 0.05;          // relative slack on declared moduli
    State x_ref;                // centre of the state box; empty means the origin in dim_x
    std::size_t dim_x = 1;
    std::size_t dim_w = 1;
    double x_radius = 2.0;
    double y_range = 2.0;       // y, z, Γ drawn from [-range, range]
    double z_range = 2.0;
    double gamma_range = 2.0;
    double a1_cap = 1e8;
    std::size_t a1_max_level = 16;
    std::size_t a3_mesh = 2000;
    std::size_t a3_points = 16;
    double a3_tol = 1e-2;
    double tail_tolerance = 1.0;
};

struct AssumptionResult {
    std::string name;
    bool passed = true;
    std::vector<std::string> witnesses;
    std::map<std::string, double> extremes;
    std::vector<std::string> warnings;
};

struct AuditReport {
    std::vector<AssumptionResult> results;

    bool passed() const;
    std::vector<std::string> failed() const;
    nlohmann::json to_json() const;
};

/// ∫|f(t, x_ref, 0, 0, 0)|² dt by midpoint refinement; fails on non-finite
/// values or when the quadrature keeps growing under refinement.
AssumptionResult audit_a1(const GeneratorSpec& gen, const TimeGrid& grid, const AuditOptions& options);

/// Sampled slope quotients in y, z and Γ against u1(t), u2(t) and 1. The
/// Γ bound is the reduced form of the U-Lipschitz condition once
/// ∫|γ|²λ ≤ u2² holds. Can refute, never prove.
AssumptionResult audit_a2(const GeneratorSpec& gen, const TimeGrid& grid, const AuditOptions& options);

/// Scans t on a fine mesh at sampled arguments and bisects large jumps.
AssumptionResult audit_a3(const GeneratorSpec& gen, const TimeGrid& grid, const AuditOptions& options);

/// Exact over the finite mark set and the grid nodes: γ ≥ -1 and Σ|γ|²λ ≤ u2².
AssumptionResult audit_a4_gamma(const GeneratorSpec& gen, const JumpMeasureSpec& measure, const TimeGrid& grid);

AuditReport audit_all(const GeneratorSpec& gen, const JumpMeasureSpec& measure, const TimeGrid& grid,
                      const AuditOptions& options);

}  // namespace jbsde
