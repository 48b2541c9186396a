#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jbsde/audit.hpp"
#include "jbsde/bsde.hpp"
#include "jbsde/model.hpp"
#include "jbsde/paths.hpp"

namespace jbsde {

enum class Verdict { ordered, strictly_ordered, violated, inconclusive };

std::string to_string(Verdict v);

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

/// Statistics of τ - t in time units.
struct TauStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// f1 - f2 at (t, x, u¹(t,x), χ¹(t,x), ζ¹(t,x)).
struct GapRow {
    double t = 0.0;
    State x;
    double u = 0.0;
    Eigen::RowVectorXd chi;
    double zeta = 0.0;
    double f1 = 0.0;
    double f2 = 0.0;
    double gap = 0.0;
    bool extrapolated = false;
};

struct StoppedDifference {
    double v = 0.0;
    double diff = 0.0;
    double diff_se = 0.0;
};

struct ComparisonReport {
    std::string experiment;
    std::uint64_t seed = 0;
    Estimate y1;
    Estimate y2;
    double diff = 0.0;     // Y1 - Y2
    double diff_se = 0.0;  // from paired pathwise samples
    Verdict verdict = Verdict::inconclusive;
    bool vacuous = false;  // the experiment's hypothesis failed on the cloud
    std::optional<GapRow> generator_gap;
    std::optional<TauStats> tau_stats;
    std::optional<bool> sign_agreement;
    std::vector<StoppedDifference> deterministic_times;
    std::size_t surface_violations = 0;
    std::optional<double> max_second_derivative;
    double measured_margin = 0.0;
    std::vector<std::string> notes;
    nlohmann::json config;  // echo, filled by the caller

    double combined_se() const { return y1.se + y2.se; }
    nlohmann::json to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

struct McParams {
    std::size_t n_paths = 10000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    BackwardOptions backward;
};

/// Everything shared by the two solves of an experiment.
struct ExperimentSetup {
    ForwardModel model;
    JumpMeasureSpec measure;
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 1);
    McParams mc;
    AuditOptions audit;
};

/// Throws AssumptionError naming the generator and the failed assumptions.
void require_audited(const GeneratorSpec& gen, const std::string& which, const ExperimentSetup& setup);

/// Solves both equations on one bundle (common random numbers). Ordered iff
/// Y1 <= Y2 + 3 (SE1 + SE2); vacuous when f1 <= f2 or h1 <= h2 fails on the cloud.
ComparisonReport run_comparison(const GeneratorSpec& f1, const GeneratorSpec& f2, const TerminalSpec& h1,
                                const TerminalSpec& h2, const ExperimentSetup& setup);

/// Strictly ordered iff Y1 - Y2 >= m (T - t0)(1 - 0.25) - 3 (SE1 + SE2), given
/// f1 - f2 >= m > 0 on the cloud; otherwise inconclusive (or violated).
ComparisonReport run_strict_comparison(const GeneratorSpec& f1, const GeneratorSpec& f2, const TerminalSpec& h,
                                       double margin, const ExperimentSetup& setup);

struct ConverseParams {
    double t = 0.0;
    State x;
    double eta = 0.5;
    double delta = 0.25;
    /// Largest tolerated fraction of terminal values u¹(τ, X_τ) outside the cloud.
    double max_extrapolated_fraction = 0.01;
};

/// Fits u¹ globally with f1, localises fresh paths from (t, x) at the hitting
/// time τ, solves f1 and f2 on [t, τ] with terminal u¹(τ, X_τ) and checks the
/// sign of Y¹ - Y² against the sign of the generator gap at (t, x).
ComparisonReport run_converse_experiment(const GeneratorSpec& f1, const GeneratorSpec& f2, const TerminalSpec& h,
                                         const ConverseParams& params, const ExperimentSetup& setup);

std::vector<GapRow> scan_generator_gap(const GeneratorSpec& f1, const GeneratorSpec& f2,
                                       const BackwardSolution& solution, const ForwardModel& model,
                                       const JumpMeasureSpec& measure,
                                       const std::vector<std::pair<double, State>>& anchors);

}  // namespace jbsde
