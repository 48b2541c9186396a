#include "jbsde/audit.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "jbsde/rng.hpp"

namespace jbsde {

namespace {

State reference_state(const AuditOptions& o) {
    if (o.x_ref.size() > 0) return o.x_ref;
    return State::Zero(static_cast<Eigen::Index>(o.dim_x));
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

bool AuditReport::passed() const {
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

std::vector<std::string> AuditReport::failed() const {
    std::vector<std::string> out;
    for (const auto& r : results) {
        if (!r.passed) out.push_back(r.name);
    }
    return out;
}

nlohmann::json AuditReport::to_json() const {
    nlohmann::json j;
    j["status"] = passed() ? "pass" : "fail";
    j["failed"] = failed();
    j["assumptions"] = nlohmann::json::array();
    for (const auto& r : results) {
        j["assumptions"].push_back({{"name", r.name},
                                    {"status", r.passed ? "pass" : "fail"},
                                    {"witnesses", r.witnesses},
                                    {"extremes", r.extremes},
                                    {"warnings", r.warnings}});
    }
    return j;
}

// ---------------------------------------------------------------------------

AssumptionResult audit_a1(const GeneratorSpec& gen, const TimeGrid& grid, const AuditOptions& options) {
    AssumptionResult res;
    res.name = "A1";
    const State x = reference_state(options);
    const Eigen::RowVectorXd z0 = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(options.dim_w));
    const double a = grid.t_start();
    const double b = grid.t_end();

    double prev = 0.0;
    double prev_diff = 0.0;
    int growing = 0;
    bool converged = false;
    std::size_t n = 16;
    for (std::size_t level = 0; level <= options.a1_max_level; ++level, n *= 2) {
        const double h = (b - a) / static_cast<double>(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = a + (static_cast<double>(i) + 0.5) * h;
            const double f = gen(t, x, 0.0, z0, 0.0);
            if (!std::isfinite(f)) {
                res.passed = false;
                res.witnesses.push_back("f(t, x_ref, 0, 0, 0) is not finite at t=" + fmt(t));
                return res;
            }
            sum += f * f;
        }
        const double integral = sum * h;
        res.extremes["integral"] = integral;
        if (integral > options.a1_cap) {
            res.passed = false;
            res.witnesses.push_back("quadrature exceeds cap " + fmt(options.a1_cap) + " at " +
                                    std::to_string(n) + " cells");
            return res;
        }
        if (level > 0) {
            const double diff = std::abs(integral - prev);
            if (diff <= 1e-8 * std::max(1.0, std::abs(integral))) {
                converged = true;
                break;
            }
            // a convergent midpoint rule shrinks the difference about fourfold
            growing = (level > 1 && diff > 0.9 * prev_diff) ? growing + 1 : 0;
            if (growing >= 3) {
                res.passed = false;
                res.witnesses.push_back("quadrature grows under refinement: " + fmt(integral) + " at " +
                                        std::to_string(n) + " cells");
                return res;
            }
            prev_diff = diff;
        }
        prev = integral;
    }
    if (!converged) {
        res.warnings.push_back("quadrature not settled at the finest level");
    }
    return res;
}

AssumptionResult audit_a2(const GeneratorSpec& gen, const TimeGrid& grid, const AuditOptions& options) {
    AssumptionResult res;
    res.name = "A2";
    auto eng = make_engine(options.seed, 0, Stream::audit);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> time(grid.t_start(), grid.t_end());
    const State x_ref = reference_state(options);
    const auto d = static_cast<Eigen::Index>(options.dim_w);

    auto separation = [&](double range) {
        std::uniform_real_distribution<double> expo(-6.0, std::log10(range));
        return std::pow(10.0, expo(eng));
    };
    double max_y = 0.0, max_z = 0.0, max_g = 0.0;
    double ratio_y = 0.0, ratio_z = 0.0, ratio_g = 0.0;
    auto note = [&](const char* what, double slope, double modulus, double t, double& max_slope, double& max_ratio) {
        max_slope = std::max(max_slope, slope);
        const double ratio = modulus > 0.0 ? slope / modulus : (slope > 0.0 ? INFINITY : 0.0);
        max_ratio = std::max(max_ratio, ratio);
        if (slope > modulus * (1.0 + options.tol) && res.witnesses.size() < 5) {
            res.passed = false;
            res.witnesses.push_back(std::string(what) + " slope " + fmt(slope) + " exceeds declared " + fmt(modulus) +
                                    " at t=" + fmt(t));
        }
        if (slope > modulus * (1.0 + options.tol)) res.passed = false;
    };

    for (std::size_t s = 0; s < options.n_samples; ++s) {
        const double t = time(eng);
        State x = x_ref;
        for (Eigen::Index j = 0; j < x.size(); ++j) x[j] += options.x_radius * unit(eng);
        const double y = options.y_range * unit(eng);
        Eigen::RowVectorXd z(d);
        for (Eigen::Index j = 0; j < d; ++j) z[j] = options.z_range * unit(eng);
        const double g = options.gamma_range * unit(eng);
        const double base = gen(t, x, y, z, g);
        const double u1 = gen.u1(t);
        const double u2 = gen.u2(t);

        const double dy = separation(options.y_range) * (unit(eng) < 0 ? -1.0 : 1.0);
        note("y", std::abs(gen(t, x, y + dy, z, g) - base) / std::abs(dy), u1, t, max_y, ratio_y);

        Eigen::RowVectorXd dir(d);
        for (Eigen::Index j = 0; j < d; ++j) dir[j] = unit(eng);
        if (dir.norm() > 0.0) {
            const Eigen::RowVectorXd dz = dir.normalized() * separation(options.z_range);
            note("z", std::abs(gen(t, x, y, z + dz, g) - base) / dz.norm(), u2, t, max_z, ratio_z);
        }

        const double dg = separation(options.gamma_range) * (unit(eng) < 0 ? -1.0 : 1.0);
        note("gamma_integral", std::abs(gen(t, x, y, z, g + dg) - base) / std::abs(dg), 1.0, t, max_g, ratio_g);
    }
    res.extremes = {{"max_slope_y", max_y},   {"max_slope_z", max_z},   {"max_slope_gamma_integral", max_g},
                    {"max_ratio_y", ratio_y}, {"max_ratio_z", ratio_z}, {"max_ratio_gamma_integral", ratio_g}};

    // ∫ u1 + u2² over the horizon; the tail beyond it is declared, not verified
    auto integrand = [&](double t) {
        const double u2 = gen.u2(t);
        return gen.u1(t) + u2 * u2;
    };
    const std::size_t n = 4096;
    double total = 0.0, tail = 0.0;
    const double T0 = grid.t_start(), T = grid.t_end();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        total += integrand(T0 + w * (T - T0));
        tail += integrand(T + w * T);
    }
    total *= (T - T0) / static_cast<double>(n);
    tail *= T / static_cast<double>(n);
    res.extremes["integral_u1_u2sq"] = total;
    res.extremes["tail_integral_u1_u2sq"] = tail;
    if (!std::isfinite(total)) {
        res.passed = false;
        res.witnesses.push_back("integral of u1 + u2^2 is not finite");
    }
    if (tail > options.tail_tolerance) {
        res.warnings.push_back("tail integral of u1 + u2^2 on [T, 2T] = " + fmt(tail) + " exceeds " +
                               fmt(options.tail_tolerance));
    }
    return res;
}

AssumptionResult audit_a3(const GeneratorSpec& gen, const TimeGrid& grid, const AuditOptions& options) {
    AssumptionResult res;
    res.name = "A3";
    auto eng = make_engine(options.seed, 1, Stream::audit);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const State x_ref = reference_state(options);
    const auto d = static_cast<Eigen::Index>(options.dim_w);
    const double a = grid.t_start();
    const double b = grid.t_end();
    const std::size_t M = std::max<std::size_t>(2, options.a3_mesh);
    double max_jump = 0.0;

    for (std::size_t s = 0; s < options.a3_points; ++s) {
        State x = x_ref;
        for (Eigen::Index j = 0; j < x.size(); ++j) x[j] += options.x_radius * unit(eng);
        const double y = options.y_range * unit(eng);
        Eigen::RowVectorXd z(d);
        for (Eigen::Index j = 0; j < d; ++j) z[j] = options.z_range * unit(eng);
        const double g = options.gamma_range * unit(eng);
        auto f = [&](double t) { return gen(t, x, y, z, g); };

        double prev_t = a;
        double prev_f = f(a);
        for (std::size_t k = 1; k <= M; ++k) {
            const double t = a + (b - a) * static_cast<double>(k) / static_cast<double>(M);
            const double ft = f(t);
            if (!std::isfinite(ft) || !std::isfinite(prev_f)) {
                res.passed = false;
                res.witnesses.push_back("non-finite value near t=" + fmt(std::isfinite(prev_f) ? t : prev_t));
                return res;
            }
            const double scale = std::max({1.0, std::abs(ft), std::abs(prev_f)});
            if (std::abs(ft - prev_f) > options.a3_tol * scale) {
                // bisect towards the larger half-jump; a continuous function fades out
                double lo = prev_t, hi = t, flo = prev_f, fhi = ft;
                for (int it = 0; it < 50; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double fm = f(mid);
                    if (std::abs(fm - flo) >= std::abs(fhi - fm)) {
                        hi = mid;
                        fhi = fm;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                const double jump = std::abs(fhi - flo);
                max_jump = std::max(max_jump, jump);
                if (jump > 0.5 * options.a3_tol * scale) {
                    res.passed = false;
                    if (res.witnesses.size() < 5) {
                        res.witnesses.push_back("jump of " + fmt(jump) + " near t=" + fmt(0.5 * (lo + hi)));
                    }
                }
            }
            prev_t = t;
            prev_f = ft;
        }
    }
    res.extremes["max_bisected_jump"] = max_jump;
    return res;
}

AssumptionResult audit_a4_gamma(const GeneratorSpec& gen, const JumpMeasureSpec& measure, const TimeGrid& grid) {
    AssumptionResult res;
    res.name = "A4";
    double min_gamma = INFINITY;
    double max_excess = -INFINITY;
    for (std::size_t n = 0; n < grid.n_nodes(); ++n) {
        const double t = grid.node(n);
        double sq = 0.0;
        for (std::size_t i = 0; i < measure.components.size(); ++i) {
            const auto& comp = measure.components[i];
            for (std::size_t k = 0; k < comp.marks.size(); ++k) {
                const double g = gen.gamma(t, comp.marks[k])[static_cast<Eigen::Index>(i)];
                min_gamma = std::min(min_gamma, g);
                sq += g * g * comp.intensities[k];
                if (!(g >= -1.0) && res.witnesses.size() < 5) {
                    res.witnesses.push_back("gamma^" + std::to_string(i + 1) + "(t=" + fmt(t) + ", e=" +
                                            fmt(comp.marks[k]) + ") = " + fmt(g) + " < -1");
                }
                if (!(g >= -1.0)) res.passed = false;
            }
        }
        const double u2 = gen.u2(t);
        max_excess = std::max(max_excess, sq - u2 * u2);
        if (!(sq <= u2 * u2)) {
            if (res.witnesses.size() < 5) {
                res.witnesses.push_back("sum |gamma|^2 lambda = " + fmt(sq) + " > u2^2 = " + fmt(u2 * u2) +
                                        " at t=" + fmt(t));
            }
            res.passed = false;
        }
    }
    if (std::isfinite(min_gamma)) res.extremes["min_gamma"] = min_gamma;
    res.extremes["max_excess_gamma_square"] = max_excess;
    return res;
}

AuditReport audit_all(const GeneratorSpec& gen, const JumpMeasureSpec& measure, const TimeGrid& grid,
                      const AuditOptions& options) {
    AuditReport report;
    report.results.push_back(audit_a1(gen, grid, options));
    report.results.push_back(audit_a2(gen, grid, options));
    report.results.push_back(audit_a3(gen, grid, options));
    report.results.push_back(audit_a4_gamma(gen, measure, grid));
    return report;
}

}  // namespace jbsde
