#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "jbsde/model.hpp"

namespace testing {

using jbsde::State;

/// Scalar model dX = a dt + σ dW + c ∫ e μ̃(dt, de) with one unit mark.
inline jbsde::ForwardModel scalar_model(double a, double sigma, double c, double x0 = 0.0) {
    jbsde::ForwardModel m;
    m.dim_x = 1;
    m.dim_w = 1;
    m.x0 = State::Constant(1, x0);
    m.a = [a](double, const State&) { return State::Constant(1, a); };
    m.b = [sigma](double, const State&) { return Eigen::MatrixXd::Constant(1, 1, sigma); };
    m.c = [c](double, const State&, double e) { return Eigen::MatrixXd::Constant(1, 1, c * e); };
    return m;
}

inline jbsde::JumpMeasureSpec single_mark(double intensity) {
    jbsde::JumpMeasureSpec m;
    if (intensity > 0.0) m.components.push_back({{1.0}, {intensity}});
    else m.components.push_back({{}, {}});
    return m;
}

/// f = k + ky y + kz z + kg Γ, γ constant, moduli declared from the coefficients.
inline jbsde::GeneratorSpec linear_generator(double k, double ky = 0.0, double kz = 0.0, double kg = 0.0,
                                             double gamma = 0.0, double u2_floor = 0.0) {
    jbsde::GeneratorSpec g;
    g.f1 = [=](double, const State&, double y, const Eigen::RowVectorXd& z, double gi) {
        return k + ky * y + kz * z[0] + kg * gi;
    };
    g.gamma = [gamma](double, double) { return Eigen::RowVectorXd::Constant(1, gamma); };
    g.u1 = [ky](double) { return std::abs(ky); };
    const double u2 = std::max({std::abs(kz), std::abs(gamma), u2_floor});
    g.u2 = [u2](double) { return u2; };
    return g;
}

inline jbsde::TerminalSpec identity_terminal() { return {[](const State& x) { return x[0]; }, 1.0}; }
inline jbsde::TerminalSpec constant_terminal(double v) { return {[v](const State&) { return v; }, std::abs(v)}; }

inline double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace testing
