#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "jbsde/bsde.hpp"
#include "jbsde/errors.hpp"
#include "jbsde/paths.hpp"

using namespace jbsde;
using testing::linear_generator;
using testing::scalar_model;
using testing::single_mark;

namespace {

struct Run {
    PathBundle bundle;
    std::vector<double> xi;
    BackwardSolution sol;
};

Run run(const ForwardModel& model, const JumpMeasureSpec& measure, const GeneratorSpec& gen,
        const TerminalSpec& term, std::size_t n_steps, std::size_t n_paths, std::uint64_t seed,
        std::size_t workers = 1) {
    const auto grid = TimeGrid::uniform(0.0, 1.0, n_steps);
    SimulationOptions so;
    so.n_paths = n_paths;
    so.seed = seed;
    so.workers = workers;
    auto bundle = simulate_paths(model, measure, grid, so);
    auto xi = terminal_values(bundle, term);
    BackwardOptions bo;
    bo.workers = workers;
    auto sol = solve_backward(bundle, gen, measure, xi, nullptr, bo);
    return {std::move(bundle), std::move(xi), std::move(sol)};
}

}  // namespace

TEST_CASE("solve_backward: zero driver martingale") {
    const auto r = run(scalar_model(0, 1, 0), single_mark(0.0), linear_generator(0.0),
                       testing::identity_terminal(), 50, 10000, 2011);
    CHECK(std::abs(r.sol.y0()) <= 3.0 * r.sol.y0_se());
    CHECK(r.sol.y0_se() == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("solve_backward: constant driver is exact") {
    const auto r = run(scalar_model(0, 1, 1), single_mark(1.0), linear_generator(1.0),
                       testing::constant_terminal(0.0), 100, 2000, 1);
    CHECK(r.sol.y0() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.sol.y0_se() <= 1e-12);
}

TEST_CASE("solve_backward: linear ODE oracle") {
    const auto r = run(scalar_model(0, 1, 1), single_mark(1.0), linear_generator(0.0, -0.5),
                       testing::constant_terminal(1.0), 100, 10000, 2011);
    CHECK(std::abs(r.sol.y0() - std::exp(-0.5)) <= 0.01);
}

TEST_CASE("solve_backward: Gamma driver self-refinement") {
    // pure-jump c=1, λ=1, f=Γ, γ=1, ξ=X_T; closed form u(t,x) = x + (T - t)
    const auto model = scalar_model(0, 0, 1);
    const auto gen = linear_generator(0.0, 0.0, 0.0, 1.0, 1.0);
    const auto coarse = run(model, single_mark(1.0), gen, testing::identity_terminal(), 25, 10000, 31);
    const auto fine = run(model, single_mark(1.0), gen, testing::identity_terminal(), 100, 10000, 32);
    const double ci = 3.0 * (coarse.sol.y0_se() + fine.sol.y0_se());
    CHECK(std::abs(coarse.sol.y0() - fine.sol.y0()) <= ci);
    CHECK(std::abs(fine.sol.y0() - 1.0) <= 3.0 * fine.sol.y0_se());
    CHECK(fine.sol.gamma0() == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("terminal exactness and tower property") {
    const auto r = run(scalar_model(0.1, 0.5, 0.5, 0.2), single_mark(1.0), linear_generator(0.0),
                       {[](const State& x) { return std::sin(x[0]); }, 1.0}, 20, 3000, 4);
    const std::size_t N = 20;
    double mean_xi = 0.0;
    for (std::size_t p = 0; p < r.bundle.n_paths(); ++p) {
        CHECK(r.sol.y(p, N) == r.xi[p]);
        mean_xi += r.xi[p];
    }
    mean_xi /= static_cast<double>(r.bundle.n_paths());
    CHECK(std::abs(r.sol.y0() - mean_xi) <= 1e-12);
}

TEST_CASE("oracle convergence along the refinement ladder") {
    const std::vector<std::pair<std::size_t, std::size_t>> ladder{{10, 1000}, {20, 2000}, {40, 4000}, {80, 8000}};
    SUBCASE("linear ODE") {
        double prev = 1e9, prev_se = 0.0;
        for (auto [n, m] : ladder) {
            const auto r = run(scalar_model(0, 1, 1), single_mark(1.0), linear_generator(0.0, -0.5),
                               testing::constant_terminal(1.0), n, m, 5);
            const double err = std::abs(r.sol.y0() - std::exp(-0.5));
            CHECK(err < prev + 2.0 * (prev_se + r.sol.y0_se()));
            prev = err;
            prev_se = r.sol.y0_se();
        }
        CHECK(prev < 0.002);
    }
    SUBCASE("zero driver martingale") {
        double prev = 1e9, prev_se = 0.0;
        for (auto [n, m] : ladder) {
            const auto r = run(scalar_model(0, 1, 1), single_mark(1.0), linear_generator(0.0),
                               testing::identity_terminal(), n, m, 6);
            const double err = std::abs(r.sol.y0());
            CHECK(err < prev + 2.0 * (prev_se + r.sol.y0_se()));
            prev = err;
            prev_se = r.sol.y0_se();
        }
    }
}

TEST_CASE("comparison consistency at solver level") {
    const auto model = scalar_model(0, 1, 1);
    const auto measure = single_mark(1.0);
    const auto grid = TimeGrid::uniform(0.0, 1.0, 50);
    SimulationOptions so;
    so.n_paths = 5000;
    so.seed = 12;
    const auto bundle = simulate_paths(model, measure, grid, so);
    const auto xi = terminal_values(bundle, testing::identity_terminal());
    auto f1 = linear_generator(0.1, -0.3, 0.2, 0.5, 0.5);
    auto f2 = f1;
    f2.f1 = [g = f1.f1](double t, const State& x, double y, const Eigen::RowVectorXd& z, double gi) {
        return g(t, x, y, z, gi) + 0.25 * std::abs(z[0]);
    };
    const auto s1 = solve_backward(bundle, f1, measure, xi);
    const auto s2 = solve_backward(bundle, f2, measure, xi);
    CHECK(s1.y0() <= s2.y0() + 3.0 * (s1.y0_se() + s2.y0_se()));
}

TEST_CASE("determinism across reruns and worker counts") {
    const auto a = run(scalar_model(0, 1, 1), single_mark(1.0), linear_generator(0.2, -0.5, 0.3, 0.5, 0.5),
                       testing::identity_terminal(), 20, 2000, 99, 1);
    const auto b = run(scalar_model(0, 1, 1), single_mark(1.0), linear_generator(0.2, -0.5, 0.3, 0.5, 0.5),
                       testing::identity_terminal(), 20, 2000, 99, 8);
    CHECK(a.sol == b.sol);
    std::ostringstream sa, sb;
    write_solution_csv(sa, a.sol);
    write_solution_csv(sb, b.sol);
    CHECK(sa.str() == sb.str());
}

TEST_CASE("stopped paths are frozen at their terminal value") {
    const auto grid = TimeGrid::uniform(0.0, 1.0, 20);
    SimulationOptions so;
    so.n_paths = 1000;
    so.seed = 3;
    const auto bundle = simulate_paths(scalar_model(0, 1, 0), single_mark(0.0), grid, so);
    std::vector<std::size_t> stop(so.n_paths);
    std::vector<double> xi(so.n_paths, 0.0);
    double mean_t = 0.0;
    for (std::size_t p = 0; p < so.n_paths; ++p) {
        stop[p] = 1 + p % 20;
        mean_t += grid.node(stop[p]) / static_cast<double>(so.n_paths);
    }
    const auto sol = solve_backward(bundle, linear_generator(1.0), single_mark(0.0), xi, &stop);
    CHECK(sol.y0() == doctest::Approx(mean_t).epsilon(1e-12));
    for (std::size_t p = 0; p < so.n_paths; ++p) {
        for (std::size_t i = stop[p]; i <= 20; ++i) {
            CHECK(sol.y(p, i) == 0.0);
            CHECK(sol.z(p, i)[0] == 0.0);
            CHECK(sol.gamma(p, i) == 0.0);
        }
        CHECK(sol.pathwise_samples()[p] == doctest::Approx(grid.node(stop[p])).epsilon(1e-12));
    }
}

TEST_CASE("solve_backward errors") {
    const auto grid = TimeGrid::uniform(0.0, 1.0, 5);
    SimulationOptions so;
    so.n_paths = 50;
    const auto bundle = simulate_paths(scalar_model(0, 1, 0), single_mark(0.0), grid, so);
    std::vector<double> xi(50, 1.0);
    auto gen = linear_generator(0.0);
    gen.f1 = [](double, const State&, double y, const Eigen::RowVectorXd&, double) { return std::log(y - 1.0); };
    try {
        solve_backward(bundle, gen, single_mark(0.0), xi);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("non-finite generator value") != std::string::npos);
        CHECK(msg.find("path") != std::string::npos);
    }
    std::vector<double> short_xi(10, 0.0);
    CHECK_THROWS_AS(solve_backward(bundle, linear_generator(0.0), single_mark(0.0), short_xi), ConfigError);
}

TEST_CASE("value_function examples") {
    SUBCASE("martingale: u(t,x) = x") {
        const auto r = run(scalar_model(0, 1, 0), single_mark(0.0), linear_generator(0.0),
                           testing::identity_terminal(), 20, 10000, 21);
        for (double x : {-0.5, 0.0, 0.5}) {
            const auto v = value_function(r.sol, 0.5, State::Constant(1, x));
            CHECK(std::abs(v.value - x) <= 0.03);
            CHECK_FALSE(v.extrapolated);
        }
        const auto far = value_function(r.sol, 0.5, State::Constant(1, 50.0));
        CHECK(far.extrapolated);
    }
    SUBCASE("constant driver: u(t,x) = T - t") {
        const auto r = run(scalar_model(0, 1, 0), single_mark(0.0), linear_generator(1.0),
                           testing::constant_terminal(0.0), 20, 2000, 22);
        for (double t : {0.0, 0.25, 0.5, 0.95})
            for (double x : {-0.3, 0.0, 0.4})
                CHECK(value_function(r.sol, t, State::Constant(1, x)).value ==
                      doctest::Approx(1.0 - t).epsilon(1e-10));
    }
    SUBCASE("linear ODE: u(t,x) = exp(-rho (T - t))") {
        const auto r = run(scalar_model(0, 1, 0), single_mark(0.0), linear_generator(0.0, -0.5),
                           testing::constant_terminal(1.0), 100, 2000, 23);
        for (double t : {0.0, 0.5})
            CHECK(std::abs(value_function(r.sol, t, State::Constant(1, 0.2)).value - std::exp(-0.5 * (1 - t))) <=
                  0.01);
    }
    SUBCASE("off-grid time is an error") {
        const auto r = run(scalar_model(0, 1, 0), single_mark(0.0), linear_generator(0.0),
                           testing::identity_terminal(), 10, 100, 24);
        CHECK_THROWS_AS(value_function(r.sol, 0.55, State::Zero(1)), ConfigError);
    }
}

TEST_CASE("feynman_kac_z examples") {
    const auto model = scalar_model(0, 0.3, 0);
    CHECK(feynman_kac_z([](double, const State& x) { return x[0]; }, model, 0.0, State::Zero(1))[0] ==
          doctest::Approx(0.3).epsilon(1e-10));
    const auto unit = scalar_model(0, 1, 0);
    const double chi = feynman_kac_z([](double, const State& x) { return x[0] * x[0]; }, unit, 0.0,
                                     State::Constant(1, 2.0))[0];
    CHECK(std::abs(chi - 4.0) <= 1e-6);
    CHECK(fd_step(0.0) == 1e-4);
    CHECK(fd_step(10.0) == doctest::Approx(1e-3));
}

TEST_CASE("feynman_kac_z on the fitted value function matches b and the solver Z") {
    const auto r = run(scalar_model(0, 0.3, 0), single_mark(0.0), linear_generator(0.0),
                       testing::identity_terminal(), 100, 10000, 2011);
    const double chi = feynman_kac_z(as_value_fn(r.sol), scalar_model(0, 0.3, 0), 0.0, State::Zero(1))[0];
    CHECK(std::abs(chi - 0.3) <= 0.03);
    CHECK(std::abs(chi - r.sol.z0()[0]) <= 0.03);
}

TEST_CASE("feynman_kac_u examples") {
    const auto model = scalar_model(0, 0, 1);
    const auto measure = single_mark(2.0);
    const auto id = [](double, const State& x) { return x[0]; };
    CHECK(feynman_kac_u(id, model, linear_generator(0, 0, 0, 1, 1.0), measure, 0.0, State::Constant(1, 0.7)) ==
          2.0);
    CHECK(feynman_kac_u([](double, const State&) { return 3.0; }, model, linear_generator(0, 0, 0, 1, 1.0),
                        measure, 0.0, State::Zero(1)) == 0.0);
    CHECK(feynman_kac_u(id, model, linear_generator(0, 0, 0, 1, 0.0), measure, 0.0, State::Zero(1)) == 0.0);
}

TEST_CASE("closed_form_oracle examples") {
    const auto mg = closed_form_oracle("zero_driver_martingale", {{"x0", 1.0}, {"sigma", 1.0}});
    CHECK(mg(0.3, State::Constant(1, 1.7)).y == 1.7);
    CHECK(mg(0.3, State::Constant(1, 1.7)).z == 1.0);
    const auto cd = closed_form_oracle("constant_driver", {{"k", 1.0}, {"T", 1.0}});
    for (double t : {0.0, 0.25, 1.0}) CHECK(cd(t, State::Zero(1)).y == doctest::Approx(1.0 - t));
    const auto lo = closed_form_oracle("linear_ode", {{"rho", 0.5}, {"T", 1.0}, {"terminal", 1.0}});
    CHECK(lo(0.0, State::Zero(1)).y == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK_THROWS_AS(closed_form_oracle("nope", {}), ConfigError);
}

TEST_CASE("coefficient dump") {
    const auto r = run(scalar_model(0, 1, 1), single_mark(1.0), linear_generator(0.0),
                       testing::identity_terminal(), 5, 500, 7);
    std::ostringstream os;
    write_coefficients_csv(os, r.sol, "continuation");
    CHECK(os.str().rfind("node,basis_index,coefficient", 0) == 0);
    std::ostringstream bad;
    CHECK_THROWS_AS(write_coefficients_csv(bad, r.sol, "z9"), ConfigError);
}
