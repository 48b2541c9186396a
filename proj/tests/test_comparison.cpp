#include <doctest.h>

#include "helpers.hpp"
#include "jbsde/comparison.hpp"
#include "jbsde/errors.hpp"

using namespace jbsde;
using testing::linear_generator;

namespace {

ExperimentSetup setup(std::size_t n_paths = 4000, std::uint64_t seed = 2011, std::size_t n_steps = 100) {
    ExperimentSetup s;
    s.model = testing::scalar_model(0, 1, 1);
    s.measure = testing::single_mark(1.0);
    s.grid = TimeGrid::uniform(0.0, 1.0, n_steps);
    s.mc.n_paths = n_paths;
    s.mc.seed = seed;
    s.audit.seed = seed;
    s.audit.n_samples = 1000;
    return s;
}

TerminalSpec shifted_identity(double c) { return {[c](const State& x) { return x[0] + c; }, 1.0 + std::abs(c)}; }

}  // namespace

TEST_CASE("run_comparison examples") {
    const auto s = setup();
    SUBCASE("f1 = 0, f2 = 1") {
        const auto r = run_comparison(linear_generator(0), linear_generator(1), testing::identity_terminal(),
                                      testing::identity_terminal(), s);
        CHECK(std::abs(r.y2.value - r.y1.value - 1.0) <= 3.0 * r.combined_se());
        CHECK(r.verdict == Verdict::ordered);
        CHECK_FALSE(r.vacuous);
        CHECK(r.surface_violations == 0);
    }
    SUBCASE("identical generators and terminals are bit-identical") {
        const auto g = linear_generator(0.2, -0.5, 0.3, 0.5, 0.5);
        const auto r = run_comparison(g, g, testing::identity_terminal(), testing::identity_terminal(), s);
        CHECK(r.y1.value == r.y2.value);
        CHECK(r.y1.se == r.y2.se);
        CHECK(r.diff == 0.0);
        CHECK(r.verdict == Verdict::ordered);
    }
    SUBCASE("h2 = h1 + 1 with zero driver") {
        const auto r = run_comparison(linear_generator(0), linear_generator(0), testing::identity_terminal(),
                                      shifted_identity(1.0), s);
        CHECK(r.y2.value - r.y1.value == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(r.verdict == Verdict::ordered);
    }
    SUBCASE("reversed hypothesis is reported vacuous") {
        const auto r = run_comparison(linear_generator(1), linear_generator(0), testing::identity_terminal(),
                                      testing::identity_terminal(), s);
        CHECK(r.vacuous);
        CHECK(r.verdict == Verdict::inconclusive);
    }
}

TEST_CASE("run_strict_comparison examples") {
    const auto s = setup();
    SUBCASE("constant pair") {
        const auto r = run_strict_comparison(linear_generator(1), linear_generator(0), testing::constant_terminal(0),
                                             1.0, s);
        CHECK(std::abs(r.diff - 1.0) <= 1e-12);
        CHECK(r.verdict == Verdict::strictly_ordered);
    }
    SUBCASE("identical generators: margin rejected") {
        const auto r = run_strict_comparison(linear_generator(1), linear_generator(1), testing::constant_terminal(0),
                                             0.0, s);
        CHECK(r.verdict == Verdict::inconclusive);
        CHECK(r.vacuous);
    }
    SUBCASE("linear pair: difference solves the discounted ODE") {
        const auto r = run_strict_comparison(linear_generator(1, -0.5), linear_generator(0, -0.5),
                                             testing::constant_terminal(0), 1.0, s);
        const double exact = (1.0 - std::exp(-0.5)) / 0.5;
        CHECK(std::abs(r.diff - exact) <= 0.005);
        CHECK(r.verdict == Verdict::strictly_ordered);
    }
}

TEST_CASE("run_converse_experiment examples") {
    const auto s = setup(4000);
    ConverseParams cp;
    cp.t = 0.0;
    cp.x = State::Zero(1);
    cp.eta = 0.5;
    cp.delta = 0.25;
    SUBCASE("c1 = 1, c2 = 0") {
        const auto r = run_converse_experiment(linear_generator(1), linear_generator(0), testing::identity_terminal(),
                                               cp, s);
        REQUIRE(r.tau_stats);
        CHECK(std::abs(r.diff - r.tau_stats->mean) <= 3.0 * r.combined_se() + 1e-12);
        CHECK(r.generator_gap->gap == 1.0);
        CHECK(*r.sign_agreement);
        CHECK(r.verdict == Verdict::ordered);
        CHECK(r.tau_stats->min > 0.0);
        CHECK(r.tau_stats->max <= 0.25 + 1e-12);
        CHECK(r.deterministic_times.size() == 4);
        for (const auto& d : r.deterministic_times) CHECK(d.diff == doctest::Approx(d.v).epsilon(1e-10));
    }
    SUBCASE("f1 = f2") {
        const auto g = linear_generator(0.3, -0.2, 0.1, 0.5, 0.5);
        const auto r = run_converse_experiment(g, g, testing::identity_terminal(), cp, s);
        CHECK(r.y1.value == r.y2.value);
        CHECK(r.generator_gap->gap == 0.0);
    }
    SUBCASE("c1 = 0, c2 = 1") {
        const auto r = run_converse_experiment(linear_generator(0), linear_generator(1), testing::identity_terminal(),
                                               cp, s);
        CHECK(r.y1.value <= r.y2.value);
        CHECK(r.generator_gap->gap == -1.0);
        CHECK(*r.sign_agreement);
    }
    SUBCASE("off-grid anchor") {
        cp.t = 0.005;
        CHECK_THROWS_AS(run_converse_experiment(linear_generator(1), linear_generator(0),
                                                testing::identity_terminal(), cp, s),
                        ConfigError);
    }
}

TEST_CASE("unaudited generators are refused") {
    const auto s = setup(500);
    auto bad = linear_generator(0, 0, 0, 0, -1.5, 2.0);
    try {
        run_comparison(bad, linear_generator(1), testing::identity_terminal(), testing::identity_terminal(), s);
        FAIL("expected AssumptionError");
    } catch (const AssumptionError& e) {
        CHECK(std::string(e.what()).find("A4") != std::string::npos);
    }
}

TEST_CASE("scan_generator_gap examples") {
    const auto s = setup(4000, 3, 50);
    SimulationOptions so{s.mc.n_paths, s.mc.seed, 1};
    const auto bundle = simulate_paths(s.model, s.measure, s.grid, so);
    const auto xi = terminal_values(bundle, testing::identity_terminal());
    const auto sol = solve_backward(bundle, linear_generator(0), s.measure, xi);
    const std::vector<std::pair<double, State>> anchors{
        {0.0, State::Zero(1)}, {0.5, State::Constant(1, 0.3)}, {0.8, State::Constant(1, -0.4)}};

    SUBCASE("constant generators") {
        for (const auto& row : scan_generator_gap(linear_generator(0.7), linear_generator(-0.2), sol, s.model,
                                                  s.measure, anchors))
            CHECK(row.gap == doctest::Approx(0.9).epsilon(1e-15));
    }
    SUBCASE("f1 = y") {
        for (const auto& row : scan_generator_gap(linear_generator(0, 1), linear_generator(0), sol, s.model,
                                                  s.measure, anchors)) {
            CHECK(row.gap == row.u);
            CHECK(row.u == value_function(sol, row.t, row.x).value);
        }
    }
    SUBCASE("f1 = Gamma") {
        const auto f1 = linear_generator(0, 0, 0, 1, 1.0);
        const auto u = as_value_fn(sol);
        for (const auto& row : scan_generator_gap(f1, linear_generator(0), sol, s.model, s.measure, anchors)) {
            CHECK(row.gap == row.zeta);
            CHECK(row.zeta == feynman_kac_u(u, s.model, f1, s.measure, row.t, row.x));
            // u ≈ x and unit jumps at unit rate; at t0 the cloud is a single point and
            // u(x0 + 1) rests on the few paths that jumped in the first step
            if (row.t > 0.0) CHECK(std::abs(row.zeta - 1.0) <= 0.05);
        }
    }
}

TEST_CASE("report serialisation") {
    const auto s = setup(500);
    auto r = run_comparison(linear_generator(0), linear_generator(1), testing::identity_terminal(),
                            testing::identity_terminal(), s);
    r.experiment = "demo";
    CHECK(ComparisonReport::csv_header() == "experiment,seed,Y1,SE1,Y2,SE2,gap,tau_mean,verdict");
    const auto row = r.csv_row();
    CHECK(row.rfind("demo,2011,", 0) == 0);
    CHECK(row.substr(row.rfind(',') + 1) == "ordered");
    const auto j = r.to_json();
    CHECK(j.at("verdict") == "ordered");
    CHECK(j.at("seed") == 2011);
}
