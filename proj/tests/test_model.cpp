#include <doctest.h>

#include "helpers.hpp"
#include "jbsde/errors.hpp"
#include "jbsde/model.hpp"

using namespace jbsde;
using testing::scalar_model;

TEST_CASE("uniform grid nodes and lookup") {
    const auto g = TimeGrid::uniform(0.0, 1.0, 100);
    CHECK(g.n_nodes() == 101);
    CHECK(g.t_end() == 1.0);
    for (std::size_t i = 0; i < g.n_steps(); ++i) CHECK(g.dt(i) > 0.0);
    CHECK(g.index_of(0.5).value() == 50);
    CHECK_FALSE(g.index_of(0.505).has_value());
    CHECK(g.floor_index(0.505) == 50);
    CHECK(g.floor_index(0.25) == 25);
    CHECK(g.step_containing(0.505) == 50);
    CHECK(g.step_containing(0.51) == 50);
    CHECK(g.step_containing(1.0) == 99);
    const auto s = g.slice(25, 100);
    CHECK(s.t_start() == g.node(25));
    CHECK(s.n_steps() == 75);
}

TEST_CASE("grid rejects bad input") {
    CHECK_THROWS_AS(TimeGrid::uniform(0.0, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(TimeGrid::uniform(1.0, 1.0, 4), ConfigError);
    CHECK_THROWS_AS(TimeGrid::from_nodes({0.0, 0.5, 0.5, 1.0}), ConfigError);
    CHECK_NOTHROW(TimeGrid::from_nodes({0.0, 0.1, 0.5, 1.0}));
}

TEST_CASE("jump measure check") {
    JumpMeasureSpec m;
    m.components.push_back({{1.0, 2.0}, {1.0, 2.0}});
    CHECK(m.total_intensity() == doctest::Approx(3.0));
    CHECK_NOTHROW(m.check());
    m.components[0].intensities[1] = 0.0;
    CHECK_THROWS_AS(m.check(), ConfigError);
    JumpMeasureSpec disabled;
    CHECK(disabled.total_intensity() == 0.0);
    CHECK_NOTHROW(disabled.check());
}

namespace {

struct Fixture {
    ForwardModel model = scalar_model(0.0, 1.0, 0.0);
    JumpMeasureSpec measure = testing::single_mark(1.0);
    GeneratorSpec gen = testing::linear_generator(0.0);
    TerminalSpec term = testing::identity_terminal();
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 10);
};

}  // namespace

TEST_CASE("validate_model: trivial model passes") {
    Fixture f;
    const auto r = validate_model(f.model, f.measure, f.gen, f.term, f.grid);
    CHECK(r.passed());
}

TEST_CASE("validate_model: gamma below -1 fails with witness") {
    Fixture f;
    f.gen.gamma = [](double, double) { return Eigen::RowVectorXd::Constant(1, -1.5); };
    f.gen.u2 = [](double) { return 2.0; };
    const auto r = validate_model(f.model, f.measure, f.gen, f.term, f.grid);
    CHECK_FALSE(r.passed());
    const auto* c = r.find("gamma_lower_bound");
    REQUIRE(c);
    CHECK_FALSE(c->passed);
    CHECK(c->witness.find("A4") != std::string::npos);
    CHECK(c->witness.find("-1.5") != std::string::npos);
}

TEST_CASE("validate_model: quadratic terminal breaks linear growth at |x| = 3") {
    Fixture f;
    f.term = {[](const State& x) { return x[0] * x[0]; }, 1.0};
    ValidationOptions opts;
    opts.domain_radius = 3.0;
    const auto r = validate_model(f.model, f.measure, f.gen, f.term, f.grid, opts);
    const auto* c = r.find("terminal_growth");
    REQUIRE(c);
    CHECK_FALSE(c->passed);
    // worst violation on the box is at the boundary: 9 > 4
    CHECK(c->witness.find("|h(x)| = 9") != std::string::npos);
    CHECK(c->witness.find("> 4") != std::string::npos);
}

TEST_CASE("validate_model: throwing coefficient is a located evaluation error") {
    Fixture f;
    f.model.b = [](double t, const State&) -> Eigen::MatrixXd {
        if (t > 0.5) throw std::runtime_error("boom");
        return Eigen::MatrixXd::Constant(1, 1, 1.0);
    };
    try {
        validate_model(f.model, f.measure, f.gen, f.term, f.grid);
        FAIL("expected ModelError");
    } catch (const ModelError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("coefficient evaluation error") != std::string::npos);
        CHECK(msg.find("t=") != std::string::npos);
    }
}

TEST_CASE("validate_model: non-finite coefficient fails") {
    Fixture f;
    f.model.a = [](double, const State& x) { return State::Constant(1, 1.0 / x[0]); };
    const auto r = validate_model(f.model, f.measure, f.gen, f.term, f.grid);
    CHECK_FALSE(r.find("coefficients_finite")->passed);
}

TEST_CASE("validate_model is deterministic given the seed") {
    Fixture f;
    f.term = {[](const State& x) { return x[0] * x[0]; }, 1.0};
    ValidationOptions opts;
    opts.seed = 99;
    const auto a = validate_model(f.model, f.measure, f.gen, f.term, f.grid, opts);
    const auto b = validate_model(f.model, f.measure, f.gen, f.term, f.grid, opts);
    REQUIRE(a.checks.size() == b.checks.size());
    for (std::size_t i = 0; i < a.checks.size(); ++i) {
        CHECK(a.checks[i].passed == b.checks[i].passed);
        CHECK(a.checks[i].witness == b.checks[i].witness);
    }
}

TEST_CASE("validate_model warns on a heavy truncation tail") {
    Fixture f;
    f.gen.u1 = [](double) { return 5.0; };
    const auto r = validate_model(f.model, f.measure, f.gen, f.term, f.grid);
    CHECK(r.passed());
    CHECK_FALSE(r.warnings.empty());
}
