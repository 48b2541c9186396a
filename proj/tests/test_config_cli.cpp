#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jbsde/cli.hpp"
#include "jbsde/config.hpp"
#include "jbsde/errors.hpp"

using namespace jbsde;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path config_dir() {
    const char* env = std::getenv("JBSDE_CONFIG_DIR");
    return env ? fs::path(env) : fs::path("configs");
}

std::string preset(const std::string& name) { return (config_dir() / (name + ".json")).string(); }

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("jbsde_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> data_lines(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(s);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

json base_config() {
    return json::parse(R"({
      "model": {"preset": "scalar_jump_diffusion", "x0": 0.0, "sigma": 1.0, "jump_size": 1.0, "intensity": 1.0},
      "generator": {"preset": "zero"},
      "terminal": {"preset": "identity"},
      "grid": {"t_start": 0.0, "T_max": 1.0, "n_steps": 10},
      "mc": {"n_paths": 100, "seed": 1}
    })");
}

}  // namespace

TEST_CASE("parse_config: unknown keys are named") {
    auto j = base_config();
    j["mc"]["n_path"] = 10;
    try {
        parse_config(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("n_path") != std::string::npos);
    }
    auto k = base_config();
    k["bogus"] = 1;
    CHECK_THROWS_AS(parse_config(k), ConfigError);
}

TEST_CASE("parse_config: presets and overrides") {
    const auto cfg = parse_config(base_config());
    CHECK(cfg.setup.mc.n_paths == 100);
    CHECK(cfg.setup.grid.n_steps() == 10);
    CHECK(cfg.setup.model.dim_x == 1);
    CHECK(cfg.setup.measure.total_intensity() == 1.0);
    CHECK_FALSE(cfg.generator2);
    auto bad = base_config();
    bad["grid"]["n_steps"] = 0;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    auto wrong_type = base_config();
    wrong_type["mc"]["n_paths"] = "many";
    CHECK_THROWS_AS(parse_config(wrong_type), ConfigError);
}

TEST_CASE("table generator evaluates every term") {
    JumpMeasureSpec m;
    m.components.push_back({{1.0}, {1.0}});
    const auto g = make_generator(json::parse(R"({"preset": "table", "table": {"const": 1, "t": 2, "y": -0.5,
        "z": [0.25], "gamma_integral": 0.5, "sin_z": 1, "step_at": 0.5, "step_height": 3},
        "gamma": {"const": [0.5]}, "u1": "auto", "u2": "auto"})"),
                                  m, 1, 1, "generator");
    const State x = State::Zero(1);
    const Eigen::RowVectorXd z = Eigen::RowVectorXd::Constant(1, 2.0);
    const double expect = 1 + 2 * 0.75 - 0.5 * 1.0 + 0.25 * 2.0 + 0.5 * 0.4 + std::sin(2.0) + 3.0;
    CHECK(g.f1(0.75, x, 1.0, z, 0.4) == doctest::Approx(expect));
    CHECK(g.gamma(0.0, 1.0)[0] == 0.5);
    CHECK(g.u1(0.0) == doctest::Approx(0.5));
    CHECK(g.u2(0.0) == doctest::Approx(1.25));
}

TEST_CASE("terminal presets") {
    const auto sq = make_terminal(json::parse(R"({"preset": "square"})"), 1, "terminal");
    CHECK(sq.h(State::Constant(1, 3.0)) == 9.0);
    const auto af = make_terminal(json::parse(R"({"preset": "affine", "offset": 1, "slope": [2]})"), 1, "terminal");
    CHECK(af.h(State::Constant(1, 3.0)) == 7.0);
    CHECK_THROWS_AS(make_terminal(json::parse(R"({"preset": "cubic"})"), 1, "terminal"), ConfigError);
}

TEST_CASE("cmd_simulate: row count, provenance and byte-identical reruns") {
    const auto a = scratch("sim_a");
    const auto b = scratch("sim_b");
    REQUIRE(cli({"simulate", "--config", preset("simulate_minimal"), "--out", a.string()}).code == 0);
    REQUIRE(cli({"simulate", "--config", preset("simulate_minimal"), "--out", b.string()}).code == 0);
    const auto rows = data_lines(a / "paths.csv");
    CHECK(rows.size() == 1 + 50 * 21);
    const auto text = slurp(a / "paths.csv");
    CHECK(text.rfind("# jbsde 0.1.0\n# seed: 7\n# config: ", 0) == 0);
    CHECK(text == slurp(b / "paths.csv"));
    CHECK(slurp(a / "events.csv") == slurp(b / "events.csv"));

    const auto c = scratch("sim_c");
    REQUIRE(cli({"simulate", "--config", preset("simulate_minimal"), "--out", c.string(), "--seed", "8"}).code == 0);
    CHECK(slurp(c / "paths.csv") != text);
    CHECK(slurp(c / "paths.csv").find("# seed: 8") != std::string::npos);
}

TEST_CASE("cmd_simulate: bad key exits 2 naming the key") {
    const auto dir = scratch("bad_key");
    auto j = base_config();
    j["mc"]["n_path"] = 10;
    std::ofstream(dir / "bad.json") << j.dump();
    const auto r = cli({"simulate", "--config", (dir / "bad.json").string(), "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("n_path") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    CHECK(cli({}).code == 2);
    CHECK(cli({"solve"}).code == 2);
    CHECK(cli({"solve", "--config", "/nonexistent/cfg.json"}).code == 2);
    CHECK(cli({"simulate", "--config", preset("simulate_minimal"), "--workers", "zero"}).code == 2);
}

TEST_CASE("cmd_solve presets") {
    SUBCASE("constant driver") {
        const auto dir = scratch("solve_const");
        REQUIRE(cli({"solve", "--config", preset("constant_driver"), "--out", dir.string(), "--paths", "2000"}).code ==
                0);
        const auto rows = data_lines(dir / "summary.csv");
        REQUIRE(rows.size() == 2);
        CHECK(std::stod(split(rows[1])[2]) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fs::exists(dir / "coefficients_continuation.csv"));
        CHECK(fs::exists(dir / "coefficients_z1.csv"));
    }
    SUBCASE("linear ODE") {
        const auto dir = scratch("solve_ode");
        REQUIRE(cli({"solve", "--config", preset("linear_ode"), "--out", dir.string()}).code == 0);
        const auto cells = split(data_lines(dir / "summary.csv")[1]);
        CHECK(std::abs(std::stod(cells[2]) - std::exp(-0.5)) <= 0.01);
    }
    SUBCASE("zero-driver martingale") {
        const auto dir = scratch("solve_mg");
        REQUIRE(cli({"solve", "--config", preset("martingale"), "--out", dir.string()}).code == 0);
        const auto cells = split(data_lines(dir / "summary.csv")[1]);
        CHECK(std::abs(std::stod(cells[2])) <= 3.0 * std::stod(cells[3]));
    }
}

TEST_CASE("cmd_audit exit codes") {
    const auto pass = cli({"audit", "--config", preset("audit_pass")});
    CHECK(pass.code == 0);
    const auto neg = cli({"audit", "--config", preset("audit_gamma_negative")});
    CHECK(neg.code == 1);
    CHECK(neg.out.find("A4") != std::string::npos);
    const auto u2 = cli({"audit", "--config", preset("audit_u2_understated")});
    CHECK(u2.code == 1);
    CHECK(u2.out.find("A2") != std::string::npos);
    CHECK(u2.out.find("A4") != std::string::npos);
    const auto j = json::parse(pass.out);
    CHECK(j.at("seed") == 2011);
    CHECK(j.contains("config"));
}

TEST_CASE("cmd_compare and cmd_converse presets") {
    SUBCASE("ordered constant pair") {
        const auto dir = scratch("cmp_const");
        CHECK(cli({"compare", "--config", preset("compare_constant"), "--out", dir.string(), "--paths", "2000"}).code ==
              0);
        const auto cells = split(data_lines(dir / "report.csv")[1]);
        CHECK(cells.back() == "ordered");
        const auto rep = json::parse(slurp(dir / "report.json"));
        CHECK(rep.at("version") == "0.1.0");
        CHECK(rep.at("seed") == 2011);
        CHECK(rep.contains("config"));
    }
    SUBCASE("identical pair is bit-identical") {
        const auto dir = scratch("cmp_same");
        CHECK(cli({"compare", "--config", preset("compare_identical"), "--out", dir.string(), "--paths", "2000"}).code ==
              0);
        const auto cells = split(data_lines(dir / "report.csv")[1]);
        CHECK(cells[2] == cells[4]);
        CHECK(cells[3] == cells[5]);
    }
    SUBCASE("converse constant gap") {
        const auto dir = scratch("conv");
        CHECK(cli({"converse", "--config", preset("converse_constant"), "--out", dir.string(), "--paths", "2000"})
                  .code == 0);
        const auto rep = json::parse(slurp(dir / "report.json"));
        CHECK(rep.at("report").at("difference").at("estimate").get<double>() > 0.0);
        CHECK(rep.at("report").at("verdict") == "ordered");
    }
}

TEST_CASE("reports are identical across worker counts") {
    const auto a = scratch("wk1");
    const auto b = scratch("wk8");
    REQUIRE(cli({"compare", "--config", preset("compare_constant"), "--out", a.string(), "--paths", "1500",
                 "--workers", "1"})
                .code == 0);
    REQUIRE(cli({"compare", "--config", preset("compare_constant"), "--out", b.string(), "--paths", "1500",
                 "--workers", "8"})
                .code == 0);
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
}
