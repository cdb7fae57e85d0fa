// test_cli_runner.cpp — configuration round trips, determinism, manifests,
// exit codes and the report table

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "qbm/cli_runner.hpp"

namespace fs = std::filesystem;
using namespace qbm;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("qbm_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

nlohmann::json manifest_of(const fs::path& dir) {
    std::ifstream is(dir / "manifest.json");
    nlohmann::json j;
    is >> j;
    return j;
}

// Small and quick: a thermal cat decohering over the short-time window.
ScenarioConfig quick_decohere() {
    return parse_config_text(R"(
[run]
name = quick
modes = decohere
[bath]
gamma = 0.001
[oscillator]
spring_constant = 0
[thermal]
kT = 4
[state]
kind = cat
d = 10
[decohere]
regime = thermal-initial
t_final = 0.05
samples = 11
)");
}

ScenarioConfig quick_kramers() {
    return parse_config_text(R"(
[run]
name = mc
modes = kramers-compare
[thermal]
kT = 5
[state]
kind = thermal
kT = 2
q0 = 3
[grid]
nq = 96
np = 96
[kramers]
paths = 2000
samples = 2
t_final = 1
mc_dt = 0.05
)");
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(QBM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesSectionsAndDefaults) {
    const auto c = parse_config_text(R"(
; comment
[run]
name = demo
modes = evolve, coefficients
[bath]
kind = srt
gamma = 0.3
tau = 0.25
[thermal]
kT = 7.5
allow_low_temperature = true
[evolve]
lambdas = -1, 1
)");
    EXPECT_EQ(c.name, "demo");
    ASSERT_EQ(c.modes.size(), 2u);
    EXPECT_EQ(c.modes[1], "coefficients");
    EXPECT_EQ(c.bath().kind, BathKind::SingleRelaxationTime);
    EXPECT_DOUBLE_EQ(c.bath().tau, 0.25);
    EXPECT_DOUBLE_EQ(c.kT, 7.5);
    EXPECT_TRUE(c.allow_low_temperature);
    EXPECT_EQ(c.lambdas, (std::vector<int>{-1, 1}));
    EXPECT_EQ(c.nq, 256u);
    EXPECT_DOUBLE_EQ(c.mass, 1.0);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_config_text("[bath]\ngama = 0.1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[nosuch]\nx = 1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[bath]\ngamma = fast\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[bath]\ngamma = 0.1x\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[bath]\ngamma = -0.1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[grid]\nnq = -4\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[run]\nmodes = evolve, dance\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[bath]\nkind = srt\ngamma = 0.1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[decohere]\nregime = lukewarm\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[thermal]\nallow_low_temperature = maybe\n"), ConfigError);
    EXPECT_THROW(parse_config_text("gamma = 0.1\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[bath\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/scenario.ini"), ConfigError);
}

TEST(Config, OverridesReplaceFileValues) {
    auto c = quick_decohere();
    apply_override(c, "bath.gamma=0.25");
    apply_override(c, " state.d = 8 ");
    apply_override(c, "run.modes=");
    EXPECT_DOUBLE_EQ(c.gamma, 0.25);
    EXPECT_DOUBLE_EQ(c.d, 8.0);
    EXPECT_TRUE(c.modes.empty());
    EXPECT_THROW(apply_override(c, "bath.gamma"), ConfigError);
    EXPECT_THROW(apply_override(c, "bath.colour=red"), ConfigError);
    EXPECT_THROW(apply_override(c, "gamma=1"), ConfigError);
}

TEST(Config, EchoRoundTripsExactly) {
    auto c = quick_decohere();
    apply_override(c, "bath.gamma=0.30000000000000004");
    apply_override(c, "state.sigma=0.1");
    apply_override(c, "thermal.kT=1e-7");
    apply_override(c, "evolve.lambdas=1,0");
    apply_override(c, "output.seed=18446744");
    const auto echoed = to_ini(c);
    const auto back = parse_config_text(echoed);
    EXPECT_EQ(back, c);
    EXPECT_EQ(to_ini(back), echoed);
    EXPECT_EQ(config_hash(back), config_hash(c));
    apply_override(c, "state.sigma=0.10000000000000002");
    EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(Config, EverySampleConfigLoads) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(QBM_CONFIG_DIR))
        if (e.path().extension() == ".ini") {
            EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
            ++n;
        }
    EXPECT_GE(n, 5u);
}

TEST(Runner, EmptyRunListWritesOnlyTheManifest) {
    const auto dir = scratch("empty");
    auto c = quick_decohere();
    c.modes.clear();
    const auto res = run_scenario(c, dir);
    EXPECT_EQ(res.exit_code, exit_ok);
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
    EXPECT_EQ(entries, 1u);
    const auto m = manifest_of(dir);
    EXPECT_TRUE(m.at("runs").empty());
    EXPECT_EQ(m.at("config_hash"), config_hash(c));
    EXPECT_EQ(parse_config_text(m.at("config").get<std::string>()), c);
    EXPECT_EQ(m.at("seed").get<std::uint64_t>(), c.seed);
    EXPECT_TRUE(m.at("versions").contains("eigen"));
    EXPECT_TRUE(m.contains("wall_time_s"));
}

TEST(Runner, DecohereIsByteDeterministic) {
    const auto a = scratch("det_a"), b = scratch("det_b");
    const auto c = quick_decohere();
    ASSERT_EQ(run_scenario(c, a).exit_code, exit_ok);
    ASSERT_EQ(run_scenario(c, b).exit_code, exit_ok);
    const auto ta = slurp(a / "decohere" / "attenuation.csv");
    EXPECT_FALSE(ta.empty());
    EXPECT_EQ(ta, slurp(b / "decohere" / "attenuation.csv"));
    EXPECT_EQ(ta.substr(0, ta.find('\n')), "t,a_simulated,a_closed_form,regime,gamma,kT,mass,hbar,d,sigma");
    const auto m = manifest_of(a);
    ASSERT_EQ(m.at("runs").size(), 1u);
    EXPECT_EQ(m.at("runs")[0].at("status"), "ok");
}

TEST(Runner, MonteCarloIsDeterministicPerSeed) {
    const auto a = scratch("mc_a"), b = scratch("mc_b"), s = scratch("mc_s");
    auto c = quick_kramers();
    const auto ra = run_scenario(c, a);
    ASSERT_NE(ra.exit_code, exit_numerical) << ra.records[0].error;
    run_scenario(c, b);
    c.seed = 99;
    run_scenario(c, s);
    const auto ta = slurp(a / "kramers-compare" / "kramers.csv");
    EXPECT_EQ(ta, slurp(b / "kramers-compare" / "kramers.csv"));
    EXPECT_NE(ta, slurp(s / "kramers-compare" / "kramers.csv"));
}

TEST(Runner, ModesRunSideBySide) {
    const auto dir = scratch("multi");
    auto c = quick_decohere();
    c.modes = {"decohere", "coefficients"};
    c.spring_constant = 1.0;
    c.regime = "entangled";
    c.coefficients_t_final = 2.0;
    const auto res = run_scenario(c, dir);
    ASSERT_EQ(res.records.size(), 2u);
    EXPECT_EQ(res.records[0].mode, "decohere");
    EXPECT_EQ(res.records[1].mode, "coefficients");
    EXPECT_TRUE(fs::exists(dir / "coefficients" / "coefficients.csv"));
    EXPECT_TRUE(fs::exists(dir / "coefficients" / "plot.gp"));
    EXPECT_EQ(res.records[1].status, "ok");
}

TEST(Runner, EvolveWritesCheckpointsAndFinalDump) {
    const auto dir = scratch("evolve");
    auto c = parse_config_text(R"(
[run]
modes = evolve
[thermal]
kT = 1
[state]
q0 = 1.5
[grid]
nq = 96
np = 96
[evolve]
t_final = 0.5
dt = 0.01
[output]
checkpoint_every = 25
)");
    const auto res = run_scenario(c, dir);
    ASSERT_EQ(res.exit_code, exit_ok) << res.records[0].error;
    EXPECT_TRUE(fs::exists(dir / "evolve" / "checkpoints" / "frame_00001.dat"));
    EXPECT_TRUE(fs::exists(dir / "evolve" / "checkpoints" / "frame_00002.dat"));
    std::ifstream dump(dir / "evolve" / "final.dat");
    double t = -1.0;
    const auto w = read_grid_dump(dump, &t);
    EXPECT_NEAR(t, 0.5, 1e-12);
    EXPECT_NEAR(normalization(w), 1.0, 1e-6);
}

TEST(ExitCodes, FailedCheckNumericalAndIoErrors) {
    auto failing = quick_decohere();
    failing.decohere_t_final = 0.5;  // far outside the short-time window
    const auto rf = run_scenario(failing, scratch("fail"));
    EXPECT_EQ(rf.exit_code, exit_check_failed);
    EXPECT_EQ(rf.records[0].status, "failed");

    auto merged = quick_decohere();
    merged.d = 0.5;
    const auto rm = run_scenario(merged, scratch("merged"));
    EXPECT_EQ(rm.exit_code, exit_numerical);
    EXPECT_NE(rm.records[0].error.find("t ="), std::string::npos);

    const auto blocker = scratch("io") / "file";
    std::ofstream(blocker) << "x";
    EXPECT_EQ(run_mode(quick_decohere(), "decohere", blocker).exit_code, exit_io);

    auto bad = quick_decohere();
    bad.sigma = -1.0;
    EXPECT_THROW(run_scenario(bad, scratch("bad")), ConfigError);
}

TEST(ExitCodes, CommandLine) {
    const auto dir = scratch("cli");
    const std::string cfg = std::string(QBM_CONFIG_DIR) + "/empty.ini";
    EXPECT_EQ(run_cli("run " + cfg + " --out " + (dir / "ok").string()), exit_ok);
    EXPECT_EQ(run_cli("run " + cfg + " --set bath.bogus=1 --out " + (dir / "x").string()), exit_config);
    EXPECT_EQ(run_cli("run /nonexistent.ini --out " + (dir / "x").string()), exit_config);
    EXPECT_EQ(run_cli("run " + std::string(QBM_CONFIG_DIR) + "/decohere-thermal.ini --set state.d=0.5 --out " + (dir / "num").string()),
              exit_numerical);
    EXPECT_EQ(run_cli("run " + std::string(QBM_CONFIG_DIR) + "/decohere-thermal.ini --set decohere.t_final=0.5 --out " +
                      (dir / "chk").string()),
              exit_check_failed);
    EXPECT_EQ(run_cli("run " + cfg + " --out /proc/qbm-not-writable"), exit_io);
    EXPECT_EQ(run_cli("report " + dir.string()), exit_ok);
    EXPECT_EQ(run_cli("report " + (dir / "missing").string()), exit_config);
    EXPECT_EQ(run_cli("bogus"), exit_config);
}

TEST(Report, OneRowPerRunNamingViolations) {
    const auto root = scratch("report");
    auto ok = quick_decohere();
    for (int i = 0; i < 3; ++i) ASSERT_EQ(run_scenario(ok, root / ("pass" + std::to_string(i))).exit_code, exit_ok);
    auto failing = quick_decohere();
    failing.decohere_t_final = 0.5;
    run_scenario(failing, root / "zfail");
    const auto rows = collect_report(root);
    ASSERT_EQ(rows.size(), 4u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_TRUE(rows[i].pass);
        EXPECT_EQ(rows[i].run, "pass" + std::to_string(i));
    }
    EXPECT_FALSE(rows[3].pass);
    EXPECT_NE(rows[3].detail.find("violated: short_time_exponent"), std::string::npos);
    std::ostringstream os;
    print_report(rows, os);
    const auto text = os.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
    EXPECT_NE(text.find("FAIL    zfail"), std::string::npos);

    EXPECT_THROW(collect_report(scratch("nothing")), ConfigError);
    EXPECT_THROW(collect_report(root / "absent"), ConfigError);
}

TEST(Report, KramersRowCarriesZScores) {
    const auto root = scratch("report_mc");
    run_scenario(quick_kramers(), root / "mc");
    const auto rows = collect_report(root);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_NE(rows[0].detail.find("max|z|"), std::string::npos);
    EXPECT_NE(rows[0].detail.find("var_q="), std::string::npos);
}

TEST(MonteCarlo, LangevinRelaxesToClassicalEquilibrium) {
    const double m = 2.0, K = 0.5, g = 0.5, kT = 3.0;
    Eigen::Matrix2d cov0;
    cov0 << 0.1, 0.0, 0.0, 0.1;
    const auto r = langevin_monte_carlo(m, K, g, kT, Eigen::Vector2d(4.0, 0.0), cov0, {40.0}, 40000, 0.02, 7);
    EXPECT_NEAR(r.mean[0][0], 0.0, 4.0 * r.stderr_[0][0] + 0.01);
    EXPECT_NEAR(r.mean[0][2], kT / K, 4.0 * r.stderr_[0][2]);
    EXPECT_NEAR(r.mean[0][3], m * kT, 4.0 * r.stderr_[0][3]);
}
