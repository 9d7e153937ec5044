#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "beyondcp/experiment.hpp"

using namespace beyondcp;

namespace {

Experiment small_cp_sweep() {
    Experiment e;
    e.scenario.snr_override_dB = 0.0;
    e.targets = {{800.0, 0.0, 1.0}};
    e.snap_to_grid = true;
    e.axis = SweepAxis::CpLength;
    e.values = {0, 60, 100};
    e.algorithms = {"dft"};
    e.trials = 12;
    e.seed = 17;
    return e;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BEYONDCP_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Rmse, IdenticalIsZero) {
    const ScenarioConfig cfg;
    const std::vector<RangeVelocity> t{{300.0, 10.0}, {700.0, -50.0}};
    const auto r = rmse(t, t, cfg);
    EXPECT_EQ(r.range_rmse(), 0.0);
    EXPECT_EQ(r.velocity_rmse(), 0.0);
    EXPECT_EQ(r.count, 2);
}

TEST(Rmse, OneRangeBinOffset) {
    const ScenarioConfig cfg;
    const double bin = cfg.range_bin_m();
    EXPECT_NEAR(bin, 299792458.0 / (2.0 * 15.36e6), 1e-9);
    const std::vector<RangeVelocity> t{{400.0, 0.0}};
    const std::vector<RangeVelocity> e{{400.0 + bin, 0.0}};
    EXPECT_NEAR(rmse(e, t, cfg).range_rmse(), bin, 1e-12);
}

TEST(Rmse, MissIsPenalizedAtHalfSpan) {
    const ScenarioConfig cfg;
    const std::vector<RangeVelocity> t{{400.0, 20.0}};
    const auto r = rmse({}, t, cfg);
    EXPECT_NEAR(r.range_rmse(), unambiguous_ranges(cfg).max_range_m / 2.0, 1e-9);
    EXPECT_NEAR(r.velocity_rmse(), max_velocity_mps(cfg), 1e-9);
    EXPECT_THROW(rmse(t, {}, cfg), ConfigError);
}

TEST(Rmse, GreedyMatchesNearestAndIgnoresExtras) {
    const ScenarioConfig cfg;
    const std::vector<RangeVelocity> t{{200.0, 0.0}, {600.0, 0.0}};
    const std::vector<RangeVelocity> e{{601.0, 0.0}, {1000.0, 100.0}, {198.0, 0.0}};
    const auto r = rmse(e, t, cfg);
    EXPECT_EQ(r.count, 2);
    EXPECT_NEAR(r.range_rmse(), std::sqrt((1.0 + 4.0) / 2.0), 1e-12);
}

TEST(ExperimentJson, RoundTripKeepsHash) {
    Experiment e = small_cp_sweep();
    e.target_draw = TargetDraw{};
    const Experiment back = experiment_from_json(to_json(e));
    EXPECT_EQ(experiment_hash(back), experiment_hash(e));
    EXPECT_EQ(back.values, e.values);
    EXPECT_TRUE(back.target_draw.has_value());
}

TEST(ExperimentJson, RejectsUnknownKeys) {
    Json j = to_json(small_cp_sweep());
    j["trails"] = 5;
    EXPECT_THROW(experiment_from_json(j), ConfigError);
    Json k = to_json(small_cp_sweep());
    k["scenario"]["Ncp"] = 5;
    EXPECT_THROW(experiment_from_json(k), ConfigError);
    Json w = to_json(small_cp_sweep());
    w["trials"] = "many";
    EXPECT_THROW(experiment_from_json(w), ConfigError);
}

TEST(ExperimentJson, ValidationCatchesBadFields) {
    Experiment e = small_cp_sweep();
    EXPECT_TRUE(validate_experiment(e).empty());
    e.values = {0, 10, 10};
    EXPECT_FALSE(validate_experiment(e).empty());
    e = small_cp_sweep();
    e.trials = 0;
    EXPECT_FALSE(validate_experiment(e).empty());
    e = small_cp_sweep();
    e.algorithms = {"music"};
    EXPECT_FALSE(validate_experiment(e).empty());
    e = small_cp_sweep();
    e.values = {0, 200};
    EXPECT_THROW(require_valid(e), ConfigError);
}

TEST(ExperimentJson, HashTracksContent) {
    Experiment a = small_cp_sweep(), b = small_cp_sweep();
    EXPECT_EQ(experiment_hash(a), experiment_hash(b));
    b.seed = 18;
    EXPECT_NE(experiment_hash(a), experiment_hash(b));
    b = a;
    b.threads = 3;
    EXPECT_EQ(experiment_hash(a), experiment_hash(b));
}

TEST(ExperimentJson, MissingFileNamesPath) {
    try {
        load_experiment("/nonexistent/cfg.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/cfg.json"), std::string::npos);
    }
}

TEST(Rows, MixedHashesAreRejected) {
    std::vector<CpSweepRow> all;
    append_rows(all, std::vector<CpSweepRow>{{0, 0, 0, 0, 0, 0, "aaaa"}});
    EXPECT_THROW(append_rows(all, std::vector<CpSweepRow>{{1, 0, 0, 0, 0, 0, "bbbb"}}), ConfigError);
    EXPECT_NO_THROW(append_rows(all, std::vector<CpSweepRow>{{1, 0, 0, 0, 0, 0, "aaaa"}}));
}

TEST(Parallel, SeedsAreIndependentOfThreadCount) {
    Experiment e = small_cp_sweep();
    e.threads = 1;
    std::ostringstream a, b;
    write_cp_sweep_csv(a, sweep_cp_length(e));
    e.threads = 3;
    write_cp_sweep_csv(b, sweep_cp_length(e));
    EXPECT_EQ(a.str(), b.str());
}

TEST(Parallel, ErrorsPropagate) {
    EXPECT_THROW(parallel_for(
                     8, [](int i) { if (i == 5) throw NumericalError("x"); }, 3),
                 NumericalError);
}

TEST(CpSweep, ColumnsAndFlatRegion) {
    const auto rows = sweep_cp_length(small_cp_sweep());
    ASSERT_EQ(rows.size(), 3u);
    std::ostringstream os;
    write_cp_sweep_csv(os, rows);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
              "n_cp,sinr_theory_db,sinr_asymp_db,sinr_emp_db,pslr_theory_db,pslr_emp_db,config_hash");
    EXPECT_NEAR(rows[2].sinr_theory_db, 0.0, 1e-9);  // tap 82 inside a 100-sample CP
    EXPECT_LT(rows[0].sinr_theory_db, rows[1].sinr_theory_db);
    for (const auto& r : rows) EXPECT_NEAR(r.sinr_emp_db, r.sinr_theory_db, 0.6);
}

TEST(IterationSweep, IterationZeroIsUncancelledBaseline) {
    Experiment e;
    e.scenario.snr_override_dB = 0.0;
    e.targets = {{600.0, 20.0, 1.0}, {800.0, -30.0, 1.0}};
    e.snap_to_grid = true;
    e.axis = SweepAxis::Iteration;
    e.values = {0, 1, 2, 3};
    e.algorithms = {"sic_dft", "sic_esprit"};
    e.trials = 2;
    e.seed = 3;
    e.sic.k_max = 3;
    const auto res = sweep_iterations(e);
    ASSERT_EQ(res.rows.size(), 4u * 3u);
    EXPECT_DOUBLE_EQ(res.rows[0].sinr_dB, res.rows[1].sinr_dB);
    EXPECT_EQ(res.rows[2].algorithm, "sufficient_cp");
    EXPECT_GT(res.rows[9].sinr_dB, res.rows[0].sinr_dB + 3.0);
    EXPECT_EQ(res.final_sinr_sic_dft.size(), 2u);
    std::ostringstream os;
    write_iteration_csv(os, res.rows);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "iter,algo,sinr_db,pslr_db,config_hash");
}

TEST(SnrSweep, ReferencesAddedAndHeader) {
    Experiment e;
    e.targets.clear();
    e.target_draw = TargetDraw{};
    e.axis = SweepAxis::Snr;
    e.values = {10.0};
    e.algorithms = {"dft", "sic_dft"};
    e.trials = 2;
    const auto rows = sweep_snr_rmse(e);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[2].algorithm, "dft_sufficient_cp");
    std::ostringstream os;
    write_snr_csv(os, rows);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "snr_db,algo,range_rmse_m,vel_rmse_mps,config_hash");
}

TEST(Cli, ExitCodesAndDeterministicOutput) {
    const auto dir = std::filesystem::temp_directory_path() / "beyondcp_cli_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto cfg = dir / "exp.json";
    std::ofstream(cfg) << to_json(small_cp_sweep()).dump(1);

    EXPECT_EQ(run_cli("validate --config " + cfg.string()), 0);
    EXPECT_EQ(run_cli("validate --config " + (dir / "missing.json").string()), 1);
    EXPECT_EQ(run_cli("validate --config " + cfg.string() + " --no-such-flag"), 1);

    for (const char* sub : {"a", "b"})
        ASSERT_EQ(run_cli("sweep --config " + cfg.string() + " --trials 4 --out " + (dir / sub).string()), 0);
    const std::string a = read_file(dir / "a" / "cp_length_sweep.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, read_file(dir / "b" / "cp_length_sweep.csv"));
    std::filesystem::remove_all(dir);
}
