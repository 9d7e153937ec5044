#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "beyondcp/echo.hpp"
#include "beyondcp/esprit.hpp"
#include "beyondcp/sic.hpp"

using namespace beyondcp;

namespace {

struct Scene {
    ScenarioConfig cfg;
    SymbolFrame S;
    EchoComponents ec;
};

Scene make_scene(std::vector<TargetTruth> targets, double snr_dB, bool noisy, std::uint64_t seed,
                 const char* constellation = "1024QAM", bool on_grid = false) {
    Scene s;
    if (on_grid)
        for (auto& t : targets) t = snap_to_grid(t, s.cfg);
    std::mt19937_64 rng(seed);
    s.S = gen_frame(s.cfg, make_constellation(constellation), rng);
    std::uniform_real_distribution<double> ph(0.0, kTwoPi);
    std::vector<double> phases;
    for (std::size_t q = 0; q < targets.size(); ++q) phases.push_back(ph(rng));
    auto links = derive_links(targets, s.cfg, phases);
    apply_snr_override(links, 1.0, snr_dB);
    s.ec = synth_components(s.cfg, links, s.S);
    if (noisy) add_noise(s.ec, 1.0, rng);
    return s;
}

double truth_sinr_dB(const EchoComponents& ec, const CMatrix& Yk) {
    return to_dB(ec.Y_free.squaredNorm() / (Yk - ec.Y_free).squaredNorm());
}

}  // namespace

TEST(Sic, ZeroObservationGivesEmptyResult) {
    const ScenarioConfig cfg;
    std::mt19937_64 rng(1);
    const auto S = gen_frame(cfg, make_constellation("QPSK"), rng);
    const auto r = sic_dft(CMatrix::Zero(cfg.N, cfg.M), S, cfg);
    EXPECT_TRUE(r.estimates.empty());
    EXPECT_EQ(r.iterations, 0);
    EXPECT_EQ(r.trace.size(), 1u);
    EXPECT_EQ(r.Y_free.norm(), 0.0);
}

TEST(Sic, WithinCpTargetConvergesAfterOneIteration) {
    auto s = make_scene({{50.0, 30.0, 1.0}}, 10.0, false, 2, "QPSK", true);
    const auto r = sic_dft(s.ec.Y, s.S, s.cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 1);
    ASSERT_EQ(r.trace.size(), 2u);
    EXPECT_EQ(r.trace[0].energy_delta, 0.0);
    EXPECT_LT(r.trace[1].energy_delta, 1e-12);
    EXPECT_LT((r.Y_free - s.ec.Y).norm() / s.ec.Y.norm(), 1e-12);
}

TEST(Sic, KmaxZeroIsPlainReceiver) {
    auto s = make_scene({{600.0, 20.0, 1.0}, {800.0, -30.0, 1.0}}, 0.0, true, 3);
    SicParams p;
    p.k_max = 0;
    const auto r = sic_dft(s.ec.Y, s.S, s.cfg, p);
    EXPECT_EQ(r.iterations, 0);
    EXPECT_FALSE(r.estimates.empty());
    EXPECT_EQ((r.Y_free - s.ec.Y).norm(), 0.0);
}

TEST(Sic, ObserverSeesEveryIteration) {
    auto s = make_scene({{600.0, 20.0, 1.0}, {800.0, -30.0, 1.0}}, 0.0, true, 4);
    std::vector<int> seen;
    const auto r = sic_dft(s.ec.Y, s.S, s.cfg, SicParams{}, CfarParams{},
                           [&](int k, const CMatrix&) { seen.push_back(k); });
    ASSERT_EQ(static_cast<int>(seen.size()), r.iterations + 1);
    for (int k = 0; k <= r.iterations; ++k) EXPECT_EQ(seen[k], k);
    EXPECT_EQ(r.trace.size(), seen.size());
    EXPECT_LE(r.iterations, SicParams{}.k_max);
}

TEST(Sic, RejectsNegativeKmax) {
    auto s = make_scene({{50.0, 0.0, 1.0}}, 0.0, false, 5);
    SicParams p;
    p.k_max = -1;
    EXPECT_THROW(sic_dft(s.ec.Y, s.S, s.cfg, p), ConfigError);
}

TEST(Sic, NumericalFailureKeepsPreviousEstimates) {
    auto s = make_scene({{800.0, 0.0, 1.0}}, 20.0, false, 6, "QPSK");
    int calls = 0;
    auto estimator = [&](const CMatrix&) -> std::vector<DelayDoppler> {
        if (calls++ == 1) throw NumericalError("synthetic failure");
        return {{82.0 / s.cfg.bandwidth(), 0.0}};
    };
    const auto r = run_sic(s.ec.Y, s.S, s.cfg, SicParams{}, estimator);
    EXPECT_EQ(r.iterations, 1);
    ASSERT_EQ(r.estimates.size(), 1u);
    EXPECT_NE(r.warning.find("synthetic failure"), std::string::npos);
}

// With the exact delay and Doppler given, the first pass sees a shrunken
// amplitude; de-biasing restores it and one reconstruction removes almost
// all interference.
TEST(Sic, OracleDelaysRemoveInterference) {
    auto s = make_scene({{600.0, 20.0, 1.0}, {800.0, -30.0, 1.0}}, 20.0, false, 7, "QPSK");
    std::vector<DelayDoppler> truth;
    for (const auto& l : s.ec.links) truth.push_back({l.tau_s, l.fd_hz});
    const auto r = run_sic(s.ec.Y, s.S, s.cfg, SicParams{}, [&](const CMatrix&) { return truth; });
    ASSERT_EQ(r.estimates.size(), 2u);
    for (std::size_t q = 0; q < 2; ++q)
        EXPECT_LT(std::abs(r.estimates[q].alpha / s.ec.links[q].alpha - 1.0), 0.03);
    EXPECT_GT(truth_sinr_dB(s.ec, r.Y_free) - truth_sinr_dB(s.ec, s.ec.Y), 20.0);
}

// Bin-resolution estimates need on-grid delays: at 600 m the true delay sits
// half a tap off the grid and the steering mismatch alone leaves about 60% of
// the interference in place (see the off-grid test below).
TEST(Sic, DftGainAboveFourDbOnTwoBeyondCpTargets) {
    double gain = 0.0;
    const int trials = 5;
    for (int t = 0; t < trials; ++t) {
        auto s = make_scene({{600.0, 20.0, 1.0}, {800.0, -30.0, 1.0}}, 0.0, true, 100 + t, "1024QAM", true);
        const auto r = sic_dft(s.ec.Y, s.S, s.cfg);
        gain += truth_sinr_dB(s.ec, r.Y_free) - truth_sinr_dB(s.ec, s.ec.Y);
    }
    EXPECT_GT(gain / trials, 4.0);
}

TEST(Sic, OffGridDelayLimitsDftCancellation) {
    double gain = 0.0;
    const int trials = 5;
    for (int t = 0; t < trials; ++t) {
        auto s = make_scene({{600.0, 20.0, 1.0}, {800.0, -30.0, 1.0}}, 0.0, true, 100 + t);
        const auto r = sic_dft(s.ec.Y, s.S, s.cfg);
        gain += truth_sinr_dB(s.ec, r.Y_free) - truth_sinr_dB(s.ec, s.ec.Y);
    }
    EXPECT_GT(gain / trials, 0.5);
    EXPECT_LT(gain / trials, 4.0);
}

TEST(Sic, EspritGainAboveFourDbOnTwoBeyondCpTargets) {
    double gain = 0.0;
    const int trials = 3;
    for (int t = 0; t < trials; ++t) {
        auto s = make_scene({{600.0, 20.0, 1.0}, {800.0, -30.0, 1.0}}, 0.0, true, 200 + t);
        const auto r = sic_esprit(s.ec.Y, s.S, s.cfg);
        gain += truth_sinr_dB(s.ec, r.Y_free) - truth_sinr_dB(s.ec, s.ec.Y);
    }
    EXPECT_GT(gain / trials, 4.0);
}

TEST(Sic, ProxyTraceImproves) {
    auto s = make_scene({{600.0, 20.0, 1.0}, {800.0, -30.0, 1.0}}, 0.0, true, 8);
    const auto r = sic_esprit(s.ec.Y, s.S, s.cfg);
    ASSERT_GE(r.trace.size(), 2u);
    EXPECT_GT(r.trace.back().sinr_dB, r.trace.front().sinr_dB);
}
