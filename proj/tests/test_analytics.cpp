#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "beyondcp/analytics.hpp"
#include "beyondcp/rdm.hpp"

using namespace beyondcp;

namespace {

std::vector<TargetLink> single_800m(const ScenarioConfig& cfg, double sigma2) {
    std::vector<TargetLink> links{derive_link({800.0, 0.0, 1.0}, cfg)};
    apply_snr_override(links, sigma2, 0.0);
    return links;
}

}  // namespace

TEST(SinrClosedForm, GoldenSingleTarget800m) {
    const ScenarioConfig cfg;
    const auto r = sinr_closed_form(cfg, single_800m(cfg, 1.0), 1.0);
    EXPECT_NEAR(r.sinr_exact, 0.469106110061272, 1e-12);
    EXPECT_NEAR(to_dB(r.sinr_asymptotic), -3.30541, 1e-4);
    EXPECT_LT(std::abs(to_dB(r.sinr_exact) - to_dB(r.sinr_asymptotic)), 0.1);
    EXPECT_DOUBLE_EQ(r.sinr_exact, r.numerator_W / (r.interference_W + r.noise_W));
}

TEST(SinrClosedForm, NoBeyondCpIsPureSnr) {
    const ScenarioConfig cfg;
    const std::vector<TargetTruth> t{{50.0, 0.0, 1.0}, {80.0, 5.0, 3.0}};
    const auto links = derive_links(t, cfg);
    const double sigma2 = noise_power(cfg);
    const auto r = sinr_closed_form(cfg, links, sigma2);
    EXPECT_EQ(r.interference_W, 0.0);
    EXPECT_NEAR(r.sinr_exact / ((std::norm(links[0].alpha) + std::norm(links[1].alpha)) / sigma2), 1.0,
                1e-12);
}

TEST(SinrClosedForm, NonIncreasingInRho) {
    ScenarioConfig cfg;
    const double sigma2 = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int ncp = 128; ncp >= 0; --ncp) {
        cfg.N_cp = ncp;
        const auto links = single_800m(cfg, sigma2);
        const double s = sinr_closed_form(cfg, links, sigma2).sinr_exact;
        EXPECT_LE(s, prev + 1e-15);
        prev = s;
    }
}

TEST(SinrClosedForm, DifferenceBetweenCpLengthsIsDeterministic) {
    ScenarioConfig a, b;
    b.N_cp = 45;
    const auto la = single_800m(a, 1.0);
    const auto lb = single_800m(b, 1.0);
    const double expect = to_dB(1.0 / ((2.0 * 64 - 1) / 64 * 37.0 / 128 + 1.0)) -
                          to_dB(1.0 / ((2.0 * 64 - 1) / 64 * 73.0 / 128 + 1.0));
    EXPECT_NEAR(to_dB(sinr_closed_form(b, lb, 1.0).sinr_exact) -
                    to_dB(sinr_closed_form(a, la, 1.0).sinr_exact),
                expect, 1e-12);
}

TEST(SinrEmpirical, ZeroTargetsGivesZero) {
    const ScenarioConfig cfg;
    std::mt19937_64 rng(1);
    EXPECT_EQ(sinr_empirical(cfg, {}, 1.0, make_constellation("QPSK"), 3, rng).sinr, 0.0);
}

TEST(SinrEmpirical, MatchesClosedFormStandardCp) {
    const ScenarioConfig cfg;
    const double sigma2 = noise_power(cfg);
    const auto links = single_800m(cfg, sigma2);
    std::mt19937_64 rng(2);
    const auto emp = sinr_empirical(cfg, links, sigma2, make_constellation("1024QAM"), 300, rng);
    EXPECT_NEAR(to_dB(emp.sinr), to_dB(sinr_closed_form(cfg, links, sigma2).sinr_exact), 0.2);
}

TEST(SinrEmpirical, SufficientCpIsPureSnr) {
    const auto cfg = ScenarioConfig::sufficient_cp();
    const double sigma2 = noise_power(cfg);
    const auto links = single_800m(cfg, sigma2);
    std::mt19937_64 rng(3);
    const auto emp = sinr_empirical(cfg, links, sigma2, make_constellation("1024QAM"), 100, rng);
    EXPECT_NEAR(to_dB(emp.sinr), 0.0, 0.1);
    EXPECT_EQ(emp.interference_W, 0.0);
}

TEST(Harmonic, DirectSumGolden) {
    EXPECT_NEAR(harmonic_number(8190), 9.587945890567328, 1e-12);
    EXPECT_DOUBLE_EQ(harmonic_number(1), 1.0);
    EXPECT_DOUBLE_EQ(harmonic_number(0), 0.0);
}

TEST(Dirichlet, SingularityPeriodicityAndBound) {
    EXPECT_NEAR(std::abs(dirichlet(128, 0.0) - cplx(128.0)), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(dirichlet(64, 128.0) - cplx(64.0)), 0.0, 1e-9);
    for (double x : {0.3, 1.7, 5.5, 31.2}) {
        EXPECT_NEAR(std::abs(dirichlet(16, x) - dirichlet(16, x + 16.0)), 0.0, 1e-9);
        EXPECT_LT(std::abs(dirichlet(16, x)), 16.0);
        cplx direct{};
        for (int n = 0; n < 16; ++n) direct += std::polar(1.0, kTwoPi * n * x / 16);
        EXPECT_NEAR(std::abs(dirichlet(16, x) - direct), 0.0, 1e-10);
    }
    EXPECT_NEAR(std::abs(dirichlet(16, 3.0)), 0.0, 1e-12);
}

TEST(Sidelobe, QpskWithinCpNoiselessVanishes) {
    const ScenarioConfig cfg;
    const std::vector<TargetTruth> t{{40.0, 0.0, 1.0}};
    const auto r = sidelobe_level(cfg, derive_links(t, cfg), 0.0, 1.0);
    EXPECT_EQ(r.sigma_sl_sq, 0.0);
}

TEST(Sidelobe, EffectiveAlphaAndFloorBound) {
    const ScenarioConfig cfg;
    const double sigma2 = noise_power(cfg);
    const auto links = single_800m(cfg, sigma2);
    const auto r = sidelobe_level(cfg, links, sigma2, 1.4);
    EXPECT_GE(r.sigma_sl_sq, sigma2);
    EXPECT_NEAR(std::abs(r.effective_alphas[0] - (55.0 / 128.0) * links[0].alpha), 0.0,
                1e-12 * std::abs(links[0].alpha));
    EXPECT_DOUBLE_EQ(r.harmonic_H, harmonic_number(8191));
}

TEST(Sidelobe, ContinuityAtCpBoundary) {
    ScenarioConfig cfg;
    cfg.N_cp = 82;
    const std::vector<TargetLink> at{make_link(82.0 / cfg.bandwidth(), 0.0, cplx(1.0), cfg)};
    cfg.N_cp = 81;
    const std::vector<TargetLink> past{make_link(82.0 / cfg.bandwidth(), 0.0, cplx(1.0), cfg)};
    const double a = sidelobe_level(cfg, at, 0.1, 1.32).sigma_sl_sq;
    const double b = sidelobe_level(cfg, past, 0.1, 1.32).sigma_sl_sq;
    EXPECT_NEAR(a, b, 0.03);
}

TEST(Sidelobe, PslrNonDecreasingInRho) {
    ScenarioConfig cfg;
    double prev = 0.0;
    for (int ncp = 128; ncp >= 0; --ncp) {
        cfg.N_cp = ncp;
        const auto links = single_800m(cfg, 1.0);
        const double g = sidelobe_level(cfg, links, 1.0, mu4(make_constellation("1024QAM"))).pslr_per_target[0];
        EXPECT_GE(g, prev - 1e-15);
        prev = g;
    }
}

TEST(RdmSecondMoment, IntegerGridBranches) {
    const ScenarioConfig cfg;
    const double sigma2 = 1.0;
    std::vector<TargetTruth> t{snap_to_grid({600.0, 20.0, 1.0}, cfg)};
    auto links = derive_links(t, cfg);
    apply_snr_override(links, sigma2, 10.0);
    const double m4 = 1.32;
    const auto sl = sidelobe_level(cfg, links, sigma2, m4);
    const auto [l, nu] = grid_bin(links[0].tau_s, links[0].fd_hz, cfg);
    const double peak = rdm_second_moment(cfg, links, sigma2, m4, l, nu);
    EXPECT_NEAR(peak / (8192.0 * std::norm(sl.effective_alphas[0]) + sl.sigma_sl_sq), 1.0, 1e-9);
    EXPECT_NEAR(rdm_second_moment(cfg, links, sigma2, m4, l + 3, nu - 1) / sl.sigma_sl_sq, 1.0, 1e-9);
}

TEST(Covariance, ZeroTargetsIsScaledIdentity) {
    ScenarioConfig cfg;
    cfg.N = 8;
    cfg.M = 4;
    const auto model = covariance_model(cfg, {}, 0.5, 1.32);
    EXPECT_LT((model.dense() - 0.5 * CMatrix::Identity(32, 32)).norm(), 1e-15);
}

TEST(Covariance, DiagonalAndHermitianPsd) {
    ScenarioConfig cfg;
    cfg.N = 8;
    cfg.M = 4;
    cfg.N_cp = 2;
    const std::vector<TargetLink> links{make_link(1.0 / cfg.bandwidth(), 1e3, cplx(0.8, 0.1), cfg),
                                        make_link(5.0 / cfg.bandwidth(), -2e3, cplx(0.3), cfg)};
    const auto model = covariance_model(cfg, links, 0.2, 1.32);
    const CMatrix R = model.dense();
    const double diag = std::norm(effective_alpha(links[0])) + std::norm(effective_alpha(links[1])) +
                        model.sigma_sl_sq;
    for (Eigen::Index i = 0; i < R.rows(); ++i) EXPECT_NEAR(R(i, i).real(), diag, 1e-12);
    EXPECT_LT((R - R.adjoint()).norm(), 1e-12);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(R);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    EXPECT_NEAR(std::abs(model.entry(3, 17) - R(3, 17)), 0.0, 1e-12);
}

TEST(Covariance, DenseRefusesLargeGrids) {
    const ScenarioConfig cfg;
    const std::vector<TargetLink> links{make_link(1e-6, 0.0, cplx(1.0), cfg)};
    EXPECT_THROW(covariance_model(cfg, links, 1.0, 1.0).dense(), DimensionMismatch);
}
