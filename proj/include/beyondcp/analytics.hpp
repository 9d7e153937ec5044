#ifndef BEYONDCP_ANALYTICS_HPP
#define BEYONDCP_ANALYTICS_HPP

/**
 * @file analytics.hpp
 * @brief Closed-form SINR / sidelobe / covariance predictions and Monte-Carlo estimators.
 *
 * Powers are per frequency-domain sample. sigma2 is passed explicitly so that
 * callers using an SNR override and callers using the thermal noise_power()
 * share one code path.
 */

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "beyondcp/echo.hpp"
#include "beyondcp/errors.hpp"
#include "beyondcp/params.hpp"
#include "beyondcp/waveform.hpp"

namespace beyondcp {

struct SinrReport {
    double sinr_exact = 0.0;
    double sinr_asymptotic = 0.0;
    double numerator_W = 0.0;     // sum |alpha|^2
    double interference_W = 0.0;  // (2M-1)/M sum_beyond rho |alpha|^2
    double noise_W = 0.0;
};

inline SinrReport sinr_closed_form(const ScenarioConfig& cfg, std::span<const TargetLink> links,
                                   double sigma2) {
    double signal = 0.0;
    double leak = 0.0;  // sum_beyond rho |alpha|^2
    for (const auto& link : links) {
        signal += std::norm(link.alpha);
        if (link.beyond_cp) leak += link.rho * std::norm(link.alpha);
    }
    const double M = cfg.M;
    SinrReport r;
    r.numerator_W = signal;
    r.interference_W = (2.0 * M - 1.0) / M * leak;
    r.noise_W = sigma2;
    const double den = r.interference_W + sigma2;
    const double den_asym = 2.0 * leak + sigma2;
    r.sinr_exact = den > 0.0 ? signal / den : 0.0;
    r.sinr_asymptotic = den_asym > 0.0 ? signal / den_asym : 0.0;
    return r;
}

inline SinrReport sinr_closed_form(const ScenarioConfig& cfg, std::span<const TargetLink> links) {
    return sinr_closed_form(cfg, links, noise_power(cfg));
}

struct EmpiricalSinr {
    double sinr = 0.0;
    double signal_W = 0.0;
    double interference_W = 0.0;
    double noise_W = 0.0;
    int trials = 0;
};

/**
 * Averages ||Y_free||^2, ||Y_ISI - Y_ICI||^2 and ||Z||^2 over independent
 * symbol frames. Each trial draws fresh alpha phases when random_phase is set.
 */
template <class Rng>
EmpiricalSinr sinr_empirical(const ScenarioConfig& cfg, std::span<const TargetLink> links,
                             double sigma2, const Constellation& constellation, int trials,
                             Rng& rng, bool random_phase = true) {
    if (trials < 1) throw ConfigError("trials must be at least 1");
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    std::vector<TargetLink> trial_links(links.begin(), links.end());
    const double mn = static_cast<double>(cfg.N) * cfg.M;

    EmpiricalSinr out;
    out.trials = trials;
    for (int t = 0; t < trials; ++t) {
        if (random_phase)
            for (auto& link : trial_links) link.alpha = std::polar(std::abs(link.alpha), phase(rng));
        const SymbolFrame S = gen_frame(cfg, constellation, rng);
        out.signal_W += free_component(cfg, trial_links, S).squaredNorm() / mn;
        out.interference_W += interference_difference(cfg, trial_links, S).squaredNorm() / mn;
        out.noise_W += complex_gaussian(cfg.N, cfg.M, sigma2, rng).squaredNorm() / mn;
    }
    out.signal_W /= trials;
    out.interference_W /= trials;
    out.noise_W /= trials;
    const double den = out.interference_W + out.noise_W;
    out.sinr = den > 0.0 ? out.signal_W / den : 0.0;
    return out;
}

/// H_n = sum_{k=1}^{n} 1/k, summed smallest-first.
inline double harmonic_number(long n) {
    double h = 0.0;
    for (long k = n; k >= 1; --k) h += 1.0 / static_cast<double>(k);
    return h;
}

/// D_N(x) = sum_{n<N} exp(j 2 pi n x / N).
inline cplx dirichlet(int N, double x) {
    const double s_den = std::sin(std::numbers::pi * x / N);
    if (std::abs(s_den) < 1e-9) {
        cplx acc{};
        for (int n = 0; n < N; ++n) acc += std::polar(1.0, kTwoPi * n * x / N);
        return acc;
    }
    const double mag = std::sin(std::numbers::pi * x) / s_den;
    return std::polar(mag, std::numbers::pi * (N - 1) * x / N);
}

/// (1 - rho) alpha beyond the CP, alpha otherwise.
inline cplx effective_alpha(const TargetLink& link) {
    return link.beyond_cp ? (1.0 - link.rho) * link.alpha : link.alpha;
}

struct SidelobeReport {
    double sigma_sl_sq = 0.0;
    std::vector<double> pslr_per_target;
    double harmonic_H = 0.0;
    std::vector<cplx> effective_alphas;
};

inline double sidelobe_power(std::span<const TargetLink> links, double sigma2, double mu4) {
    double s = sigma2;
    for (const auto& link : links) {
        s += (mu4 - 1.0) * std::norm(effective_alpha(link));
        if (link.beyond_cp) s += link.rho * (2.0 - link.rho) * std::norm(link.alpha);
    }
    return s;
}

inline SidelobeReport sidelobe_level(const ScenarioConfig& cfg, std::span<const TargetLink> links,
                                     double sigma2, double mu4) {
    SidelobeReport r;
    const long mn = static_cast<long>(cfg.N) * cfg.M;
    r.sigma_sl_sq = sidelobe_power(links, sigma2, mu4);
    r.harmonic_H = harmonic_number(mn - static_cast<long>(links.size()));
    for (const auto& link : links) {
        const cplx a = effective_alpha(link);
        r.effective_alphas.push_back(a);
        r.pslr_per_target.push_back(r.harmonic_H * r.sigma_sl_sq /
                                    (static_cast<double>(mn) * std::norm(a) + r.sigma_sl_sq));
    }
    return r;
}

/// E|chi(l, nu)|^2 for real-valued delay bin l and centered Doppler bin nu.
inline double rdm_second_moment(const ScenarioConfig& cfg, std::span<const TargetLink> links,
                                double sigma2, double mu4, double l, double nu) {
    const double mn = static_cast<double>(cfg.N) * cfg.M;
    double p = sidelobe_power(links, sigma2, mu4);
    for (const auto& link : links) {
        const double l_t = link.tau_s * cfg.bandwidth();
        const double nu_t = link.fd_hz * cfg.M * cfg.symbol_duration();
        p += std::norm(effective_alpha(link)) / mn * std::norm(dirichlet(cfg.N, l - l_t)) *
             std::norm(dirichlet(cfg.M, nu - nu_t));
    }
    return p;
}

/**
 * R = A diag(|alpha~|^2) A^H + sigma_SL^2 I with a_q = c*(fd_q) (x) b(tau_q),
 * indexed i = n + m N. Kept factored; dense() refuses N M > 4096.
 */
struct CovarianceModel {
    CMatrix A;                     // NM x Q
    Eigen::VectorXd alpha_power;   // |alpha~_q|^2
    double sigma_sl_sq = 0.0;

    Eigen::Index dim() const { return A.rows(); }

    cplx entry(Eigen::Index i, Eigen::Index j) const {
        cplx v = (A.row(i).array() * alpha_power.transpose().array().cast<cplx>() *
                  A.row(j).conjugate().array())
                     .sum();
        if (i == j) v += sigma_sl_sq;
        return v;
    }

    CMatrix dense() const {
        if (dim() > 4096) throw DimensionMismatch("dense covariance limited to N*M <= 4096");
        CMatrix R = A * alpha_power.cast<cplx>().asDiagonal() * A.adjoint();
        R.diagonal().array() += sigma_sl_sq;
        return R;
    }
};

inline CVector channel_steering(const TargetLink& link, const ScenarioConfig& cfg) {
    const CVector b = delay_steering(link.tau_s, cfg);
    const CVector c = doppler_steering(link.fd_hz, cfg);
    CVector a(static_cast<Eigen::Index>(cfg.N) * cfg.M);
    for (int m = 0; m < cfg.M; ++m) a.segment(static_cast<Eigen::Index>(m) * cfg.N, cfg.N) = std::conj(c(m)) * b;
    return a;
}

inline CovarianceModel covariance_model(const ScenarioConfig& cfg,
                                        std::span<const TargetLink> links, double sigma2,
                                        double mu4) {
    CovarianceModel model;
    const auto q = static_cast<Eigen::Index>(links.size());
    model.A.resize(static_cast<Eigen::Index>(cfg.N) * cfg.M, q);
    model.alpha_power.resize(q);
    for (Eigen::Index k = 0; k < q; ++k) {
        model.A.col(k) = channel_steering(links[k], cfg);
        model.alpha_power(k) = std::norm(effective_alpha(links[k]));
    }
    model.sigma_sl_sq = sidelobe_power(links, sigma2, mu4);
    return model;
}

}  // namespace beyondcp

#endif  // BEYONDCP_ANALYTICS_HPP
