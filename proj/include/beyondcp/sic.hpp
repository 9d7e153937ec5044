#ifndef BEYONDCP_SIC_HPP
#define BEYONDCP_SIC_HPP

/**
 * @file sic.hpp
 * @brief Successive interference cancellation loop shared by SIC-DFT and SIC-ESPRIT.
 *
 * Each iteration estimates (tau, fd) on the current interference-reduced
 * observation Y^k, fits alpha by least squares, rebuilds the ISI/ICI of the
 * beyond-CP estimates and forms Y^{k+1} = Y - Y_ISI_hat + Y_ICI_hat. The loop
 * stops once the relative energy change drops below delta_th or after k_max
 * updates; the returned estimates are taken from the final observation.
 */

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "beyondcp/echo.hpp"
#include "beyondcp/errors.hpp"
#include "beyondcp/params.hpp"
#include "beyondcp/rdm.hpp"

namespace beyondcp {

struct SicParams {
    double delta_th = 1e-3;
    int k_max = 10;
    // Undo the (1 - rho) shrinkage of the LS amplitude before reconstruction.
    bool debias = true;
};

struct TargetEstimate {
    double tau_s = 0.0;
    double fd_hz = 0.0;
    cplx alpha{};      // physical amplitude used for reconstruction
    cplx alpha_raw{};  // LS fit on the current observation
    int l = 0;
    double rho = 0.0;
    bool beyond_cp = false;

    TargetLink link(const ScenarioConfig& cfg) const { return make_link(tau_s, fd_hz, alpha, cfg); }
    double range_m() const { return range_from_delay(tau_s); }
};

struct DelayDoppler {
    double tau_s = 0.0;
    double fd_hz = 0.0;
};

struct SicTraceRow {
    int iteration = 0;
    double sinr_dB = 0.0;  // estimate-based proxy, no truth
    double pslr_dB = 0.0;
    double energy_delta = 0.0;  // change from Y^{k-1}; 0 on the first row
    int estimates = 0;
};

struct SicResult {
    std::vector<TargetEstimate> estimates;
    std::vector<SicTraceRow> trace;
    CMatrix Y_free;  // last interference-reduced observation
    int iterations = 0;
    bool converged = false;
    std::string warning;
};

namespace detail {

/// Previous estimate closest to (tau, fd) within one delay and one Doppler bin.
inline const TargetEstimate* match_previous(const std::vector<TargetEstimate>& prev, double tau,
                                            double fd, const ScenarioConfig& cfg) {
    const TargetEstimate* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& p : prev) {
        const double dl = std::abs(p.tau_s - tau) * cfg.bandwidth();
        const double dn = std::abs(p.fd_hz - fd) / cfg.doppler_bin_hz();
        if (dl > 1.0 || dn > 1.0) continue;
        const double d = dl * dl + dn * dn;
        if (d < best_d) {
            best_d = d;
            best = &p;
        }
    }
    return best;
}

inline std::vector<TargetEstimate> fit_amplitudes(const CMatrix& Yk, const SymbolFrame& S,
                                                  const ScenarioConfig& cfg,
                                                  const std::vector<DelayDoppler>& params,
                                                  const std::vector<TargetEstimate>& prev,
                                                  bool debias) {
    std::vector<TargetEstimate> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        TargetEstimate e;
        e.tau_s = p.tau_s;
        e.fd_hz = p.fd_hz;
        const TargetLink geom = make_link(p.tau_s, p.fd_hz, cplx{}, cfg);
        e.l = geom.l;
        e.rho = geom.rho;
        e.beyond_cp = geom.beyond_cp;
        e.alpha_raw = estimate_alpha(Yk, S, p.tau_s, p.fd_hz, cfg);
        e.alpha = e.alpha_raw;
        if (debias) {
            // Y^k still carries -rho alpha from the true ICI and +rho_prev alpha_prev
            // from the previously added-back ICI estimate.
            cplx added{};
            if (const auto* q = match_previous(prev, p.tau_s, p.fd_hz, cfg); q && q->beyond_cp)
                added = q->rho * q->alpha;
            e.alpha = (e.alpha_raw - added) / (1.0 - e.rho);
        }
        out.push_back(e);
    }
    return out;
}

inline SicTraceRow trace_row(int k, const CMatrix& Yk, const SymbolFrame& S,
                             const ScenarioConfig& cfg, const std::vector<TargetEstimate>& est,
                             double energy_delta) {
    SicTraceRow row;
    row.iteration = k;
    row.energy_delta = energy_delta;
    row.estimates = static_cast<int>(est.size());
    if (est.empty()) return row;

    const double mn = static_cast<double>(cfg.N) * cfg.M;
    double signal = 0.0;
    for (const auto& e : est) signal += std::norm(e.alpha_raw);
    const double residual = std::max(Yk.squaredNorm() / mn - signal, 1e-300);
    row.sinr_dB = to_dB(std::max(signal, 1e-300) / residual);

    const RangeDopplerMap rdm = compute_rdm(Yk, S, cfg);
    std::vector<std::pair<int, int>> bins;
    double weakest = std::numeric_limits<double>::infinity();
    for (const auto& e : est) {
        bins.push_back(grid_bin(e.tau_s, e.fd_hz, cfg));
        weakest = std::min(weakest, rdm.power(bins.back().first, bins.back().second));
    }
    row.pslr_dB = to_dB(std::max(peak_sidelobe_power(rdm, bins), 1e-300) / std::max(weakest, 1e-300));
    return row;
}

}  // namespace detail

/**
 * Generic loop. estimator(Y^k) returns (tau, fd) pairs; observer(k, Y^k) sees
 * every intermediate observation, k = 0 .. iterations. A NumericalError from
 * the estimator aborts the loop and keeps the previous estimates.
 */
template <class Estimator, class Observer>
SicResult run_sic(const CMatrix& Y, const SymbolFrame& S, const ScenarioConfig& cfg,
                  const SicParams& params, Estimator&& estimator, Observer&& observer) {
    if (params.k_max < 0) throw ConfigError("k_max must be non-negative");
    check_frame(cfg, S);
    if (Y.rows() != S.rows() || Y.cols() != S.cols())
        throw DimensionMismatch("observation and symbol frame sizes differ");

    SicResult res;
    CMatrix Yk = Y;
    std::vector<TargetEstimate> prev;
    double delta = 0.0;
    bool stop = false;
    for (int k = 0;; ++k) {
        observer(k, static_cast<const CMatrix&>(Yk));
        std::vector<TargetEstimate> cur;
        try {
            cur = detail::fit_amplitudes(Yk, S, cfg, estimator(static_cast<const CMatrix&>(Yk)), prev,
                                         params.debias);
        } catch (const NumericalError& e) {
            res.warning = std::string("iteration ") + std::to_string(k) + " aborted: " + e.what();
            res.estimates = prev;
            res.iterations = k;
            res.Y_free = Yk;
            return res;
        }
        res.trace.push_back(detail::trace_row(k, Yk, S, cfg, cur, delta));
        res.iterations = k;
        if (k == 0 && cur.empty()) {
            res.Y_free = Yk;
            return res;
        }
        if (stop || k >= params.k_max) {
            res.converged = stop;
            res.estimates = std::move(cur);
            break;
        }

        std::vector<TargetLink> links;
        links.reserve(cur.size());
        for (const auto& e : cur) links.push_back(e.link(cfg));
        const InterferenceTerms rec = reconstruct_interference(cfg, S, links);
        CMatrix next = Y - rec.isi + rec.ici;
        const double e_prev = Yk.squaredNorm();
        delta = e_prev > 0.0 ? std::abs(next.squaredNorm() - e_prev) / e_prev : 0.0;
        stop = delta < params.delta_th;
        Yk = std::move(next);
        prev = std::move(cur);
    }
    res.Y_free = std::move(Yk);
    return res;
}

template <class Estimator>
SicResult run_sic(const CMatrix& Y, const SymbolFrame& S, const ScenarioConfig& cfg,
                  const SicParams& params, Estimator&& estimator) {
    return run_sic(Y, S, cfg, params, std::forward<Estimator>(estimator),
                   [](int, const CMatrix&) {});
}

/// RDM + CFAR at bin resolution; k_max = 0 gives the plain DFT receiver.
struct DftEstimator {
    const SymbolFrame* S;
    const ScenarioConfig* cfg;
    CfarParams cfar;

    std::vector<DelayDoppler> operator()(const CMatrix& Yk) const {
        const RangeDopplerMap rdm = compute_rdm(Yk, *S, *cfg);
        std::vector<DelayDoppler> out;
        for (const auto& d : cfar_detect(rdm, cfar, *cfg)) out.push_back({d.tau_hat, d.fd_hat});
        return out;
    }
};

template <class Observer>
SicResult sic_dft(const CMatrix& Y, const SymbolFrame& S, const ScenarioConfig& cfg,
                  const SicParams& params, const CfarParams& cfar, Observer&& observer) {
    return run_sic(Y, S, cfg, params, DftEstimator{&S, &cfg, cfar},
                   std::forward<Observer>(observer));
}

inline SicResult sic_dft(const CMatrix& Y, const SymbolFrame& S, const ScenarioConfig& cfg,
                         const SicParams& params = {}, const CfarParams& cfar = {}) {
    return sic_dft(Y, S, cfg, params, cfar, [](int, const CMatrix&) {});
}

}  // namespace beyondcp

#endif  // BEYONDCP_SIC_HPP
