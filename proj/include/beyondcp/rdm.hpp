#ifndef BEYONDCP_RDM_HPP
#define BEYONDCP_RDM_HPP

/**
 * @file rdm.hpp
 * @brief Range-Doppler map, 2-D CA-CFAR, LS amplitude and interference reconstruction.
 *
 * chi = F_N^H (Y .* S*) F_M with unitary DFTs; the Doppler axis is stored
 * centered, column j holding bin nu = j - M/2.
 */

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "beyondcp/echo.hpp"
#include "beyondcp/errors.hpp"
#include "beyondcp/fft.hpp"
#include "beyondcp/params.hpp"

namespace beyondcp {

struct RangeDopplerMap {
    CMatrix chi;  // N x M, Doppler centered
    double delay_bin_s = 0.0;
    double doppler_bin_hz = 0.0;
    int n_cp = 0;

    int N() const { return static_cast<int>(chi.rows()); }
    int M() const { return static_cast<int>(chi.cols()); }
    int doppler_bin(int col) const { return col - M() / 2; }
    int column(int nu) const { return ((nu + M() / 2) % M() + M()) % M(); }
    int row(int l) const { return ((l % N()) + N()) % N(); }
    cplx at(int l, int nu) const { return chi(row(l), column(nu)); }
    double power(int l, int nu) const { return std::norm(at(l, nu)); }
};

inline CMatrix demodulate(const CMatrix& Y, const SymbolFrame& S) {
    if (Y.rows() != S.rows() || Y.cols() != S.cols())
        throw DimensionMismatch("observation and symbol frame sizes differ");
    return Y.cwiseProduct(S.conjugate());
}

inline RangeDopplerMap compute_rdm(const CMatrix& Y, const SymbolFrame& S,
                                   const ScenarioConfig& cfg) {
    CMatrix X = demodulate(Y, S);
    const auto N = X.rows();
    const auto M = X.cols();
    fft_columns(X, FftDirection::Backward);
    fft_rows(X, FftDirection::Forward);
    X /= std::sqrt(static_cast<double>(N) * static_cast<double>(M));

    RangeDopplerMap rdm;
    rdm.chi.resize(N, M);
    const auto half = M / 2;
    for (Eigen::Index j = 0; j < M; ++j) rdm.chi.col(j) = X.col((j - half + M) % M);
    rdm.delay_bin_s = cfg.delay_bin_s();
    rdm.doppler_bin_hz = cfg.doppler_bin_hz();
    rdm.n_cp = cfg.N_cp;
    return rdm;
}

struct CfarParams {
    double pfa = 1e-4;
    int guard = 2;      // cells per side
    int training = 8;   // cells per side beyond the guard
    int max_targets = 8;
};

struct Detection {
    int l_bin = 0;
    int nu_bin = 0;  // centered
    double tau_hat = 0.0;
    double fd_hat = 0.0;
    cplx alpha_hat{};
    bool beyond_cp = false;
    double peak_power = 0.0;
};

namespace detail {

/// Circular moving sum of half-width h along each column.
inline Eigen::MatrixXd circular_box_rows(const Eigen::MatrixXd& P, int h) {
    const auto R = P.rows();
    Eigen::MatrixXd out(P.rows(), P.cols());
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        double acc = 0.0;
        for (int d = -h; d <= h; ++d) acc += P(((d % R) + R) % R, j);
        out(0, j) = acc;
        for (Eigen::Index i = 1; i < R; ++i) {
            acc += P((i + h) % R, j) - P(((i - h - 1) % R + R) % R, j);
            out(i, j) = acc;
        }
    }
    return out;
}

inline Eigen::MatrixXd circular_box(const Eigen::MatrixXd& P, int h) {
    Eigen::MatrixXd cols = circular_box_rows(P, h);
    Eigen::MatrixXd t = circular_box_rows(cols.transpose(), h);
    return t.transpose();
}

}  // namespace detail

inline double cfar_threshold_factor(int training_cells, double pfa) {
    const double L = training_cells;
    return L * (std::pow(pfa, -1.0 / L) - 1.0);
}

inline int cfar_training_cells(const CfarParams& p) {
    const int w = 2 * (p.guard + p.training) + 1;
    const int g = 2 * p.guard + 1;
    return w * w - g * g;
}

/**
 * 2-D cell-averaging CFAR with wrap-around edges. Candidates must exceed the
 * threshold and be 3x3 local maxima; survivors are kept strongest-first with
 * at most one per 1-bin neighborhood.
 */
inline std::vector<Detection> cfar_detect(const RangeDopplerMap& rdm, const CfarParams& p,
                                          const ScenarioConfig& cfg) {
    const int L = cfar_training_cells(p);
    const int w = 2 * (p.guard + p.training) + 1;
    if (p.training < 1 || L <= 0) throw ConfigError("CFAR window has no training cells");
    if (p.guard < 0) throw ConfigError("CFAR guard must be non-negative");
    if (w > std::min(rdm.N(), rdm.M()))
        throw ConfigError("CFAR window (" + std::to_string(w) + " cells) exceeds the RDM size");
    if (!(p.pfa > 0.0 && p.pfa < 1.0)) throw ConfigError("CFAR pfa must lie in (0, 1)");

    const Eigen::MatrixXd P = rdm.chi.cwiseAbs2();
    const Eigen::MatrixXd outer = detail::circular_box(P, p.guard + p.training);
    const Eigen::MatrixXd inner = detail::circular_box(P, p.guard);
    const double a = cfar_threshold_factor(L, p.pfa);
    const int N = rdm.N();
    const int M = rdm.M();

    std::vector<Detection> cand;
    for (int j = 0; j < M; ++j) {
        for (int i = 0; i < N; ++i) {
            const double noise = (outer(i, j) - inner(i, j)) / L;
            const double v = P(i, j);
            if (!(v > a * noise)) continue;
            bool is_max = true;
            for (int di = -1; di <= 1 && is_max; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    if (!di && !dj) continue;
                    if (P((i + di + N) % N, (j + dj + M) % M) > v) {
                        is_max = false;
                        break;
                    }
                }
            if (!is_max) continue;
            Detection d;
            d.l_bin = i;
            d.nu_bin = rdm.doppler_bin(j);
            d.tau_hat = i * rdm.delay_bin_s;
            d.fd_hat = d.nu_bin * rdm.doppler_bin_hz;
            d.beyond_cp = i > cfg.N_cp;
            d.peak_power = v;
            cand.push_back(d);
        }
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [](const Detection& x, const Detection& y) { return x.peak_power > y.peak_power; });

    auto circ = [](int a, int b, int n) {
        const int d = std::abs(a - b) % n;
        return std::min(d, n - d);
    };
    std::vector<Detection> out;
    for (const auto& d : cand) {
        if (static_cast<int>(out.size()) >= p.max_targets) break;
        const bool dup = std::any_of(out.begin(), out.end(), [&](const Detection& k) {
            return circ(k.l_bin, d.l_bin, N) <= 1 && circ(k.nu_bin, d.nu_bin, M) <= 1;
        });
        if (!dup) out.push_back(d);
    }
    return out;
}

/// alpha = b^H (Y .* S*) c / (||b||^2 ||c||^2).
inline cplx estimate_alpha(const CMatrix& Y, const SymbolFrame& S, double tau_hat, double fd_hat,
                           const ScenarioConfig& cfg) {
    const CMatrix X = demodulate(Y, S);
    const CVector b = delay_steering(tau_hat, cfg, static_cast<int>(X.rows()));
    const CVector c = doppler_steering(fd_hat, cfg, static_cast<int>(X.cols()));
    const cplx num = b.dot(X * c);  // dot() conjugates b
    return num / (b.squaredNorm() * c.squaredNorm());
}

/// Mirror of the synthesis ISI/ICI terms with estimated links (alpha already physical).
inline InterferenceTerms reconstruct_interference(const ScenarioConfig& cfg, const SymbolFrame& S,
                                                  std::span<const TargetLink> estimated) {
    return interference_components(cfg, estimated, S);
}

/// Largest |chi|^2 outside the excluded (l, nu) bins.
inline double peak_sidelobe_power(const RangeDopplerMap& rdm,
                                  std::span<const std::pair<int, int>> excluded) {
    double best = 0.0;
    for (int j = 0; j < rdm.M(); ++j) {
        for (int i = 0; i < rdm.N(); ++i) {
            const bool skip = std::any_of(excluded.begin(), excluded.end(), [&](const auto& e) {
                return rdm.row(e.first) == i && rdm.column(e.second) == j;
            });
            if (!skip) best = std::max(best, std::norm(rdm.chi(i, j)));
        }
    }
    return best;
}

/// Nearest integer (delay tap, centered Doppler bin) of a link.
inline std::pair<int, int> grid_bin(double tau_s, double fd_hz, const ScenarioConfig& cfg) {
    return {static_cast<int>(std::lround(tau_s * cfg.bandwidth())),
            static_cast<int>(std::lround(fd_hz / cfg.doppler_bin_hz()))};
}

}  // namespace beyondcp

#endif  // BEYONDCP_RDM_HPP
