#ifndef BEYONDCP_ECHO_HPP
#define BEYONDCP_ECHO_HPP

/**
 * @file echo.hpp
 * @brief Frequency-domain echo synthesis with explicit ISI/ICI terms.
 *
 * The observation is Y = Y_free + Y_ISI - Y_ICI + Z with
 *
 *   Y_free = sum_q  alpha_q (b(tau_q) c^H(fd_q) .* S)
 *   Y_ISI  = sum_{beyond} alpha_q Phi_q (b(tau_q - T_cp) c^H(fd_q) .* S) J_1
 *   Y_ICI  = sum_{beyond} alpha_q Phi_q (b(tau_q) c^H(fd_q) .* S)
 *
 * b[n] = exp(-j 2 pi n delta_f tau), c[m] = exp(-j 2 pi m fd T_s), and J_1
 * delays the symbol axis by one column (symbol 0 receives no ISI).
 *
 * Phi_q is applied through FFTs: Phi x = F(mask_{i < l-N_cp}(F^{-1} x)) / N,
 * i.e. keep only the window samples that fall outside the CP.
 *
 * time_domain_oracle() rebuilds the same matrix from sampled waveforms with
 * plain DFT sums, independent of everything else in this file.
 */

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "beyondcp/errors.hpp"
#include "beyondcp/fft.hpp"
#include "beyondcp/params.hpp"
#include "beyondcp/waveform.hpp"

namespace beyondcp {

inline CVector delay_steering(double tau_s, const ScenarioConfig& cfg, int length) {
    CVector b(length);
    const double w = -kTwoPi * cfg.delta_f * tau_s;
    for (int n = 0; n < length; ++n) b(n) = std::polar(1.0, w * n);
    return b;
}

inline CVector delay_steering(double tau_s, const ScenarioConfig& cfg) {
    return delay_steering(tau_s, cfg, cfg.N);
}

inline CVector doppler_steering(double fd_hz, const ScenarioConfig& cfg, int length) {
    CVector c(length);
    const double w = -kTwoPi * fd_hz * cfg.symbol_duration();
    for (int m = 0; m < length; ++m) c(m) = std::polar(1.0, w * m);
    return c;
}

inline CVector doppler_steering(double fd_hz, const ScenarioConfig& cfg) {
    return doppler_steering(fd_hz, cfg, cfg.M);
}

struct SteeringVectors {
    CVector b_tau;
    CVector c_fd;
};

inline SteeringVectors steering_vectors(const TargetLink& link, const ScenarioConfig& cfg) {
    return {delay_steering(link.tau_s, cfg), doppler_steering(link.fd_hz, cfg)};
}

/// (b c^H) .* S
inline CMatrix modulated_outer(const CVector& b, const CVector& c, const SymbolFrame& S) {
    return b.asDiagonal() * S * c.conjugate().asDiagonal();
}

struct PhaseMatrix {
    CMatrix Phi;     // N x N
    int excess = 0;  // max(0, l - N_cp)
    double rho = 0.0;
};

/// Dense phase-coupling matrix for tap l, closed-form geometric sums.
inline PhaseMatrix phase_matrix(int l, const ScenarioConfig& cfg) {
    if (l < 0 || l >= cfg.N) throw DelayOutOfWindow("tap outside [0, N)");
    const int N = cfg.N;
    PhaseMatrix pm;
    pm.excess = std::max(0, l - cfg.N_cp);
    pm.rho = static_cast<double>(pm.excess) / N;
    pm.Phi = CMatrix::Zero(N, N);
    if (pm.excess == 0) return pm;

    const int L = pm.excess;
    for (int n = 0; n < N; ++n) {
        for (int np = 0; np < N; ++np) {
            const int d = ((np - n) % N + N) % N;
            if (d == 0) {
                pm.Phi(n, np) = pm.rho;
                continue;
            }
            const double theta = kTwoPi * d / N;
            const cplx num = 1.0 - std::polar(1.0, theta * L);
            const cplx den = 1.0 - std::polar(1.0, theta);
            pm.Phi(n, np) = num / (den * static_cast<double>(N));
        }
    }
    return pm;
}

/// In place X <- Phi X for every column of X; excess = l - N_cp.
inline void apply_phase_matrix(int excess, CMatrix& X) {
    const auto N = X.rows();
    if (excess <= 0) {
        X.setZero();
        return;
    }
    if (excess >= N) return;  // Phi = I
    fft_columns(X, FftDirection::Backward);
    X.bottomRows(N - excess).setZero();
    fft_columns(X, FftDirection::Forward);
    X /= static_cast<double>(N);
}

/// X J_1: column m takes column m-1, column 0 becomes zero.
inline CMatrix shift_symbols(const CMatrix& X) {
    CMatrix out = CMatrix::Zero(X.rows(), X.cols());
    if (X.cols() > 1) out.rightCols(X.cols() - 1) = X.leftCols(X.cols() - 1);
    return out;
}

struct EchoComponents {
    CMatrix Y_free;
    CMatrix Y_isi;
    CMatrix Y_ici;
    CMatrix Z;
    CMatrix Y;
    std::vector<TargetLink> links;

    void refresh() { Y = Y_free + Y_isi - Y_ici + Z; }
};

inline void check_frame(const ScenarioConfig& cfg, const SymbolFrame& S) {
    if (S.rows() != cfg.N || S.cols() != cfg.M)
        throw DimensionMismatch("symbol frame is " + std::to_string(S.rows()) + "x" +
                                std::to_string(S.cols()) + ", config expects " +
                                std::to_string(cfg.N) + "x" + std::to_string(cfg.M));
}

inline CMatrix free_component(const ScenarioConfig& cfg, std::span<const TargetLink> links,
                              const SymbolFrame& S) {
    check_frame(cfg, S);
    CMatrix Y = CMatrix::Zero(cfg.N, cfg.M);
    for (const auto& link : links) {
        Y += link.alpha *
             modulated_outer(delay_steering(link.tau_s, cfg), doppler_steering(link.fd_hz, cfg), S);
    }
    return Y;
}

struct InterferenceTerms {
    CMatrix isi;
    CMatrix ici;
};

/// ISI and ICI of every beyond-CP link; the Phi tap is link.l.
inline InterferenceTerms interference_components(const ScenarioConfig& cfg,
                                                 std::span<const TargetLink> links,
                                                 const SymbolFrame& S) {
    check_frame(cfg, S);
    InterferenceTerms out{CMatrix::Zero(cfg.N, cfg.M), CMatrix::Zero(cfg.N, cfg.M)};
    for (const auto& link : links) {
        if (!link.beyond_cp) continue;
        if (link.l >= cfg.N) throw DelayOutOfWindow("tap outside [0, N)");
        const int excess = link.l - cfg.N_cp;
        const CVector c = doppler_steering(link.fd_hz, cfg);

        CMatrix isi = link.alpha *
                      modulated_outer(delay_steering(link.tau_s - cfg.cp_duration(), cfg), c, S);
        apply_phase_matrix(excess, isi);
        out.isi += shift_symbols(isi);

        CMatrix ici = link.alpha * modulated_outer(delay_steering(link.tau_s, cfg), c, S);
        apply_phase_matrix(excess, ici);
        out.ici += ici;
    }
    return out;
}

/// Y_ISI - Y_ICI with one Phi application per target (Phi commutes with J_1).
inline CMatrix interference_difference(const ScenarioConfig& cfg,
                                       std::span<const TargetLink> links, const SymbolFrame& S) {
    check_frame(cfg, S);
    CMatrix out = CMatrix::Zero(cfg.N, cfg.M);
    for (const auto& link : links) {
        if (!link.beyond_cp) continue;
        const CVector c = doppler_steering(link.fd_hz, cfg);
        CMatrix d = shift_symbols(modulated_outer(
                        delay_steering(link.tau_s - cfg.cp_duration(), cfg), c, S)) -
                    modulated_outer(delay_steering(link.tau_s, cfg), c, S);
        d *= link.alpha;
        apply_phase_matrix(link.l - cfg.N_cp, d);
        out += d;
    }
    return out;
}

/// Noiseless structured synthesis; Z is zero.
inline EchoComponents synth_components(const ScenarioConfig& cfg,
                                       std::span<const TargetLink> links, const SymbolFrame& S) {
    EchoComponents ec;
    ec.links.assign(links.begin(), links.end());
    ec.Y_free = free_component(cfg, links, S);
    auto terms = interference_components(cfg, links, S);
    ec.Y_isi = std::move(terms.isi);
    ec.Y_ici = std::move(terms.ici);
    ec.Z = CMatrix::Zero(cfg.N, cfg.M);
    ec.refresh();
    return ec;
}

/// i.i.d. CN(0, sigma2) entries.
template <class Rng>
CMatrix complex_gaussian(Eigen::Index rows, Eigen::Index cols, double sigma2, Rng& rng) {
    CMatrix Z(rows, cols);
    if (sigma2 <= 0.0) {
        Z.setZero();
        return Z;
    }
    std::normal_distribution<double> g(0.0, std::sqrt(sigma2 / 2.0));
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double re = g(rng);
            const double im = g(rng);
            Z(i, j) = cplx(re, im);
        }
    return Z;
}

template <class Rng>
void add_noise(EchoComponents& ec, double sigma2, Rng& rng) {
    ec.Z = complex_gaussian(ec.Y_free.rows(), ec.Y_free.cols(), sigma2, rng);
    ec.refresh();
}

/**
 * Brute-force reference: sample each symbol with its CP, delay every target's
 * stream by l_q samples (zeros before arrival), apply the per-symbol Doppler
 * phase, sum, strip the CP and take a unitary DFT per symbol. O(N^2 M Q).
 */
inline CMatrix time_domain_oracle(const ScenarioConfig& cfg, std::span<const TargetLink> links,
                                  const SymbolFrame& S) {
    check_frame(cfg, S);
    const int N = cfg.N;
    const int M = cfg.M;
    const int Ncp = cfg.N_cp;
    const int Ns = N + Ncp;
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(N));

    std::vector<cplx> twiddle(N);
    for (int k = 0; k < N; ++k) twiddle[k] = std::polar(1.0, kTwoPi * k / N);

    std::vector<cplx> rx(static_cast<std::size_t>(M) * Ns + N, cplx{});
    std::vector<cplx> tx(Ns);
    for (const auto& link : links) {
        if (link.l < 0 || link.l >= N) throw DelayOutOfWindow("tap outside [0, N)");
        for (int m = 0; m < M; ++m) {
            const cplx doppler = std::polar(1.0, kTwoPi * m * link.fd_hz * cfg.symbol_duration());
            for (int k = 0; k < Ns; ++k) {
                cplx acc{};
                for (int n = 0; n < N; ++n) {
                    const long idx = ((static_cast<long>(n) * (k - Ncp)) % N + N) % N;
                    acc += S(n, m) * twiddle[idx];
                }
                tx[k] = acc * inv_sqrt_n * doppler;
            }
            const std::size_t start = static_cast<std::size_t>(m) * Ns + link.l;
            for (int k = 0; k < Ns; ++k) rx[start + k] += link.alpha * tx[k];
        }
    }

    CMatrix Y(N, M);
    for (int m = 0; m < M; ++m) {
        const std::size_t start = static_cast<std::size_t>(m) * Ns + Ncp;
        for (int n = 0; n < N; ++n) {
            cplx acc{};
            for (int k = 0; k < N; ++k) {
                const long idx = (static_cast<long>(n) * k) % N;
                acc += rx[start + k] * std::conj(twiddle[idx]);
            }
            Y(n, m) = acc * inv_sqrt_n;
        }
    }
    return Y;
}

}  // namespace beyondcp

#endif  // BEYONDCP_ECHO_HPP
