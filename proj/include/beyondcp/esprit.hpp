#ifndef BEYONDCP_ESPRIT_HPP
#define BEYONDCP_ESPRIT_HPP

/**
 * @file esprit.hpp
 * @brief 2-D spatial smoothing, signal subspace and joint delay-Doppler ESPRIT.
 *
 * The channel estimate h = vec(Y .* S*) is viewed as an N x M grid. Snapshot j
 * is the N_sub x M_sub block at offset (dn, dm), flattened a + b N_sub, with
 * j = dm (N - N_sub + 1) + dn.
 *
 * At Table-I scale the snapshot matrix is 2048 x 2145, so signal_subspace()
 * has an operator form: X v and X^H u are 2-D correlations done with FFTs,
 * and a randomized block subspace iteration finds the top-Q singular
 * triplets. The dense SVD route is kept for small grids and as a cross-check.
 */

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "beyondcp/errors.hpp"
#include "beyondcp/fft.hpp"
#include "beyondcp/params.hpp"
#include "beyondcp/rdm.hpp"
#include "beyondcp/sic.hpp"

namespace beyondcp {

struct SmoothingPlan {
    int N = 0;
    int M = 0;
    int N_sub = 0;
    int M_sub = 0;

    int Kn() const { return N - N_sub + 1; }
    int Km() const { return M - M_sub + 1; }
    int rows() const { return N_sub * M_sub; }      // subarray length
    int snapshots() const { return Kn() * Km(); }  // L

    /// Offset (dn, dm) of snapshot j.
    std::pair<int, int> offset(int j) const { return {j % Kn(), j / Kn()}; }

    static SmoothingPlan halves(int N, int M) { return {N, M, N / 2, M / 2}; }

    void validate(int q_model = 1) const {
        if (N_sub < 2 || N_sub > N || M_sub < 2 || M_sub > M)
            throw ConfigError("subarray must satisfy 2 <= N_sub <= N and 2 <= M_sub <= M");
        if (q_model >= rows() || q_model >= snapshots())
            throw ConfigError("model order must be below both subarray size and snapshot count");
    }
};

inline CVector vectorize_channel(const CMatrix& Y, const SymbolFrame& S) {
    const CMatrix X = demodulate(Y, S);
    return Eigen::Map<const CVector>(X.data(), X.size());
}

/// Dense (N_sub M_sub) x L snapshot matrix.
inline CMatrix smooth_snapshots(const CVector& h, const SmoothingPlan& plan) {
    if (h.size() != static_cast<Eigen::Index>(plan.N) * plan.M)
        throw DimensionMismatch("channel vector length does not match the smoothing plan");
    CMatrix X(plan.rows(), plan.snapshots());
    for (int j = 0; j < plan.snapshots(); ++j) {
        const auto [dn, dm] = plan.offset(j);
        for (int b = 0; b < plan.M_sub; ++b)
            for (int a = 0; a < plan.N_sub; ++a)
                X(a + b * plan.N_sub, j) = h((dn + a) + static_cast<Eigen::Index>(dm + b) * plan.N);
    }
    return X;
}

/// Matrix-free snapshot matrix.
class SnapshotOperator {
public:
    SnapshotOperator(const CVector& h, const SmoothingPlan& plan) : plan_(plan) {
        if (h.size() != static_cast<Eigen::Index>(plan.N) * plan.M)
            throw DimensionMismatch("channel vector length does not match the smoothing plan");
        H_ = Eigen::Map<const CMatrix>(h.data(), plan.N, plan.M);
        Hf_ = H_;
        fft_2d(Hf_, FftDirection::Forward);
        Hcf_ = H_.conjugate();
        fft_2d(Hcf_, FftDirection::Forward);
    }

    const SmoothingPlan& plan() const { return plan_; }
    Eigen::Index rows() const { return plan_.rows(); }
    Eigen::Index cols() const { return plan_.snapshots(); }

    /// X V for a block of L-vectors.
    CMatrix apply(const CMatrix& V) const {
        CMatrix out(rows(), V.cols());
        for (Eigen::Index c = 0; c < V.cols(); ++c) {
            CMatrix g = CMatrix::Zero(plan_.N, plan_.M);
            for (int j = 0; j < plan_.snapshots(); ++j) {
                const auto [dn, dm] = plan_.offset(j);
                g(dn, dm) = V(j, c);
            }
            const CMatrix r = correlate(Hf_, g);
            for (int b = 0; b < plan_.M_sub; ++b)
                for (int a = 0; a < plan_.N_sub; ++a) out(a + b * plan_.N_sub, c) = r(a, b);
        }
        return out;
    }

    /// X^H U for a block of (N_sub M_sub)-vectors.
    CMatrix apply_adjoint(const CMatrix& U) const {
        CMatrix out(cols(), U.cols());
        for (Eigen::Index c = 0; c < U.cols(); ++c) {
            // sum_a conj(H(a + d)) U(a) = sum_a Hc(a + d) U(a)
            CMatrix g = CMatrix::Zero(plan_.N, plan_.M);
            for (int b = 0; b < plan_.M_sub; ++b)
                for (int a = 0; a < plan_.N_sub; ++a) g(a, b) = U(a + b * plan_.N_sub, c);
            const CMatrix r = correlate(Hcf_, g);
            for (int j = 0; j < plan_.snapshots(); ++j) {
                const auto [dn, dm] = plan_.offset(j);
                out(j, c) = r(dn, dm);
            }
        }
        return out;
    }

    /// ||X||_F^2 from h weighted by how many snapshots contain each sample.
    double frobenius_sq() const {
        auto count = [](int i, int sub, int k) {
            return std::min(i, sub - 1) - std::max(0, i - k + 1) + 1;
        };
        double acc = 0.0;
        for (int m = 0; m < plan_.M; ++m) {
            const int cm = count(m, plan_.M_sub, plan_.Km());
            for (int n = 0; n < plan_.N; ++n)
                acc += std::norm(H_(n, m)) * cm * count(n, plan_.N_sub, plan_.Kn());
        }
        return acc;
    }

private:
    // r(x) = sum_d A(x + d) g(d) on the N x M torus, A given by its forward 2-D FFT.
    CMatrix correlate(const CMatrix& Af, CMatrix g) const {
        fft_2d(g, FftDirection::Backward);
        g = g.cwiseProduct(Af);
        fft_2d(g, FftDirection::Backward);
        g /= static_cast<double>(plan_.N) * plan_.M;
        return g;
    }

    SmoothingPlan plan_;
    CMatrix H_;
    CMatrix Hf_;
    CMatrix Hcf_;
};

struct SubspaceModel {
    CMatrix U_s;                  // (N_sub M_sub) x Q, orthonormal
    Eigen::VectorXd eigenvalues;  // sigma_i^2 / L, descending
    double noise_floor = 0.0;
    Eigen::VectorXd singular_values;  // every value the route computed
};

namespace detail {

inline void check_rank(const Eigen::VectorXd& s, int q) {
    if (s.size() < q || !(s(q - 1) > 1e-10 * std::max(s(0), 1e-300)))
        throw NumericalError("snapshot matrix rank below the model order " + std::to_string(q));
}

inline CMatrix orthonormalize(const CMatrix& A) {
    Eigen::HouseholderQR<CMatrix> qr(A);
    CMatrix Q = CMatrix::Identity(A.rows(), A.cols());
    qr.householderQ().applyThisOnTheLeft(Q);
    return Q;
}

}  // namespace detail

/// Dense route: thin SVD of the snapshot matrix.
inline SubspaceModel signal_subspace(const CMatrix& snapshots, int q_model) {
    const auto K = snapshots.rows();
    const auto L = snapshots.cols();
    if (q_model < 1 || q_model >= std::min(K, L))
        throw ConfigError("model order must lie in [1, min(rows, snapshots))");
    Eigen::BDCSVD<CMatrix> svd(snapshots, Eigen::ComputeThinU);
    const Eigen::VectorXd s = svd.singularValues();
    detail::check_rank(s, q_model);

    SubspaceModel model;
    model.U_s = svd.matrixU().leftCols(q_model);
    model.singular_values = s;
    model.eigenvalues = s.head(q_model).array().square() / static_cast<double>(L);
    const double rest = s.tail(s.size() - q_model).squaredNorm();
    model.noise_floor = rest / (static_cast<double>(s.size() - q_model) * L);
    return model;
}

struct FastSubspaceOptions {
    int oversample = 8;
    int power_iterations = 2;
    std::uint64_t seed = 0x5eed;
};

/// Operator route: randomized block subspace iteration on X.
inline SubspaceModel signal_subspace(const SnapshotOperator& X, int q_model,
                                     const FastSubspaceOptions& opt = {}) {
    const auto K = X.rows();
    const auto L = X.cols();
    if (q_model < 1 || q_model >= std::min(K, L))
        throw ConfigError("model order must lie in [1, min(rows, snapshots))");
    const auto r = std::min<Eigen::Index>(q_model + opt.oversample, std::min(K, L));

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> g;
    CMatrix omega(L, r);
    for (Eigen::Index j = 0; j < r; ++j)
        for (Eigen::Index i = 0; i < L; ++i) omega(i, j) = cplx(g(rng), g(rng));

    CMatrix Q = detail::orthonormalize(X.apply(omega));
    for (int it = 0; it < opt.power_iterations; ++it) {
        const CMatrix Z = detail::orthonormalize(X.apply_adjoint(Q));
        Q = detail::orthonormalize(X.apply(Z));
    }
    // X ~ Q (Q^H X); B^H = X^H Q is L x r.
    const CMatrix Bh = X.apply_adjoint(Q);
    Eigen::BDCSVD<CMatrix> svd(Bh, Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    detail::check_rank(s, q_model);

    SubspaceModel model;
    model.U_s = Q * svd.matrixV().leftCols(q_model);
    model.singular_values = s;
    model.eigenvalues = s.head(q_model).array().square() / static_cast<double>(L);
    const double rest = std::max(0.0, X.frobenius_sq() - s.head(q_model).squaredNorm());
    model.noise_floor = rest / (static_cast<double>(std::min(K, L) - q_model) * L);
    return model;
}

/// Model order at the largest ratio between consecutive singular values.
inline int estimate_model_order(const Eigen::VectorXd& singular_values, int max_order) {
    const int n = static_cast<int>(singular_values.size());
    max_order = std::min(max_order, n - 1);
    int best = 1;
    double best_ratio = 0.0;
    for (int q = 1; q <= max_order; ++q) {
        const double ratio = singular_values(q - 1) / std::max(singular_values(q), 1e-300);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = q;
        }
    }
    return best;
}

struct RotationOperators {
    CMatrix P_tau;
    CMatrix P_f;
    double condition = 1.0;  // of U0^H U0
};

/// LS rotations from the one-subcarrier and one-symbol shifts of U_s.
inline RotationOperators rotation_operators(const CMatrix& U_s, const SmoothingPlan& plan) {
    if (plan.N_sub < 2 || plan.M_sub < 2) throw ConfigError("subarray too small for ESPRIT");
    if (U_s.rows() != plan.rows()) throw DimensionMismatch("subspace rows do not match the plan");
    const int rows = (plan.N_sub - 1) * (plan.M_sub - 1);
    const auto q = U_s.cols();
    CMatrix U0(rows, q), Ut(rows, q), Uf(rows, q);
    int r = 0;
    for (int b = 0; b < plan.M_sub - 1; ++b)
        for (int a = 0; a < plan.N_sub - 1; ++a, ++r) {
            U0.row(r) = U_s.row(a + b * plan.N_sub);
            Ut.row(r) = U_s.row(a + 1 + b * plan.N_sub);
            Uf.row(r) = U_s.row(a + (b + 1) * plan.N_sub);
        }
    const CMatrix G = U0.adjoint() * U0;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(G);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    RotationOperators out;
    out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (out.condition > 1e10)
        throw NumericalError("ill-conditioned ESPRIT normal matrix (cond " +
                             std::to_string(out.condition) + ")");
    const auto ldlt = G.ldlt();
    out.P_tau = ldlt.solve(U0.adjoint() * Ut);
    out.P_f = ldlt.solve(U0.adjoint() * Uf);
    return out;
}

struct EspritEstimate {
    std::vector<DelayDoppler> pairs;
    std::vector<cplx> eigvals_tau;
    std::vector<cplx> eigvals_f;
    double offdiag_ratio = 0.0;
    std::string warning;
};

inline double fold_delay(double angle, const ScenarioConfig& cfg) {
    double tau = -angle / (kTwoPi * cfg.delta_f);
    const double span = 1.0 / cfg.delta_f;
    tau = std::fmod(tau, span);
    if (tau < 0.0) tau += span;
    return tau;
}

inline double fold_doppler(double angle, const ScenarioConfig& cfg) {
    if (angle >= std::numbers::pi) angle -= kTwoPi;
    return angle / (kTwoPi * cfg.symbol_duration());
}

/// Diagonalize P_tau = T L T^-1 and read Doppler off diag(T^-1 P_f T).
inline EspritEstimate extract_pairs(const RotationOperators& rot, const ScenarioConfig& cfg) {
    Eigen::ComplexEigenSolver<CMatrix> eig(rot.P_tau);
    if (eig.info() != Eigen::Success) throw NumericalError("P_tau eigendecomposition failed");
    const CMatrix& T = eig.eigenvectors();
    Eigen::PartialPivLU<CMatrix> lu(T);
    const CMatrix D = lu.solve(rot.P_f * T);

    EspritEstimate out;
    const auto q = D.rows();
    double diag = 0.0;
    double off = 0.0;
    for (Eigen::Index i = 0; i < q; ++i)
        for (Eigen::Index j = 0; j < q; ++j) (i == j ? diag : off) += std::norm(D(i, j));
    out.offdiag_ratio = diag > 0.0 ? off / diag : std::numeric_limits<double>::infinity();
    if (out.offdiag_ratio > 0.2)
        out.warning = "pairing unreliable: off-diagonal energy " +
                      std::to_string(100.0 * out.offdiag_ratio) + "% of diagonal";

    for (Eigen::Index i = 0; i < q; ++i) {
        const cplx lt = eig.eigenvalues()(i);
        const cplx lf = D(i, i);
        out.eigvals_tau.push_back(lt);
        out.eigvals_f.push_back(lf);
        out.pairs.push_back({fold_delay(std::arg(lt), cfg), fold_doppler(std::arg(lf), cfg)});
    }
    return out;
}

struct EspritParams {
    int q_model = 2;
    SmoothingPlan plan{};  // zero dims -> halves of the frame
    // Grids with N_sub M_sub L above this use the operator route.
    long dense_limit = 1L << 18;
    FastSubspaceOptions fast{};
};

inline SmoothingPlan resolve_plan(const EspritParams& p, const ScenarioConfig& cfg) {
    SmoothingPlan plan = p.plan;
    if (plan.N_sub == 0 || plan.M_sub == 0) plan = SmoothingPlan::halves(cfg.N, cfg.M);
    plan.N = cfg.N;
    plan.M = cfg.M;
    plan.validate(p.q_model);
    return plan;
}

/// One ESPRIT pass on an observation.
inline EspritEstimate esprit(const CMatrix& Y, const SymbolFrame& S, const ScenarioConfig& cfg,
                             const EspritParams& p) {
    const SmoothingPlan plan = resolve_plan(p, cfg);
    const CVector h = vectorize_channel(Y, S);
    SubspaceModel sub;
    if (static_cast<long>(plan.rows()) * plan.snapshots() <= p.dense_limit)
        sub = signal_subspace(smooth_snapshots(h, plan), p.q_model);
    else
        sub = signal_subspace(SnapshotOperator(h, plan), p.q_model, p.fast);
    return extract_pairs(rotation_operators(sub.U_s, plan), cfg);
}

struct EspritEstimator {
    const SymbolFrame* S;
    const ScenarioConfig* cfg;
    EspritParams params;
    std::string* warning = nullptr;

    std::vector<DelayDoppler> operator()(const CMatrix& Yk) const {
        EspritEstimate e = esprit(Yk, *S, *cfg, params);
        if (warning && !e.warning.empty()) *warning = e.warning;
        return e.pairs;
    }
};

template <class Observer>
SicResult sic_esprit(const CMatrix& Y, const SymbolFrame& S, const ScenarioConfig& cfg,
                     const SicParams& sic, const EspritParams& ep, Observer&& observer) {
    std::string pairing_warning;
    SicResult r = run_sic(Y, S, cfg, sic, EspritEstimator{&S, &cfg, ep, &pairing_warning},
                          std::forward<Observer>(observer));
    if (r.warning.empty()) r.warning = pairing_warning;
    return r;
}

inline SicResult sic_esprit(const CMatrix& Y, const SymbolFrame& S, const ScenarioConfig& cfg,
                            const SicParams& sic = {}, const EspritParams& ep = {}) {
    return sic_esprit(Y, S, cfg, sic, ep, [](int, const CMatrix&) {});
}

}  // namespace beyondcp

#endif  // BEYONDCP_ESPRIT_HPP
