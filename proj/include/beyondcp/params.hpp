#ifndef BEYONDCP_PARAMS_HPP
#define BEYONDCP_PARAMS_HPP

/**
 * @file params.hpp
 * @brief Scenario configuration, physical constants and per-target link parameters.
 *
 * Everything downstream (echo synthesis, analytics, estimators) consumes a
 * ScenarioConfig plus a list of TargetLink values derived here.
 */

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "beyondcp/errors.hpp"

namespace beyondcp {

using cplx = std::complex<double>;

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s, exact
inline constexpr double kBoltzmann = 1.380649e-23;      // J/K, exact
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct ScenarioConfig {
    double fc = 28e9;         // carrier frequency (Hz)
    double delta_f = 120e3;   // subcarrier spacing (Hz)
    int N = 128;              // subcarriers
    int M = 64;               // OFDM symbols per frame
    int N_cp = 9;             // cyclic prefix length (samples)
    double noise_figure_dB = 3.0;
    double T_temp = 290.0;    // noise temperature (K)
    std::string constellation = "1024QAM";
    std::uint64_t seed = 0;
    std::optional<double> snr_override_dB;

    double bandwidth() const { return N * delta_f; }
    double useful_duration() const { return 1.0 / delta_f; }
    double cp_duration() const { return N_cp / bandwidth(); }
    double symbol_duration() const { return useful_duration() + cp_duration(); }
    int samples_per_symbol() const { return N + N_cp; }
    /// Doppler resolution of one RDM bin, 1/(M T_s).
    double doppler_bin_hz() const { return 1.0 / (M * symbol_duration()); }
    double delay_bin_s() const { return 1.0 / bandwidth(); }
    double range_bin_m() const { return kSpeedOfLight / (2.0 * bandwidth()); }

    /// Table I numerology with the 0.59 us NR normal CP (9 samples at 15.36 MHz).
    static ScenarioConfig standard_cp() { return ScenarioConfig{}; }

    /// Table I numerology with the CP stretched to one useful symbol (8.33 us).
    static ScenarioConfig sufficient_cp() {
        ScenarioConfig cfg;
        cfg.N_cp = cfg.N;
        return cfg;
    }

    bool operator==(const ScenarioConfig&) const = default;
};

struct TargetTruth {
    double range_m = 0.0;
    double velocity_mps = 0.0;  // radial, positive = approaching
    double rcs_m2 = 1.0;
};

struct TargetLink {
    cplx alpha{};        // complex reflection coefficient
    double tau_s = 0.0;  // round-trip delay
    double fd_hz = 0.0;  // Doppler shift
    int l = 0;           // delay tap, round(tau * B)
    double rho = 0.0;    // normalized excess delay beyond the CP
    bool beyond_cp = false;
};

struct UnambiguousRanges {
    double isi_free_range_m = 0.0;
    double max_range_m = 0.0;
};

/// Collects every violated invariant; empty means the config is usable.
inline std::vector<std::string> validate_config(const ScenarioConfig& cfg) {
    std::vector<std::string> errors;
    if (cfg.N < 2) errors.emplace_back("N must be at least 2");
    if (cfg.M < 2) errors.emplace_back("M must be at least 2");
    if (cfg.N_cp < 0) errors.emplace_back("N_cp must be non-negative");
    if (cfg.N_cp > cfg.N) errors.emplace_back("CP exceeds symbol length (N_cp > N)");
    if (!(cfg.delta_f > 0.0) || !std::isfinite(cfg.delta_f))
        errors.emplace_back("delta_f must be positive");
    if (!(cfg.fc > 0.0) || !std::isfinite(cfg.fc)) errors.emplace_back("fc must be positive");
    if (!(cfg.T_temp > 0.0) || !std::isfinite(cfg.T_temp))
        errors.emplace_back("T_temp must be positive");
    if (!std::isfinite(cfg.noise_figure_dB)) errors.emplace_back("noise_figure_dB must be finite");
    if (cfg.snr_override_dB && !std::isfinite(*cfg.snr_override_dB))
        errors.emplace_back("snr_override_dB must be finite");

    const std::string& c = cfg.constellation;
    if (c == "BPSK" || c == "8QAM") {
        errors.emplace_back("constellation " + c +
                            " violates the E{s^2}=0 requirement of the echo analytics");
    } else if (c != "QPSK" && c != "16QAM" && c != "64QAM" && c != "256QAM" && c != "1024QAM") {
        errors.emplace_back("unsupported constellation '" + c + "'");
    }
    return errors;
}

inline void require_valid(const ScenarioConfig& cfg) {
    auto errors = validate_config(cfg);
    if (errors.empty()) return;
    std::string msg = "invalid scenario config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
}

/// Receiver noise power per frequency-domain sample, F k_b delta_f T_temp.
inline double noise_power(const ScenarioConfig& cfg) {
    return std::pow(10.0, cfg.noise_figure_dB / 10.0) * kBoltzmann * cfg.delta_f * cfg.T_temp;
}

inline UnambiguousRanges unambiguous_ranges(const ScenarioConfig& cfg) {
    return {kSpeedOfLight * cfg.cp_duration() / 2.0,
            kSpeedOfLight * cfg.N / (2.0 * cfg.bandwidth())};
}

/// Nearest integer tap with ties away from zero.
inline int delay_tap(double tau_s, const ScenarioConfig& cfg) {
    return static_cast<int>(std::lround(tau_s * cfg.bandwidth()));
}

inline double excess_delay(int l, const ScenarioConfig& cfg) {
    return l > cfg.N_cp ? static_cast<double>(l - cfg.N_cp) / cfg.N : 0.0;
}

/// Link for an already-known (tau, fd, alpha); used by estimators to rebuild
/// a target from its parameter estimates.
inline TargetLink make_link(double tau_s, double fd_hz, cplx alpha, const ScenarioConfig& cfg) {
    TargetLink link;
    link.alpha = alpha;
    link.tau_s = tau_s;
    link.fd_hz = fd_hz;
    link.l = delay_tap(tau_s, cfg);
    link.rho = excess_delay(link.l, cfg);
    link.beyond_cp = link.l > cfg.N_cp;
    return link;
}

inline double reflection_magnitude(const TargetTruth& target, const ScenarioConfig& cfg) {
    const double four_pi_cubed = std::pow(4.0 * std::numbers::pi, 3);
    return std::sqrt(target.rcs_m2 * kSpeedOfLight * kSpeedOfLight /
                     (four_pi_cubed * std::pow(target.range_m, 4) * cfg.fc * cfg.fc));
}

inline TargetLink derive_link(const TargetTruth& target, const ScenarioConfig& cfg,
                              double phase_rad = 0.0) {
    if (!(target.range_m > 0.0)) throw ConfigError("target range must be positive");
    if (!(target.rcs_m2 > 0.0)) throw ConfigError("target RCS must be positive");

    const double tau = 2.0 * target.range_m / kSpeedOfLight;
    const double fd = 2.0 * target.velocity_mps * cfg.fc / kSpeedOfLight;
    const int l = delay_tap(tau, cfg);
    if (l >= cfg.N) {
        throw DelayOutOfWindow("target at " + std::to_string(target.range_m) +
                               " m maps to tap " + std::to_string(l) +
                               ", outside the N=" + std::to_string(cfg.N) + " sample window");
    }
    return make_link(tau, fd, std::polar(reflection_magnitude(target, cfg), phase_rad), cfg);
}

inline std::vector<TargetLink> derive_links(std::span<const TargetTruth> targets,
                                            const ScenarioConfig& cfg,
                                            std::span<const double> phases = {}) {
    if (!phases.empty() && phases.size() != targets.size())
        throw DimensionMismatch("one phase per target required");
    std::vector<TargetLink> links;
    links.reserve(targets.size());
    for (std::size_t q = 0; q < targets.size(); ++q)
        links.push_back(derive_link(targets[q], cfg, phases.empty() ? 0.0 : phases[q]));
    return links;
}

/// Sensing SNR referenced to the weakest target, min_q |alpha_q|^2 / sigma^2.
inline double weakest_target_snr(std::span<const TargetLink> links, double sigma2) {
    if (links.empty() || sigma2 <= 0.0) return 0.0;
    double weakest = std::norm(links.front().alpha);
    for (const auto& link : links) weakest = std::min(weakest, std::norm(link.alpha));
    return weakest / sigma2;
}

/// Rescales every alpha by one common factor so the weakest target sits at
/// the requested SNR. Relative target strengths are unchanged.
inline void apply_snr_override(std::vector<TargetLink>& links, double sigma2, double snr_dB) {
    const double current = weakest_target_snr(links, sigma2);
    if (current <= 0.0) return;
    const double gain = std::sqrt(std::pow(10.0, snr_dB / 10.0) / current);
    for (auto& link : links) link.alpha *= gain;
}

/// Moves a target onto the integer delay tap and integer Doppler bin of cfg.
inline TargetTruth snap_to_grid(TargetTruth target, const ScenarioConfig& cfg) {
    const int l = delay_tap(2.0 * target.range_m / kSpeedOfLight, cfg);
    target.range_m = l * cfg.range_bin_m();
    const double fd = 2.0 * target.velocity_mps * cfg.fc / kSpeedOfLight;
    const double nu = std::round(fd / cfg.doppler_bin_hz());
    target.velocity_mps = nu * cfg.doppler_bin_hz() * kSpeedOfLight / (2.0 * cfg.fc);
    return target;
}

inline double range_from_delay(double tau_s) { return kSpeedOfLight * tau_s / 2.0; }

inline double velocity_from_doppler(double fd_hz, const ScenarioConfig& cfg) {
    return fd_hz * kSpeedOfLight / (2.0 * cfg.fc);
}

inline double to_dB(double x) { return 10.0 * std::log10(x); }
inline double from_dB(double x_dB) { return std::pow(10.0, x_dB / 10.0); }

}  // namespace beyondcp

#endif  // BEYONDCP_PARAMS_HPP
