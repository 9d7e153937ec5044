#ifndef BEYONDCP_EXPERIMENT_HPP
#define BEYONDCP_EXPERIMENT_HPP

/**
 * @file experiment.hpp
 * @brief Experiment schema, Monte-Carlo sweeps and estimation metrics.
 *
 * Every trial seeds its own generator from (seed, sweep_index, trial_index)
 * and per-trial results are reduced in trial order, so outputs do not depend
 * on the number of worker threads.
 */

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "beyondcp/analytics.hpp"
#include "beyondcp/echo.hpp"
#include "beyondcp/errors.hpp"
#include "beyondcp/esprit.hpp"
#include "beyondcp/io.hpp"
#include "beyondcp/params.hpp"
#include "beyondcp/rdm.hpp"
#include "beyondcp/sic.hpp"
#include "beyondcp/waveform.hpp"

namespace beyondcp {

enum class SweepAxis { CpLength, Iteration, Snr };

inline std::string axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::CpLength: return "cp_length";
        case SweepAxis::Iteration: return "iteration";
        case SweepAxis::Snr: return "snr";
    }
    return "";
}

inline SweepAxis parse_axis(const std::string& s) {
    if (s == "cp_length") return SweepAxis::CpLength;
    if (s == "iteration") return SweepAxis::Iteration;
    if (s == "snr") return SweepAxis::Snr;
    throw ConfigError("unknown sweep axis '" + s + "' (expected cp_length, iteration or snr)");
}

/// Per-trial random targets, uniform in both intervals.
struct TargetDraw {
    double range_min_m = 100.0;
    double range_max_m = 800.0;
    double velocity_min_mps = -150.0;
    double velocity_max_mps = 150.0;
    double rcs_m2 = 1.0;
    int count = 2;
};

struct Experiment {
    ScenarioConfig scenario;
    std::vector<TargetTruth> targets;
    SweepAxis axis = SweepAxis::CpLength;
    std::vector<double> values;
    std::vector<std::string> algorithms{"dft", "sic_dft", "esprit", "sic_esprit"};
    int trials = 1;
    std::uint64_t seed = 0;

    bool snap_to_grid = false;
    bool random_phase = true;
    std::optional<TargetDraw> target_draw;
    SicParams sic{};
    CfarParams cfar{};
    int esprit_n_sub = 0;  // 0 -> N/2
    int esprit_m_sub = 0;  // 0 -> M/2
    int q_model = 0;       // 0 -> number of true targets
    int threads = 0;       // 0 -> hardware concurrency; not part of the hash
};

inline bool known_algorithm(const std::string& a) {
    return a == "dft" || a == "sic_dft" || a == "esprit" || a == "sic_esprit";
}

inline bool has_algorithm(const Experiment& e, const std::string& a) {
    return std::find(e.algorithms.begin(), e.algorithms.end(), a) != e.algorithms.end();
}

inline std::vector<std::string> validate_experiment(const Experiment& e) {
    std::vector<std::string> errs = validate_config(e.scenario);
    if (e.trials < 1) errs.emplace_back("trials must be at least 1");
    for (std::size_t i = 1; i < e.values.size(); ++i)
        if (!(e.values[i] > e.values[i - 1])) {
            errs.emplace_back("sweep values must be strictly increasing");
            break;
        }
    for (const auto& a : e.algorithms)
        if (!known_algorithm(a)) errs.emplace_back("unknown algorithm '" + a + "'");
    if (e.targets.empty() && !e.target_draw) errs.emplace_back("no targets and no target_draw");
    for (const auto& t : e.targets) {
        if (!(t.range_m > 0.0)) errs.emplace_back("target range must be positive");
        if (!(t.rcs_m2 > 0.0)) errs.emplace_back("target RCS must be positive");
    }
    if (e.target_draw) {
        const auto& d = *e.target_draw;
        if (!(d.range_min_m > 0.0 && d.range_max_m > d.range_min_m))
            errs.emplace_back("target_draw range interval invalid");
        if (!(d.velocity_max_mps >= d.velocity_min_mps))
            errs.emplace_back("target_draw velocity interval invalid");
        if (d.count < 1) errs.emplace_back("target_draw count must be at least 1");
    }
    if (e.sic.k_max < 0) errs.emplace_back("sic.k_max must be non-negative");
    if (!(e.sic.delta_th > 0.0)) errs.emplace_back("sic.delta_th must be positive");
    if (e.axis == SweepAxis::CpLength)
        for (double v : e.values)
            if (v < 0 || v > e.scenario.N || v != std::floor(v))
                errs.emplace_back("cp_length values must be integers in [0, N]");
    if (e.axis == SweepAxis::Iteration)
        for (double v : e.values)
            if (v < 0 || v != std::floor(v)) errs.emplace_back("iteration values must be non-negative integers");
    return errs;
}

inline void require_valid(const Experiment& e) {
    auto errors = validate_experiment(e);
    if (errors.empty()) return;
    std::string msg = "invalid experiment:";
    for (const auto& s : errors) msg += "\n  - " + s;
    throw ConfigError(msg);
}

inline Json to_json(const Experiment& e) {
    Json targets = Json::array();
    for (const auto& t : e.targets) targets.push_back(to_json(t));
    Json j{{"scenario", to_json(e.scenario)},
           {"targets", targets},
           {"sweep", {{"axis", axis_name(e.axis)}, {"values", e.values}}},
           {"algorithms", e.algorithms},
           {"trials", e.trials},
           {"seed", e.seed},
           {"snap_to_grid", e.snap_to_grid},
           {"random_phase", e.random_phase},
           {"sic", {{"delta_th", e.sic.delta_th}, {"k_max", e.sic.k_max}, {"debias", e.sic.debias}}},
           {"cfar",
            {{"pfa", e.cfar.pfa},
             {"guard", e.cfar.guard},
             {"training", e.cfar.training},
             {"max_targets", e.cfar.max_targets}}},
           {"esprit", {{"n_sub", e.esprit_n_sub}, {"m_sub", e.esprit_m_sub}, {"q_model", e.q_model}}}};
    if (e.target_draw) {
        const auto& d = *e.target_draw;
        j["target_draw"] = {{"range_m", {d.range_min_m, d.range_max_m}},
                            {"velocity_mps", {d.velocity_min_mps, d.velocity_max_mps}},
                            {"rcs_m2", d.rcs_m2},
                            {"count", d.count}};
    } else {
        j["target_draw"] = nullptr;
    }
    return j;
}

inline Experiment experiment_from_json(const Json& j) {
    using detail::read_opt;
    using detail::reject_unknown_keys;
    reject_unknown_keys(j,
                        {"scenario", "targets", "sweep", "algorithms", "trials", "seed",
                         "snap_to_grid", "random_phase", "target_draw", "sic", "cfar", "esprit"},
                        "experiment");
    Experiment e;
    if (j.contains("scenario")) e.scenario = scenario_from_json(j.at("scenario"));
    if (j.contains("targets")) {
        if (!j.at("targets").is_array()) throw ConfigError("targets must be an array");
        for (const auto& t : j.at("targets")) e.targets.push_back(target_from_json(t));
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        reject_unknown_keys(s, {"axis", "values"}, "sweep");
        std::string axis = axis_name(e.axis);
        read_opt(s, "axis", axis, "sweep");
        e.axis = parse_axis(axis);
        read_opt(s, "values", e.values, "sweep");
    }
    read_opt(j, "algorithms", e.algorithms, "experiment");
    read_opt(j, "trials", e.trials, "experiment");
    read_opt(j, "seed", e.seed, "experiment");
    read_opt(j, "snap_to_grid", e.snap_to_grid, "experiment");
    read_opt(j, "random_phase", e.random_phase, "experiment");
    if (j.contains("target_draw") && !j.at("target_draw").is_null()) {
        const auto& d = j.at("target_draw");
        reject_unknown_keys(d, {"range_m", "velocity_mps", "rcs_m2", "count"}, "target_draw");
        TargetDraw td;
        std::vector<double> r{td.range_min_m, td.range_max_m}, v{td.velocity_min_mps, td.velocity_max_mps};
        read_opt(d, "range_m", r, "target_draw");
        read_opt(d, "velocity_mps", v, "target_draw");
        if (r.size() != 2 || v.size() != 2) throw ConfigError("target_draw intervals need two values");
        td.range_min_m = r[0];
        td.range_max_m = r[1];
        td.velocity_min_mps = v[0];
        td.velocity_max_mps = v[1];
        read_opt(d, "rcs_m2", td.rcs_m2, "target_draw");
        read_opt(d, "count", td.count, "target_draw");
        e.target_draw = td;
    }
    if (j.contains("sic")) {
        const auto& s = j.at("sic");
        reject_unknown_keys(s, {"delta_th", "k_max", "debias"}, "sic");
        read_opt(s, "delta_th", e.sic.delta_th, "sic");
        read_opt(s, "k_max", e.sic.k_max, "sic");
        read_opt(s, "debias", e.sic.debias, "sic");
    }
    if (j.contains("cfar")) {
        const auto& c = j.at("cfar");
        reject_unknown_keys(c, {"pfa", "guard", "training", "max_targets"}, "cfar");
        read_opt(c, "pfa", e.cfar.pfa, "cfar");
        read_opt(c, "guard", e.cfar.guard, "cfar");
        read_opt(c, "training", e.cfar.training, "cfar");
        read_opt(c, "max_targets", e.cfar.max_targets, "cfar");
    }
    if (j.contains("esprit")) {
        const auto& s = j.at("esprit");
        reject_unknown_keys(s, {"n_sub", "m_sub", "q_model"}, "esprit");
        read_opt(s, "n_sub", e.esprit_n_sub, "esprit");
        read_opt(s, "m_sub", e.esprit_m_sub, "esprit");
        read_opt(s, "q_model", e.q_model, "esprit");
    }
    return e;
}

inline Experiment load_experiment(const std::string& path) {
    return experiment_from_json(read_json_file(path));
}

inline std::string experiment_hash(const Experiment& e) { return config_hash(to_json(e)); }

// ---------------------------------------------------------------- execution

/// Runs f(i) for i in [0, n) on a small thread pool; rethrows the first error.
template <class F>
void parallel_for(int n, F&& f, int threads = 0) {
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, std::max(n, 1));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline std::mt19937_64 trial_rng(std::uint64_t base, std::size_t sweep_index, std::size_t trial_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                      static_cast<std::uint32_t>(sweep_index), static_cast<std::uint32_t>(trial_index)};
    std::array<std::uint64_t, 1> out{};
    seq.generate(reinterpret_cast<std::uint32_t*>(out.data()),
                 reinterpret_cast<std::uint32_t*>(out.data()) + 2);
    return std::mt19937_64(out[0]);
}

/// Random quantities of one trial, shared by every receiver and CP variant.
struct TrialScene {
    std::vector<TargetTruth> targets;
    std::vector<double> phases;
    SymbolFrame S;
    CMatrix Z_unit;  // CN(0, 1)
};

template <class Rng>
TrialScene draw_scene(const Experiment& e, const Constellation& con, Rng& rng) {
    TrialScene sc;
    if (e.target_draw) {
        const auto& d = *e.target_draw;
        std::uniform_real_distribution<double> r(d.range_min_m, d.range_max_m);
        std::uniform_real_distribution<double> v(d.velocity_min_mps, d.velocity_max_mps);
        for (int q = 0; q < d.count; ++q) {
            const double range = r(rng);
            sc.targets.push_back({range, v(rng), d.rcs_m2});
        }
    } else {
        sc.targets = e.targets;
    }
    std::uniform_real_distribution<double> ph(0.0, kTwoPi);
    for (std::size_t q = 0; q < sc.targets.size(); ++q)
        sc.phases.push_back(e.random_phase ? ph(rng) : 0.0);
    sc.S = gen_frame(e.scenario, con, rng);
    sc.Z_unit = complex_gaussian(e.scenario.N, e.scenario.M, 1.0, rng);
    return sc;
}

/// Links of a scene under cfg (snapped per cfg when requested), SNR override applied.
inline std::vector<TargetLink> scene_links(const Experiment& e, const ScenarioConfig& cfg,
                                           const TrialScene& sc, double sigma2) {
    std::vector<TargetTruth> t = sc.targets;
    if (e.snap_to_grid)
        for (auto& x : t) x = snap_to_grid(x, cfg);
    auto links = derive_links(t, cfg, sc.phases);
    if (cfg.snr_override_dB) apply_snr_override(links, sigma2, *cfg.snr_override_dB);
    return links;
}

/// Index of the target with the weakest mainlobe |alpha~|.
inline std::size_t reference_target(std::span<const TargetLink> links) {
    std::size_t best = 0;
    for (std::size_t q = 1; q < links.size(); ++q)
        if (std::norm(effective_alpha(links[q])) < std::norm(effective_alpha(links[best]))) best = q;
    return best;
}

struct RdmProbe {
    double peak = 0.0;      // |chi|^2 at the reference target bin
    double sidelobe = 0.0;  // max |chi|^2 outside all target bins
};

inline RdmProbe probe_rdm(const CMatrix& Y, const SymbolFrame& S, const ScenarioConfig& cfg,
                          std::span<const TargetLink> links) {
    const RangeDopplerMap rdm = compute_rdm(Y, S, cfg);
    std::vector<std::pair<int, int>> bins;
    for (const auto& l : links) bins.push_back(grid_bin(l.tau_s, l.fd_hz, cfg));
    RdmProbe p;
    if (!links.empty()) {
        const auto& b = bins[reference_target(links)];
        p.peak = rdm.power(b.first, b.second);
    }
    p.sidelobe = peak_sidelobe_power(rdm, bins);
    return p;
}

inline double safe_dB(double num, double den) {
    return to_dB(std::max(num, 1e-300) / std::max(den, 1e-300));
}

inline EspritParams esprit_params(const Experiment& e, const ScenarioConfig& cfg, int q_true) {
    EspritParams p;
    p.q_model = e.q_model > 0 ? e.q_model : q_true;
    if (e.esprit_n_sub > 0 && e.esprit_m_sub > 0) p.plan = {cfg.N, cfg.M, e.esprit_n_sub, e.esprit_m_sub};
    return p;
}

/// The single seeded frame behind the one-shot CLI commands (trial 0 of point 0).
struct SimulatedFrame {
    ScenarioConfig cfg;
    TrialScene scene;
    std::vector<TargetLink> links;
    EchoComponents echo;
    double sigma2 = 0.0;
};

inline SimulatedFrame simulate_frame(const Experiment& e) {
    require_valid(e);
    SimulatedFrame f;
    f.cfg = e.scenario;
    f.sigma2 = noise_power(f.cfg);
    auto rng = trial_rng(e.seed, 0, 0);
    f.scene = draw_scene(e, make_constellation(f.cfg.constellation), rng);
    f.links = scene_links(e, f.cfg, f.scene, f.sigma2);
    f.echo = synth_components(f.cfg, f.links, f.scene.S);
    f.echo.Z = std::sqrt(f.sigma2) * f.scene.Z_unit;
    f.echo.refresh();
    return f;
}

// ---------------------------------------------------------------- metrics

struct RmseAccumulator {
    double range_sq = 0.0;
    double velocity_sq = 0.0;
    long count = 0;

    void merge(const RmseAccumulator& o) {
        range_sq += o.range_sq;
        velocity_sq += o.velocity_sq;
        count += o.count;
    }
    double range_rmse() const { return count ? std::sqrt(range_sq / count) : 0.0; }
    double velocity_rmse() const { return count ? std::sqrt(velocity_sq / count) : 0.0; }
};

struct RangeVelocity {
    double range_m = 0.0;
    double velocity_mps = 0.0;
};

inline double max_velocity_mps(const ScenarioConfig& cfg) {
    return kSpeedOfLight / (4.0 * cfg.fc * cfg.symbol_duration());
}

/**
 * Greedy nearest-neighbour matching in (range / max_range, velocity / max_velocity).
 * Every truth contributes one term; unmatched truths cost half the unambiguous
 * span on each axis.
 */
inline RmseAccumulator rmse(std::span<const RangeVelocity> estimates,
                            std::span<const RangeVelocity> truths, const ScenarioConfig& cfg) {
    if (truths.empty()) throw ConfigError("rmse needs at least one true target");
    const double r_max = unambiguous_ranges(cfg).max_range_m;
    const double v_max = max_velocity_mps(cfg);

    struct Pair {
        double d;
        std::size_t t, e;
    };
    std::vector<Pair> pairs;
    for (std::size_t t = 0; t < truths.size(); ++t)
        for (std::size_t k = 0; k < estimates.size(); ++k) {
            const double dr = (estimates[k].range_m - truths[t].range_m) / r_max;
            const double dv = (estimates[k].velocity_mps - truths[t].velocity_mps) / v_max;
            pairs.push_back({dr * dr + dv * dv, t, k});
        }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });

    std::vector<bool> t_used(truths.size()), e_used(estimates.size());
    RmseAccumulator acc;
    for (const auto& p : pairs) {
        if (t_used[p.t] || e_used[p.e]) continue;
        t_used[p.t] = e_used[p.e] = true;
        const double dr = estimates[p.e].range_m - truths[p.t].range_m;
        const double dv = estimates[p.e].velocity_mps - truths[p.t].velocity_mps;
        acc.range_sq += dr * dr;
        acc.velocity_sq += dv * dv;
        ++acc.count;
    }
    for (std::size_t t = 0; t < truths.size(); ++t)
        if (!t_used[t]) {
            acc.range_sq += 0.25 * r_max * r_max;
            acc.velocity_sq += v_max * v_max;  // half of the 2 v_max span
            ++acc.count;
        }
    return acc;
}

inline std::vector<RangeVelocity> to_range_velocity(std::span<const TargetEstimate> est,
                                                    const ScenarioConfig& cfg) {
    std::vector<RangeVelocity> out;
    for (const auto& e : est) out.push_back({e.range_m(), velocity_from_doppler(e.fd_hz, cfg)});
    return out;
}

inline std::vector<RangeVelocity> to_range_velocity(std::span<const TargetLink> links,
                                                    const ScenarioConfig& cfg) {
    std::vector<RangeVelocity> out;
    for (const auto& l : links) out.push_back({range_from_delay(l.tau_s), velocity_from_doppler(l.fd_hz, cfg)});
    return out;
}

struct MetricsRow {
    double sweep_value = 0.0;
    std::string algorithm;
    double sinr_dB = 0.0;
    double pslr_dB = 0.0;
    std::optional<double> range_rmse_m;
    std::optional<double> velocity_rmse_mps;
    double mean_iterations = 0.0;
    double wall_time_s = 0.0;
    std::string config_hash;
};

struct CpSweepRow {
    int n_cp = 0;
    double sinr_theory_db = 0.0;
    double sinr_asymp_db = 0.0;
    double sinr_emp_db = 0.0;
    double pslr_theory_db = 0.0;
    double pslr_emp_db = 0.0;
    std::string config_hash;
};

/// Appends rows after checking they came from the same configuration.
template <class Row>
void append_rows(std::vector<Row>& dst, const std::vector<Row>& src) {
    for (const auto& r : src) {
        if (!dst.empty() && dst.front().config_hash != r.config_hash)
            throw ConfigError("refusing to aggregate rows from different configurations (" +
                              dst.front().config_hash + " vs " + r.config_hash + ")");
        dst.push_back(r);
    }
}

/// Receives one line per finished sweep point.
using ProgressFn = std::function<void(const std::string&)>;

// ---------------------------------------------------------------- sweeps

inline std::vector<CpSweepRow> sweep_cp_length(const Experiment& e, const ProgressFn& progress = {}) {
    require_valid(e);
    const auto con = make_constellation(e.scenario.constellation);
    const double m4 = mu4(con);
    const std::string hash = experiment_hash(e);
    std::vector<CpSweepRow> rows;

    for (std::size_t si = 0; si < e.values.size(); ++si) {
        ScenarioConfig cfg = e.scenario;
        cfg.N_cp = static_cast<int>(e.values[si]);
        const double sigma2 = noise_power(cfg);

        struct Trial {
            double free = 0, interf = 0, noise = 0, peak = 0, sidelobe = 0;
        };
        std::vector<Trial> out(e.trials);
        parallel_for(
            e.trials,
            [&](int t) {
                auto rng = trial_rng(e.seed, si, t);
                const TrialScene sc = draw_scene(e, con, rng);
                const auto links = scene_links(e, cfg, sc, sigma2);
                const CMatrix Yf = free_component(cfg, links, sc.S);
                const CMatrix D = interference_difference(cfg, links, sc.S);
                const CMatrix Z = std::sqrt(sigma2) * sc.Z_unit;
                const RdmProbe p = probe_rdm(Yf + D + Z, sc.S, cfg, links);
                out[t] = {Yf.squaredNorm(), D.squaredNorm(), Z.squaredNorm(), p.peak, p.sidelobe};
            },
            e.threads);

        Trial sum;
        for (const auto& t : out) {
            sum.free += t.free;
            sum.interf += t.interf;
            sum.noise += t.noise;
            sum.peak += t.peak;
            sum.sidelobe += t.sidelobe;
        }

        // Theory uses the nominal links (phase does not enter either formula).
        TrialScene nominal;
        nominal.targets = e.targets;
        nominal.phases.assign(e.targets.size(), 0.0);
        const auto links = scene_links(e, cfg, nominal, sigma2);
        const auto sinr = sinr_closed_form(cfg, links, sigma2);
        const auto sl = sidelobe_level(cfg, links, sigma2, m4);

        CpSweepRow r;
        r.n_cp = cfg.N_cp;
        r.sinr_theory_db = to_dB(sinr.sinr_exact);
        r.sinr_asymp_db = to_dB(sinr.sinr_asymptotic);
        r.sinr_emp_db = safe_dB(sum.free, sum.interf + sum.noise);
        r.pslr_theory_db = to_dB(sl.pslr_per_target[reference_target(links)]);
        r.pslr_emp_db = safe_dB(sum.sidelobe, sum.peak);
        r.config_hash = hash;
        rows.push_back(r);
        if (progress)
            progress("n_cp=" + std::to_string(r.n_cp) + " sinr_theory=" + fmt(r.sinr_theory_db, 3) +
                     " dB sinr_emp=" + fmt(r.sinr_emp_db, 3) + " dB pslr_theory=" +
                     fmt(r.pslr_theory_db, 3) + " dB pslr_emp=" + fmt(r.pslr_emp_db, 3) + " dB");
    }
    return rows;
}

struct IterationSweepResult {
    std::vector<MetricsRow> rows;
    // final truth-referenced SINR (dB) per trial for each SIC algorithm
    std::vector<double> final_sinr_sic_dft;
    std::vector<double> final_sinr_sic_esprit;
};

/**
 * Truth-referenced SINR ||Y_free||^2 / ||Y^k - Y_free||^2 and PSLR per SIC
 * iteration, plus a "sufficient_cp" bound from the same symbols and noise.
 * Curves of receivers that stop early are held at their last value.
 */
inline IterationSweepResult sweep_iterations(const Experiment& e, const ProgressFn& progress = {}) {
    require_valid(e);
    const auto con = make_constellation(e.scenario.constellation);
    const std::string hash = experiment_hash(e);
    const ScenarioConfig& cfg = e.scenario;
    ScenarioConfig suf = cfg;
    suf.N_cp = cfg.N;
    const double sigma2 = noise_power(cfg);

    std::vector<std::string> algos;
    for (const char* a : {"dft", "sic_dft", "esprit", "sic_esprit"})
        if (has_algorithm(e, a)) algos.emplace_back(a);
    int k_report = e.sic.k_max;
    for (double v : e.values) k_report = std::max(k_report, static_cast<int>(v));
    const auto nk = static_cast<std::size_t>(k_report) + 1;

    struct Curve {
        std::vector<double> signal, resid, peak, sidelobe;
        int iterations = 0;
    };
    struct Trial {
        std::vector<Curve> curves;
        double suf_signal = 0, suf_resid = 0, suf_peak = 0, suf_sidelobe = 0;
    };
    std::vector<Trial> out(e.trials);
    parallel_for(
        e.trials,
        [&](int t) {
            auto rng = trial_rng(e.seed, 0, t);
            const TrialScene sc = draw_scene(e, con, rng);
            const auto links = scene_links(e, cfg, sc, sigma2);
            auto ec = synth_components(cfg, links, sc.S);
            ec.Z = std::sqrt(sigma2) * sc.Z_unit;
            ec.refresh();

            Trial& tr = out[t];
            for (const auto& a : algos) {
                Curve c;
                auto obs = [&](int, const CMatrix& Yk) {
                    const RdmProbe p = probe_rdm(Yk, sc.S, cfg, links);
                    c.signal.push_back(ec.Y_free.squaredNorm());
                    c.resid.push_back((Yk - ec.Y_free).squaredNorm());
                    c.peak.push_back(p.peak);
                    c.sidelobe.push_back(p.sidelobe);
                };
                SicParams sp = e.sic;
                if (a == "dft" || a == "esprit") sp.k_max = 0;
                SicResult r;
                if (a == "dft" || a == "sic_dft")
                    r = sic_dft(ec.Y, sc.S, cfg, sp, e.cfar, obs);
                else
                    r = sic_esprit(ec.Y, sc.S, cfg, sp,
                                   esprit_params(e, cfg, static_cast<int>(links.size())), obs);
                c.iterations = r.iterations;
                while (c.signal.size() < nk) {
                    c.signal.push_back(c.signal.back());
                    c.resid.push_back(c.resid.back());
                    c.peak.push_back(c.peak.back());
                    c.sidelobe.push_back(c.sidelobe.back());
                }
                tr.curves.push_back(std::move(c));
            }

            const auto links_suf = scene_links(e, suf, sc, sigma2);
            const CMatrix Yf = free_component(suf, links_suf, sc.S);
            const CMatrix Z = std::sqrt(sigma2) * sc.Z_unit;
            const RdmProbe p = probe_rdm(Yf + Z, sc.S, suf, links_suf);
            tr.suf_signal = Yf.squaredNorm();
            tr.suf_resid = Z.squaredNorm();
            tr.suf_peak = p.peak;
            tr.suf_sidelobe = p.sidelobe;
        },
        e.threads);

    IterationSweepResult res;
    std::vector<double> values = e.values;
    if (values.empty())
        for (std::size_t k = 0; k < nk; ++k) values.push_back(static_cast<double>(k));

    for (double v : values) {
        const auto k = static_cast<std::size_t>(v);
        for (std::size_t a = 0; a < algos.size(); ++a) {
            double s = 0, r = 0, pk = 0, sl = 0, it = 0;
            for (const auto& tr : out) {
                const Curve& c = tr.curves[a];
                s += c.signal[k];
                r += c.resid[k];
                pk += c.peak[k];
                sl += c.sidelobe[k];
                it += c.iterations;
            }
            MetricsRow row;
            row.sweep_value = v;
            row.algorithm = algos[a];
            row.sinr_dB = safe_dB(s, r);
            row.pslr_dB = safe_dB(sl, pk);
            row.mean_iterations = it / e.trials;
            row.config_hash = hash;
            res.rows.push_back(row);
        }
        double s = 0, r = 0, pk = 0, sl = 0;
        for (const auto& tr : out) {
            s += tr.suf_signal;
            r += tr.suf_resid;
            pk += tr.suf_peak;
            sl += tr.suf_sidelobe;
        }
        MetricsRow row;
        row.sweep_value = v;
        row.algorithm = "sufficient_cp";
        row.sinr_dB = safe_dB(s, r);
        row.pslr_dB = safe_dB(sl, pk);
        row.config_hash = hash;
        res.rows.push_back(row);
        if (progress) {
            std::string line = "iter=" + std::to_string(k);
            for (auto it = res.rows.end() - static_cast<long>(algos.size()) - 1; it != res.rows.end(); ++it)
                line += " " + it->algorithm + "=" + fmt(it->sinr_dB, 2) + "dB/" + fmt(it->pslr_dB, 2) + "dB";
            progress(line);
        }
    }

    for (std::size_t a = 0; a < algos.size(); ++a) {
        auto* dst = algos[a] == "sic_dft" ? &res.final_sinr_sic_dft
                    : algos[a] == "sic_esprit" ? &res.final_sinr_sic_esprit
                                               : nullptr;
        if (!dst) continue;
        for (const auto& tr : out) {
            const Curve& c = tr.curves[a];
            const auto last = static_cast<std::size_t>(c.iterations);
            dst->push_back(safe_dB(c.signal[last], c.resid[last]));
        }
    }
    return res;
}

/**
 * Range / velocity RMSE per SNR point. Standard-CP receivers are the listed
 * algorithms; "dft_sufficient_cp" / "esprit_sufficient_cp" references run on
 * the same draws with N_cp = N.
 */
inline std::vector<MetricsRow> sweep_snr_rmse(const Experiment& e, const ProgressFn& progress = {}) {
    require_valid(e);
    const auto con = make_constellation(e.scenario.constellation);
    const std::string hash = experiment_hash(e);

    struct Job {
        std::string name;
        bool sufficient;
        bool esprit;
        bool sic;
    };
    std::vector<Job> jobs;
    for (const char* a : {"dft", "esprit", "sic_dft", "sic_esprit"})
        if (has_algorithm(e, a)) {
            const std::string s = a;
            jobs.push_back({s, false, s.find("esprit") != std::string::npos, s.rfind("sic", 0) == 0});
        }
    if (has_algorithm(e, "dft")) jobs.push_back({"dft_sufficient_cp", true, false, false});
    if (has_algorithm(e, "esprit")) jobs.push_back({"esprit_sufficient_cp", true, true, false});

    std::vector<MetricsRow> rows;
    for (std::size_t si = 0; si < e.values.size(); ++si) {
        ScenarioConfig cfg = e.scenario;
        cfg.snr_override_dB = e.values[si];
        ScenarioConfig suf = cfg;
        suf.N_cp = cfg.N;
        const double sigma2 = noise_power(cfg);

        struct Trial {
            std::vector<RmseAccumulator> acc;
            std::vector<int> iterations;
        };
        std::vector<Trial> out(e.trials);
        parallel_for(
            e.trials,
            [&](int t) {
                auto rng = trial_rng(e.seed, si, t);
                const TrialScene sc = draw_scene(e, con, rng);
                const CMatrix Z = std::sqrt(sigma2) * sc.Z_unit;
                std::vector<TargetLink> links[2] = {scene_links(e, cfg, sc, sigma2),
                                                    scene_links(e, suf, sc, sigma2)};
                CMatrix Y[2];
                for (int v = 0; v < 2; ++v) {
                    const ScenarioConfig& c = v ? suf : cfg;
                    auto ec = synth_components(c, links[v], sc.S);
                    ec.Z = Z;
                    ec.refresh();
                    Y[v] = std::move(ec.Y);
                }
                Trial& tr = out[t];
                for (const auto& j : jobs) {
                    const int v = j.sufficient ? 1 : 0;
                    const ScenarioConfig& c = v ? suf : cfg;
                    SicParams sp = e.sic;
                    if (!j.sic) sp.k_max = 0;
                    const SicResult r =
                        j.esprit ? sic_esprit(Y[v], sc.S, c, sp,
                                              esprit_params(e, c, static_cast<int>(links[v].size())))
                                 : sic_dft(Y[v], sc.S, c, sp, e.cfar);
                    const auto est = to_range_velocity(r.estimates, c);
                    const auto truth = to_range_velocity(links[v], c);
                    tr.acc.push_back(rmse(est, truth, c));
                    tr.iterations.push_back(r.iterations);
                }
            },
            e.threads);

        for (std::size_t j = 0; j < jobs.size(); ++j) {
            RmseAccumulator acc;
            double it = 0;
            for (const auto& tr : out) {
                acc.merge(tr.acc[j]);
                it += tr.iterations[j];
            }
            MetricsRow row;
            row.sweep_value = e.values[si];
            row.algorithm = jobs[j].name;
            row.range_rmse_m = acc.range_rmse();
            row.velocity_rmse_mps = acc.velocity_rmse();
            row.mean_iterations = it / e.trials;
            row.config_hash = hash;
            rows.push_back(row);
        }
        if (progress) {
            std::string line = "snr=" + fmt(e.values[si], 1) + "dB";
            for (auto it = rows.end() - static_cast<long>(jobs.size()); it != rows.end(); ++it)
                line += " " + it->algorithm + "=" + fmt(*it->range_rmse_m, 2) + "m/" +
                        fmt(*it->velocity_rmse_mps, 2) + "mps";
            progress(line);
        }
    }
    return rows;
}

struct RdmComparison {
    struct Map {
        std::string name;
        RangeDopplerMap rdm;
        double median_floor = 0.0;  // median |chi|^2 outside the target bins
        bool peaks_present = false;
    };
    std::vector<Map> maps;  // sic_dft_standard_cp, dft_standard_cp, dft_sufficient_cp
    std::vector<TargetLink> links;
    std::string config_hash;
};

inline double median_floor(const RangeDopplerMap& rdm, std::span<const std::pair<int, int>> bins) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(rdm.N()) * rdm.M());
    for (int j = 0; j < rdm.M(); ++j)
        for (int i = 0; i < rdm.N(); ++i) {
            const bool skip = std::any_of(bins.begin(), bins.end(), [&](const auto& b) {
                return rdm.row(b.first) == i && rdm.column(b.second) == j;
            });
            if (!skip) v.push_back(std::norm(rdm.chi(i, j)));
        }
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

/// One seeded frame, three maps. A peak counts as present when its bin is
/// the 3x3 local maximum and at least 10 dB above the median floor.
inline RdmComparison rdm_compare(const Experiment& e) {
    const SimulatedFrame f = simulate_frame(e);
    const ScenarioConfig& cfg = f.cfg;
    const TrialScene& sc = f.scene;
    ScenarioConfig suf = cfg;
    suf.N_cp = cfg.N;

    RdmComparison out;
    out.config_hash = experiment_hash(e);
    out.links = f.links;
    const auto links_suf = scene_links(e, suf, sc, f.sigma2);
    const SicResult sic = sic_dft(f.echo.Y, sc.S, cfg, e.sic, e.cfar);
    const CMatrix Y_suf = free_component(suf, links_suf, sc.S) + f.echo.Z;

    auto make = [&](const std::string& name, const CMatrix& Y, const ScenarioConfig& c,
                    std::span<const TargetLink> links) {
        RdmComparison::Map m;
        m.name = name;
        m.rdm = compute_rdm(Y, sc.S, c);
        std::vector<std::pair<int, int>> bins;
        for (const auto& l : links) bins.push_back(grid_bin(l.tau_s, l.fd_hz, c));
        m.median_floor = median_floor(m.rdm, bins);
        m.peaks_present = true;
        for (const auto& b : bins) {
            const double p = m.rdm.power(b.first, b.second);
            bool is_max = p > 10.0 * m.median_floor;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    if ((di || dj) && m.rdm.power(b.first + di, b.second + dj) > p) is_max = false;
            m.peaks_present = m.peaks_present && is_max;
        }
        out.maps.push_back(std::move(m));
    };
    make("sic_dft_standard_cp", sic.Y_free, cfg, out.links);
    make("dft_standard_cp", f.echo.Y, cfg, out.links);
    make("dft_sufficient_cp", Y_suf, suf, links_suf);
    return out;
}

// ---------------------------------------------------------------- CSV

inline void write_cp_sweep_csv(std::ostream& os, const std::vector<CpSweepRow>& rows) {
    os << "n_cp,sinr_theory_db,sinr_asymp_db,sinr_emp_db,pslr_theory_db,pslr_emp_db,config_hash\n";
    for (const auto& r : rows)
        os << r.n_cp << ',' << fmt(r.sinr_theory_db) << ',' << fmt(r.sinr_asymp_db) << ','
           << fmt(r.sinr_emp_db) << ',' << fmt(r.pslr_theory_db) << ',' << fmt(r.pslr_emp_db) << ','
           << r.config_hash << '\n';
}

inline void write_iteration_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << "iter,algo,sinr_db,pslr_db,config_hash\n";
    for (const auto& r : rows)
        os << static_cast<int>(r.sweep_value) << ',' << r.algorithm << ',' << fmt(r.sinr_dB) << ','
           << fmt(r.pslr_dB) << ',' << r.config_hash << '\n';
}

inline void write_snr_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << "snr_db,algo,range_rmse_m,vel_rmse_mps,config_hash\n";
    for (const auto& r : rows)
        os << fmt(r.sweep_value, 3) << ',' << r.algorithm << ',' << fmt(r.range_rmse_m.value_or(0.0))
           << ',' << fmt(r.velocity_rmse_mps.value_or(0.0)) << ',' << r.config_hash << '\n';
}

inline Json to_json(const CpSweepRow& r) {
    return {{"n_cp", r.n_cp},
            {"sinr_theory_db", r.sinr_theory_db},
            {"sinr_asymp_db", r.sinr_asymp_db},
            {"sinr_emp_db", r.sinr_emp_db},
            {"pslr_theory_db", r.pslr_theory_db},
            {"pslr_emp_db", r.pslr_emp_db},
            {"config_hash", r.config_hash}};
}

/// wall_time_s is left out so that outputs stay reproducible.
inline Json to_json(const MetricsRow& r) {
    Json j{{"sweep_value", r.sweep_value},
           {"algorithm", r.algorithm},
           {"sinr_dB", r.sinr_dB},
           {"pslr_dB", r.pslr_dB},
           {"mean_iterations", r.mean_iterations},
           {"config_hash", r.config_hash}};
    j["range_rmse_m"] = r.range_rmse_m ? Json(*r.range_rmse_m) : Json(nullptr);
    j["velocity_rmse_mps"] = r.velocity_rmse_mps ? Json(*r.velocity_rmse_mps) : Json(nullptr);
    return j;
}

}  // namespace beyondcp

#endif  // BEYONDCP_EXPERIMENT_HPP
