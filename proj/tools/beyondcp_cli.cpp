// Command-line front end: validate, simulate, analyze, rdm, sic-dft, sic-esprit, sweep.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "beyondcp/beyondcp.hpp"

using namespace beyondcp;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    std::string format = "csv";
    std::string axis;
    int threads = 0;
};

Experiment load(const Options& o) {
    Experiment e = load_experiment(o.config);
    if (o.trials) e.trials = *o.trials;
    if (o.seed) e.seed = *o.seed;
    if (!o.axis.empty()) e.axis = parse_axis(o.axis);
    e.threads = o.threads;
    require_valid(e);
    return e;
}

/// Writes <out>/<name> when --out is given, otherwise prints to stdout.
void emit(const Options& o, const std::string& name, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    std::filesystem::create_directories(o.out);
    const auto path = (std::filesystem::path(o.out) / name).string();
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write output file '" + path + "'");
    f << text;
    std::cerr << "wrote " << path << '\n';
}

std::string ext(const Options& o) { return o.format == "json" ? ".json" : ".csv"; }

void progress(const std::string& line) { std::cerr << line << '\n'; }

int cmd_validate(const Options& o) {
    const Experiment e = load(o);
    const auto r = unambiguous_ranges(e.scenario);
    std::cout << "ok config_hash=" << experiment_hash(e) << " isi_free_range_m=" << fmt(r.isi_free_range_m, 2)
              << " max_range_m=" << fmt(r.max_range_m, 2) << '\n';
    return 0;
}

int cmd_simulate(const Options& o) {
    const Experiment e = load(o);
    const SimulatedFrame f = simulate_frame(e);
    const std::string hash = experiment_hash(e);
    if (o.format == "json") {
        Json j{{"config_hash", hash},
               {"symbols", matrix_envelope(f.scene.S, "S", hash)},
               {"echo", matrix_envelope(f.echo.Y, "Y", hash)}};
        emit(o, "frame.json", j.dump(1) + "\n");
        return 0;
    }
    std::ostringstream y, s;
    write_matrix_csv(y, f.echo.Y);
    emit(o, "echo.csv", y.str());
    if (!o.out.empty()) {
        write_frame_csv(s, f.scene.S);
        emit(o, "symbols.csv", s.str());
    }
    return 0;
}

int cmd_analyze(const Options& o) {
    const Experiment e = load(o);
    const ScenarioConfig& cfg = e.scenario;
    const double sigma2 = noise_power(cfg);
    TrialScene nominal;
    nominal.targets = e.targets;
    nominal.phases.assign(e.targets.size(), 0.0);
    const auto links = scene_links(e, cfg, nominal, sigma2);
    const auto sinr = sinr_closed_form(cfg, links, sigma2);
    const auto sl = sidelobe_level(cfg, links, sigma2, mu4(make_constellation(cfg.constellation)));
    const auto r = unambiguous_ranges(cfg);

    Json targets = Json::array();
    for (std::size_t q = 0; q < links.size(); ++q)
        targets.push_back({{"tau_s", links[q].tau_s},
                           {"fd_hz", links[q].fd_hz},
                           {"delay_tap", links[q].l},
                           {"rho", links[q].rho},
                           {"pslr_dB", to_dB(sl.pslr_per_target[q])}});
    Json j{{"config_hash", experiment_hash(e)},
           {"noise_power_W", sigma2},
           {"isi_free_range_m", r.isi_free_range_m},
           {"max_range_m", r.max_range_m},
           {"sinr_dB", to_dB(sinr.sinr_exact)},
           {"sinr_asymptotic_dB", to_dB(sinr.sinr_asymptotic)},
           {"sidelobe_power_W", sl.sigma_sl_sq},
           {"targets", targets}};
    emit(o, "analysis.json", j.dump(1) + "\n");
    return 0;
}

/// Standard-CP map on stdout; with --out, the SIC-DFT / DFT / sufficient-CP trio.
int cmd_rdm(const Options& o) {
    const Experiment e = load(o);
    const RdmComparison cmp = rdm_compare(e);
    for (const auto& m : cmp.maps) {
        std::cerr << m.name << " median_floor=" << fmt(to_dB(m.median_floor), 2)
                  << "dB peaks_present=" << (m.peaks_present ? "yes" : "no") << '\n';
        if (o.out.empty() && m.name != "dft_standard_cp") continue;
        std::ostringstream os;
        if (o.format == "json") {
            Json j = matrix_envelope(m.rdm.chi, m.name, cmp.config_hash);
            j["doppler_bins"] = Json::array();
            for (int c = 0; c < m.rdm.M(); ++c) j["doppler_bins"].push_back(m.rdm.doppler_bin(c));
            os << j.dump(1) << '\n';
        } else {
            write_rdm_csv(os, m.rdm, cmp.config_hash);
        }
        emit(o, "rdm_" + m.name + ext(o), os.str());
    }
    return 0;
}

int cmd_sic(const Options& o, bool use_esprit) {
    const Experiment e = load(o);
    const SimulatedFrame f = simulate_frame(e);
    const SicResult r =
        use_esprit ? sic_esprit(f.echo.Y, f.scene.S, f.cfg, e.sic,
                                esprit_params(e, f.cfg, static_cast<int>(f.links.size())))
                   : sic_dft(f.echo.Y, f.scene.S, f.cfg, e.sic, e.cfar);
    const std::string hash = experiment_hash(e);
    if (!r.warning.empty()) std::cerr << "warning: " << r.warning << '\n';
    for (const auto& t : r.trace)
        std::cerr << "iter=" << t.iteration << " sinr=" << fmt(t.sinr_dB, 2) << "dB pslr=" << fmt(t.pslr_dB, 2)
                  << "dB delta=" << fmt(t.energy_delta, 6) << '\n';

    std::ostringstream os;
    if (o.format == "json") {
        Json trace = Json::array();
        for (const auto& t : r.trace)
            trace.push_back({{"iteration", t.iteration},
                             {"sinr_dB", t.sinr_dB},
                             {"pslr_dB", t.pslr_dB},
                             {"energy_delta", t.energy_delta}});
        Json j{{"config_hash", hash},
               {"iterations", r.iterations},
               {"converged", r.converged},
               {"estimates", estimates_json(r.estimates, f.cfg)},
               {"truth", Json::array()},
               {"trace", trace}};
        for (const auto& rv : to_range_velocity(f.links, f.cfg))
            j["truth"].push_back({{"range_m", rv.range_m}, {"velocity_mps", rv.velocity_mps}});
        os << j.dump(1) << '\n';
    } else {
        write_trace_csv(os, r.trace, hash);
    }
    emit(o, std::string(use_esprit ? "sic_esprit" : "sic_dft") + ext(o), os.str());
    return 0;
}

int cmd_sweep(const Options& o) {
    const Experiment e = load(o);
    std::ostringstream os;
    const bool json = o.format == "json";
    Json rows = Json::array();
    switch (e.axis) {
        case SweepAxis::CpLength: {
            const auto r = sweep_cp_length(e, progress);
            if (json)
                for (const auto& x : r) rows.push_back(to_json(x));
            else
                write_cp_sweep_csv(os, r);
            break;
        }
        case SweepAxis::Iteration: {
            const auto r = sweep_iterations(e, progress);
            if (json)
                for (const auto& x : r.rows) rows.push_back(to_json(x));
            else
                write_iteration_csv(os, r.rows);
            break;
        }
        case SweepAxis::Snr: {
            const auto r = sweep_snr_rmse(e, progress);
            if (json)
                for (const auto& x : r) rows.push_back(to_json(x));
            else
                write_snr_csv(os, r);
            break;
        }
    }
    if (json) os << Json{{"axis", axis_name(e.axis)}, {"rows", rows}}.dump(1) << '\n';
    emit(o, axis_name(e.axis) + "_sweep" + ext(o), os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Beyond-CP OFDM sensing simulator"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Experiment JSON file")->required();
        sub->add_option("--out", o.out, "Output directory (stdout if omitted)");
        sub->add_option("--seed", o.seed, "Override the experiment seed");
        sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
    };

    auto* validate = app.add_subcommand("validate", "Check a configuration");
    auto* simulate = app.add_subcommand("simulate", "Write one received frame");
    auto* analyze = app.add_subcommand("analyze", "Closed-form SINR and sidelobe report");
    auto* rdm = app.add_subcommand("rdm", "Write the range-Doppler map of one frame");
    auto* sic_dft_cmd = app.add_subcommand("sic-dft", "Run SIC with the DFT/CFAR estimator");
    auto* sic_esprit_cmd = app.add_subcommand("sic-esprit", "Run SIC with the 2D ESPRIT estimator");
    auto* sweep = app.add_subcommand("sweep", "Monte-Carlo sweep");
    for (auto* s : {validate, simulate, analyze, rdm, sic_dft_cmd, sic_esprit_cmd, sweep}) add_common(s);
    sweep->add_option("--trials", o.trials, "Override the number of trials")->check(CLI::PositiveNumber);
    sweep->add_option("--axis", o.axis, "Sweep axis")->check(CLI::IsMember({"cp_length", "iteration", "snr"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 1;
    }

    try {
        if (validate->parsed()) return cmd_validate(o);
        if (simulate->parsed()) return cmd_simulate(o);
        if (analyze->parsed()) return cmd_analyze(o);
        if (rdm->parsed()) return cmd_rdm(o);
        if (sic_dft_cmd->parsed()) return cmd_sic(o, false);
        if (sic_esprit_cmd->parsed()) return cmd_sic(o, true);
        if (sweep->parsed()) return cmd_sweep(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
