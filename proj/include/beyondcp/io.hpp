#ifndef BEYONDCP_IO_HPP
#define BEYONDCP_IO_HPP

// JSON (de)serialization, config hashing and CSV/JSON exporters.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "beyondcp/echo.hpp"
#include "beyondcp/errors.hpp"
#include "beyondcp/params.hpp"
#include "beyondcp/rdm.hpp"
#include "beyondcp/sic.hpp"

namespace beyondcp {

using Json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read_opt(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

}  // namespace detail

inline Json to_json(const ScenarioConfig& c) {
    Json j{{"fc", c.fc},
           {"delta_f", c.delta_f},
           {"N", c.N},
           {"M", c.M},
           {"N_cp", c.N_cp},
           {"noise_figure_dB", c.noise_figure_dB},
           {"T_temp", c.T_temp},
           {"constellation", c.constellation},
           {"seed", c.seed}};
    j["snr_override_dB"] = c.snr_override_dB ? Json(*c.snr_override_dB) : Json(nullptr);
    return j;
}

inline ScenarioConfig scenario_from_json(const Json& j) {
    const std::string where = "scenario";
    detail::reject_unknown_keys(j,
                                {"fc", "delta_f", "N", "M", "N_cp", "noise_figure_dB", "T_temp",
                                 "constellation", "seed", "snr_override_dB"},
                                where);
    ScenarioConfig c;
    detail::read_opt(j, "fc", c.fc, where);
    detail::read_opt(j, "delta_f", c.delta_f, where);
    detail::read_opt(j, "N", c.N, where);
    detail::read_opt(j, "M", c.M, where);
    detail::read_opt(j, "N_cp", c.N_cp, where);
    detail::read_opt(j, "noise_figure_dB", c.noise_figure_dB, where);
    detail::read_opt(j, "T_temp", c.T_temp, where);
    detail::read_opt(j, "constellation", c.constellation, where);
    detail::read_opt(j, "seed", c.seed, where);
    if (j.contains("snr_override_dB") && !j.at("snr_override_dB").is_null()) {
        double v = 0.0;
        detail::read_opt(j, "snr_override_dB", v, where);
        c.snr_override_dB = v;
    }
    return c;
}

inline Json to_json(const TargetTruth& t) {
    return {{"range_m", t.range_m}, {"velocity_mps", t.velocity_mps}, {"rcs_m2", t.rcs_m2}};
}

inline TargetTruth target_from_json(const Json& j) {
    const std::string where = "target";
    detail::reject_unknown_keys(j, {"range_m", "velocity_mps", "rcs_m2"}, where);
    TargetTruth t;
    if (!j.contains("range_m")) throw ConfigError("target.range_m is required");
    detail::read_opt(j, "range_m", t.range_m, where);
    detail::read_opt(j, "velocity_mps", t.velocity_mps, where);
    detail::read_opt(j, "rcs_m2", t.rcs_m2, where);
    return t;
}

/// 64-bit FNV-1a as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Hash of the canonical (sorted-key, compact) dump.
inline std::string config_hash(const Json& j) { return fnv1a_hex(j.dump()); }

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("malformed JSON in '" + path + "': " + e.what());
    }
}

inline std::string fmt(double v, int digits = 6) {
    if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// One row per entry: n, m, re, im.
inline void write_matrix_csv(std::ostream& os, const CMatrix& X) {
    os << "n,m,re,im\n";
    for (Eigen::Index m = 0; m < X.cols(); ++m)
        for (Eigen::Index n = 0; n < X.rows(); ++n) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%ld,%ld,%.17g,%.17g\n", static_cast<long>(n),
                          static_cast<long>(m), X(n, m).real(), X(n, m).imag());
            os << buf;
        }
}

inline Json matrix_envelope(const CMatrix& X, const std::string& name, const std::string& hash) {
    std::vector<double> re(X.size()), im(X.size());
    for (Eigen::Index i = 0; i < X.size(); ++i) {
        re[i] = X.data()[i].real();
        im[i] = X.data()[i].imag();
    }
    return {{"name", name}, {"config_hash", hash}, {"rows", X.rows()}, {"cols", X.cols()},
            {"layout", "column-major"}, {"re", re}, {"im", im}};
}

/// |chi|^2 in dB; header row of centered Doppler bins, first column delay tap.
inline void write_rdm_csv(std::ostream& os, const RangeDopplerMap& rdm, const std::string& hash) {
    os << "# config_hash=" << hash << '\n' << "delay_bin";
    for (int j = 0; j < rdm.M(); ++j) os << ',' << rdm.doppler_bin(j);
    os << '\n';
    for (int i = 0; i < rdm.N(); ++i) {
        os << i;
        for (int j = 0; j < rdm.M(); ++j)
            os << ',' << fmt(10.0 * std::log10(std::max(std::norm(rdm.chi(i, j)), 1e-300)), 4);
        os << '\n';
    }
}

inline Json estimates_json(const std::vector<TargetEstimate>& est, const ScenarioConfig& cfg) {
    Json arr = Json::array();
    for (const auto& e : est)
        arr.push_back({{"tau_s", e.tau_s},
                       {"fd_hz", e.fd_hz},
                       {"range_m", e.range_m()},
                       {"velocity_mps", velocity_from_doppler(e.fd_hz, cfg)},
                       {"alpha_re", e.alpha.real()},
                       {"alpha_im", e.alpha.imag()}});
    return arr;
}

inline void write_trace_csv(std::ostream& os, const std::vector<SicTraceRow>& trace,
                            const std::string& hash) {
    os << "iteration,sinr_dB,pslr_dB,energy_delta,config_hash\n";
    for (const auto& r : trace)
        os << r.iteration << ',' << fmt(r.sinr_dB) << ',' << fmt(r.pslr_dB) << ','
           << fmt(r.energy_delta, 9) << ',' << hash << '\n';
}

}  // namespace beyondcp

#endif  // BEYONDCP_IO_HPP
