#ifndef BEYONDCP_WAVEFORM_HPP
#define BEYONDCP_WAVEFORM_HPP

#include <cmath>
#include <complex>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "beyondcp/errors.hpp"
#include "beyondcp/fft.hpp"
#include "beyondcp/params.hpp"

namespace beyondcp {

/// Unit-average-power symbol alphabet. Square QAM grids and QPSK only; both
/// satisfy E{s} = E{s^2} = 0, which the echo analytics rely on.
struct Constellation {
    std::vector<cplx> points;
    int order = 0;
    std::string label;
};

using SymbolFrame = CMatrix;  // N subcarriers x M symbols

inline Constellation make_constellation(const std::string& label) {
    int order = 0;
    if (label == "QPSK") order = 4;
    else if (label == "16QAM") order = 16;
    else if (label == "64QAM") order = 64;
    else if (label == "256QAM") order = 256;
    else if (label == "1024QAM") order = 1024;
    else throw ConfigError("unsupported constellation '" + label + "'");

    const int side = static_cast<int>(std::lround(std::sqrt(order)));
    Constellation c;
    c.order = order;
    c.label = label;
    c.points.reserve(order);
    double power = 0.0;
    for (int i = 0; i < side; ++i) {
        for (int q = 0; q < side; ++q) {
            const cplx p(2.0 * i - (side - 1), 2.0 * q - (side - 1));
            c.points.push_back(p);
            power += std::norm(p);
        }
    }
    const double scale = 1.0 / std::sqrt(power / order);
    for (auto& p : c.points) p *= scale;
    return c;
}

/// Fourth moment E{|s|^4} over the (uniform) alphabet.
inline double mu4(const Constellation& c) {
    double acc = 0.0;
    for (const auto& p : c.points) acc += std::norm(p) * std::norm(p);
    return acc / static_cast<double>(c.points.size());
}

template <class Rng>
SymbolFrame gen_frame(int N, int M, const Constellation& c, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, c.points.size() - 1);
    SymbolFrame S(N, M);
    for (Eigen::Index m = 0; m < M; ++m)
        for (Eigen::Index n = 0; n < N; ++n) S(n, m) = c.points[pick(rng)];
    return S;
}

template <class Rng>
SymbolFrame gen_frame(const ScenarioConfig& cfg, const Constellation& c, Rng& rng) {
    return gen_frame(cfg.N, cfg.M, c, rng);
}

/// Debug dump: one row per subcarrier, one column per symbol, "re+imj".
inline void write_frame_csv(std::ostream& os, const SymbolFrame& S) {
    const auto old_precision = os.precision(17);
    for (Eigen::Index n = 0; n < S.rows(); ++n) {
        for (Eigen::Index m = 0; m < S.cols(); ++m) {
            if (m) os << ',';
            const cplx v = S(n, m);
            os << v.real() << (v.imag() < 0 ? "" : "+") << v.imag() << 'j';
        }
        os << '\n';
    }
    os.precision(old_precision);
}

}  // namespace beyondcp

#endif  // BEYONDCP_WAVEFORM_HPP
