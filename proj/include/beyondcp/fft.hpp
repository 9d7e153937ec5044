#ifndef BEYONDCP_FFT_HPP
#define BEYONDCP_FFT_HPP

/**
 * @file fft.hpp
 * @brief Thin FFTW wrapper operating in place on Eigen column-major matrices.
 *
 * All transforms here are unnormalized (FFTW convention); callers apply the
 * 1/sqrt(N) factors. Plans are cached per thread and created with
 * FFTW_UNALIGNED so they can run on any Eigen buffer.
 */

#include <fftw3.h>

#include <Eigen/Dense>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>

namespace beyondcp {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

enum class FftDirection { Forward = FFTW_FORWARD, Backward = FFTW_BACKWARD };

namespace detail {

// fftw_plan creation/destruction is not thread-safe.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

enum class FftLayout { Columns, Rows, Full2d };

class FftPlanCache {
public:
    FftPlanCache() = default;
    FftPlanCache(const FftPlanCache&) = delete;
    FftPlanCache& operator=(const FftPlanCache&) = delete;
    ~FftPlanCache() {
        std::lock_guard lock(fftw_planner_mutex());
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    fftw_plan get(FftLayout layout, int rows, int cols, FftDirection dir) {
        const Key key{static_cast<int>(layout), rows, cols, static_cast<int>(dir)};
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;

        std::lock_guard lock(fftw_planner_mutex());
        const auto total = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
        auto* scratch = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * total));
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        const int sign = static_cast<int>(dir);
        fftw_plan plan = nullptr;
        switch (layout) {
            case FftLayout::Columns: {
                int n[] = {rows};
                plan = fftw_plan_many_dft(1, n, cols, scratch, nullptr, 1, rows, scratch, nullptr,
                                          1, rows, sign, flags);
                break;
            }
            case FftLayout::Rows: {
                int n[] = {cols};
                plan = fftw_plan_many_dft(1, n, rows, scratch, nullptr, rows, 1, scratch, nullptr,
                                          rows, 1, sign, flags);
                break;
            }
            case FftLayout::Full2d:
                // Column-major rows x cols is row-major cols x rows; the 2-D DFT is separable.
                plan = fftw_plan_dft_2d(cols, rows, scratch, scratch, sign, flags);
                break;
        }
        fftw_free(scratch);
        plans_.emplace(key, plan);
        return plan;
    }

private:
    using Key = std::tuple<int, int, int, int>;
    std::map<Key, fftw_plan> plans_;
};

inline FftPlanCache& plan_cache() {
    thread_local FftPlanCache cache;
    return cache;
}

inline void run(CMatrix& x, FftLayout layout, FftDirection dir) {
    if (x.size() == 0) return;
    fftw_plan plan = plan_cache().get(layout, static_cast<int>(x.rows()),
                                      static_cast<int>(x.cols()), dir);
    auto* data = reinterpret_cast<fftw_complex*>(x.data());
    fftw_execute_dft(plan, data, data);
}

}  // namespace detail

/// DFT of every column (length = rows).
inline void fft_columns(CMatrix& x, FftDirection dir) {
    detail::run(x, detail::FftLayout::Columns, dir);
}

/// DFT of every row (length = cols).
inline void fft_rows(CMatrix& x, FftDirection dir) { detail::run(x, detail::FftLayout::Rows, dir); }

inline void fft_2d(CMatrix& x, FftDirection dir) { detail::run(x, detail::FftLayout::Full2d, dir); }

}  // namespace beyondcp

#endif  // BEYONDCP_FFT_HPP
