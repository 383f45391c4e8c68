#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"

namespace gspde::fft {

using complex = std::complex<double>;

enum class Direction { forward, backward };

namespace detail {

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const noexcept { fftw_destroy_plan(p); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are made once per (size, direction) with FFTW_ESTIMATE,
// which makes the chosen algorithm, and so the rounding, deterministic.
inline fftw_plan cached_plan(std::size_t n, Direction dir) {
    static std::mutex mutex;
    static std::map<std::pair<std::size_t, int>, PlanHandle> plans;
    const int sign = dir == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD;
    std::lock_guard lock(mutex);
    auto key = std::make_pair(n, sign);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second.get();
    std::vector<complex> scratch(n);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) throw Error("FFTW could not plan a transform of size " + std::to_string(n));
    plans.emplace(key, PlanHandle(plan));
    return plan;
}

}  // namespace detail

/// In-place unnormalized DFT: forward uses exp(-2 pi i jk/n), backward exp(+2 pi i jk/n).
inline void transform(std::span<complex> data, Direction dir) {
    if (data.empty()) return;
    fftw_plan plan = detail::cached_plan(data.size(), dir);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, buf, buf);
}

inline bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace gspde::fft
