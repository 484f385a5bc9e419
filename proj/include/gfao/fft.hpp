#pragma once

// Thin FFTW3 wrapper. Plans are created once per (shape, direction) under a lock and
// executed through the new-array interface, which FFTW documents as thread-safe.

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "gfao/grid.hpp"

namespace gfao::fft {

enum class Direction { forward, inverse };

namespace detail {

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(std::size_t rows, std::size_t cols, Direction dir) {
        std::lock_guard lock(mutex_);
        const auto key = std::make_tuple(rows, cols, dir == Direction::forward);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        auto* buf = fftw_alloc_complex(rows * cols);
        fftw_plan p = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf,
                                       dir == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf);
        plans_.emplace(key, p);
        return p;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::size_t, bool>, fftw_plan> plans_;
};

}  // namespace detail

/// In-place unnormalised DFT with FFTW sign conventions (forward uses e^{-j...}).
inline void transform_inplace(ComplexGrid& g, Direction dir) {
    if (g.empty()) return;
    fftw_plan p = detail::PlanCache::instance().get(g.rows(), g.cols(), dir);
    auto* ptr = reinterpret_cast<fftw_complex*>(g.data());
    fftw_execute_dft(p, ptr, ptr);
}

/// Moves index 0 to index n/2 along both axes (numpy fftshift).
template <class T>
[[nodiscard]] Grid<T> fftshift(const Grid<T>& g) {
    return circshift(g, static_cast<long>(g.rows() / 2), static_cast<long>(g.cols() / 2));
}

/// Inverse of fftshift (numpy ifftshift).
template <class T>
[[nodiscard]] Grid<T> ifftshift(const Grid<T>& g) {
    return circshift(g, -static_cast<long>(g.rows() / 2), -static_cast<long>(g.cols() / 2));
}

/// Unitary DFT whose zero index sits at (rows/2, cols/2) in both domains.
[[nodiscard]] inline ComplexGrid centered_unitary(const ComplexGrid& in, Direction dir) {
    ComplexGrid work = ifftshift(in);
    transform_inplace(work, dir);
    work *= 1.0 / std::sqrt(static_cast<double>(in.size()));
    return fftshift(work);
}

[[nodiscard]] inline ComplexGrid to_complex(const RealGrid& g) {
    ComplexGrid out(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i];
    return out;
}

[[nodiscard]] inline RealGrid real_part(const ComplexGrid& g) {
    RealGrid out(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].real();
    return out;
}

/// Unnormalised forward DFT of a real grid, zero index at (0, 0).
[[nodiscard]] inline ComplexGrid forward_real(const RealGrid& g) {
    ComplexGrid c = to_complex(g);
    transform_inplace(c, Direction::forward);
    return c;
}

/// Inverse of forward_real (includes the 1/N factor), keeping the real part.
[[nodiscard]] inline RealGrid inverse_to_real(ComplexGrid spectrum) {
    transform_inplace(spectrum, Direction::inverse);
    RealGrid out = real_part(spectrum);
    out *= 1.0 / static_cast<double>(out.size());
    return out;
}

/// Spectrum of a kernel whose centre sits at (rows/2, cols/2), placed on a grid of the
/// given shape so that circular convolution with it does not translate the signal.
/// Kernels larger than the target are cropped about their centre.
[[nodiscard]] inline ComplexGrid kernel_spectrum(const RealGrid& kernel, std::size_t rows,
                                                 std::size_t cols) {
    RealGrid k = kernel;
    if (k.rows() > rows || k.cols() > cols)
        k = crop_centered(k, std::min(rows, k.rows()), std::min(cols, k.cols()));
    RealGrid placed(rows, cols);
    const long kr = static_cast<long>(k.rows());
    const long kc = static_cast<long>(k.cols());
    const long R = static_cast<long>(rows);
    const long C = static_cast<long>(cols);
    for (long r = 0; r < kr; ++r)
        for (long c = 0; c < kc; ++c) {
            const long rr = ((r - kr / 2) % R + R) % R;
            const long cc = ((c - kc / 2) % C + C) % C;
            placed(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) +=
                k(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        }
    return forward_real(placed);
}

}  // namespace gfao::fft
