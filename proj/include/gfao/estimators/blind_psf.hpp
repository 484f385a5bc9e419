#pragma once

// Blind single-image PSF estimation by alternating minimisation, coarse to fine.
//
//   latent step:  min_X 1/2 ||h (*) X - Y||^2 + lambda (||dx X||_1 + ||dy X||_1)
//                 half-quadratic splitting with an increasing penalty, FFT solves
//   kernel step:  min_h ||h (*) dX - dY||^2 + gamma ||h||^2 in the gradient domain,
//                 then clipped to h >= 0 and renormalised to unit sum; optionally the
//                 unregularised term minimised over the simplex instead
//
// Convolutions are circular, matching image_measurement's default mode.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gfao/estimators/common.hpp"
#include "gfao/fft.hpp"
#include "gfao/optics.hpp"

namespace gfao {

/// ridge_clamp: ridge least-squares kernel, negatives clipped, renormalised.
/// projected_gradient: the data term minimised over the simplex (compact kernels, loses faint halos).
enum class KernelUpdate { ridge_clamp, projected_gradient };

struct BlindPsfOptions {
    int kernel_size = 63;           // odd
    double lambda = 5e-4;           // TV weight at the coarsest scale
    double lambda_decay = 0.5;      // multiplier applied at each finer scale
    int scales = 0;                 // 0 picks the count so the coarsest kernel is ~7 samples
    int iterations_per_scale = 12;  // latent/kernel alternations per scale
    int splitting_stages = 8;       // penalty continuation steps per latent solve
    double splitting_growth = 2.0 * std::sqrt(2.0);
    double kernel_regularization = 1e-2;  // gamma, relative to the mean gradient power
    double kernel_threshold = 0.0;        // entries below this fraction of the peak are dropped
    double initial_sigma = 1.0;     // width of the Gaussian starting kernel at the coarsest scale
    KernelUpdate kernel_update = KernelUpdate::ridge_clamp;
    int kernel_iterations = 10;           // projected-gradient steps (projected_gradient only)
    bool kernel_warm_start_ls = true;     // start them from the projected ridge kernel
    double tolerance = 1e-4;              // relative kernel change that ends a scale early
    double accept_change = 1e-2;          // final relative change still reported as converged
    ProgressCallback progress;
};

namespace detail {

inline RealGrid downsample2(const RealGrid& in) {
    RealGrid out(in.rows() / 2, in.cols() / 2);
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c)
            out(r, c) = 0.25 * (in(2 * r, 2 * c) + in(2 * r + 1, 2 * c) + in(2 * r, 2 * c + 1) + in(2 * r + 1, 2 * c + 1));
    return out;
}

/// Bilinear resampling of a centred kernel to a new odd size at twice the sampling rate.
inline RealGrid upsample_kernel(const RealGrid& k, std::size_t size) {
    RealGrid out(size, size);
    const double co = static_cast<double>(k.rows() / 2);
    const double cn = static_cast<double>(size / 2);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double y = (static_cast<double>(r) - cn) / 2.0 + co;
            const double x = (static_cast<double>(c) - cn) / 2.0 + co;
            const long y0 = static_cast<long>(std::floor(y));
            const long x0 = static_cast<long>(std::floor(x));
            const double fy = y - static_cast<double>(y0);
            const double fx = x - static_cast<double>(x0);
            double v = 0.0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const long yy = y0 + dy;
                    const long xx = x0 + dx;
                    if (yy < 0 || xx < 0 || yy >= static_cast<long>(k.rows()) || xx >= static_cast<long>(k.cols()))
                        continue;
                    v += (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx) * k(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                }
            out(r, c) = v;
        }
    const double s = sum(out);
    if (s > 0.0) out *= 1.0 / s;
    return out;
}

// Circular forward differences.
inline RealGrid diff_x(const RealGrid& g) {
    RealGrid out(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) out(r, c) = g(r, (c + 1) % g.cols()) - g(r, c);
    return out;
}
inline RealGrid diff_y(const RealGrid& g) {
    RealGrid out(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) out(r, c) = g((r + 1) % g.rows(), c) - g(r, c);
    return out;
}

// Spectra of the forward-difference operators on a rows x cols grid.
inline ComplexGrid diff_spectrum(std::size_t rows, std::size_t cols, bool along_x) {
    RealGrid k(rows, cols);
    k(0, 0) = -1.0;
    if (along_x)
        k(0, cols - 1) = 1.0;
    else
        k(rows - 1, 0) = 1.0;
    return fft::forward_real(k);
}

class BlindScaleSolver {
public:
    BlindScaleSolver(const RealGrid& y, const BlindPsfOptions& opts)
        : y_(y), opts_(opts), fy_(fft::forward_real(y)),
          dxs_(diff_spectrum(y.rows(), y.cols(), true)), dys_(diff_spectrum(y.rows(), y.cols(), false)),
          fdy_x_(fft::forward_real(diff_x(y))), fdy_y_(fft::forward_real(diff_y(y))) {}

    /// TV-regularised non-blind deconvolution with the current kernel.
    RealGrid latent(const RealGrid& kernel, double lambda) const {
        const ComplexGrid ks = fft::kernel_spectrum(kernel, y_.rows(), y_.cols());
        const std::size_t n = y_.size();
        ComplexGrid num_data(y_.rows(), y_.cols());
        RealGrid kk(y_.rows(), y_.cols());
        RealGrid dd(y_.rows(), y_.cols());
        for (std::size_t i = 0; i < n; ++i) {
            num_data[i] = std::conj(ks[i]) * fy_[i];
            kk[i] = std::norm(ks[i]);
            dd[i] = std::norm(dxs_[i]) + std::norm(dys_[i]);
        }
        RealGrid x = y_;
        double beta = lambda;
        for (int stage = 0; stage < opts_.splitting_stages; ++stage) {
            RealGrid wx = diff_x(x);
            RealGrid wy = diff_y(x);
            const double t = lambda / beta;
            for (double& v : wx) v = v > t ? v - t : (v < -t ? v + t : 0.0);
            for (double& v : wy) v = v > t ? v - t : (v < -t ? v + t : 0.0);
            const ComplexGrid fwx = fft::forward_real(wx);
            const ComplexGrid fwy = fft::forward_real(wy);
            ComplexGrid fx(y_.rows(), y_.cols());
            for (std::size_t i = 0; i < n; ++i)
                fx[i] = (num_data[i] + beta * (std::conj(dxs_[i]) * fwx[i] + std::conj(dys_[i]) * fwy[i])) /
                        (kk[i] + beta * dd[i] + 1e-12);
            x = fft::inverse_to_real(std::move(fx));
            beta *= opts_.splitting_growth;
        }
        return x;
    }

    /// Gradient-domain kernel update: accelerated projected gradient on
    ///   1/2 ||dX (*) h - dY||^2   over {h >= 0, sum h = 1, support = window},
    /// started from the projected ridge solution (or the current kernel).
    RealGrid kernel(const RealGrid& x, const RealGrid& start) const {
        const ComplexGrid fxx = fft::forward_real(diff_x(x));
        const ComplexGrid fxy = fft::forward_real(diff_y(x));
        const std::size_t n = y_.size();
        RealGrid a(y_.rows(), y_.cols());
        ComplexGrid b(y_.rows(), y_.cols());
        double mean_power = 0.0;
        double max_power = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = std::norm(fxx[i]) + std::norm(fxy[i]);
            b[i] = std::conj(fxx[i]) * fdy_x_[i] + std::conj(fxy[i]) * fdy_y_[i];
            mean_power += a[i];
            max_power = std::max(max_power, a[i]);
        }
        mean_power /= static_cast<double>(n);
        const double gamma = opts_.kernel_regularization * mean_power;
        const double step = 1.0 / max_power;

        RealGrid h = start;
        if (opts_.kernel_update == KernelUpdate::ridge_clamp || opts_.kernel_warm_start_ls) {
            ComplexGrid ls(y_.rows(), y_.cols());
            for (std::size_t i = 0; i < n; ++i) ls[i] = b[i] / (a[i] + gamma);
            h = window_at_origin(fft::inverse_to_real(std::move(ls)), start.rows());
            if (opts_.kernel_update == KernelUpdate::ridge_clamp) {
                for (double& v : h) v = std::max(v, 0.0);
                return finish_kernel(std::move(h), opts_.kernel_threshold);
            }
            h = project_simplex(std::move(h));
        }
        RealGrid z = h;
        double t = 1.0;
        for (int it = 0; it < opts_.kernel_iterations; ++it) {
            ComplexGrid spec = fft::kernel_spectrum(z, y_.rows(), y_.cols());
            for (std::size_t i = 0; i < n; ++i) spec[i] = a[i] * spec[i] - b[i];
            const RealGrid grad = window_at_origin(fft::inverse_to_real(std::move(spec)), start.rows());
            RealGrid next = z;
            for (std::size_t i = 0; i < next.size(); ++i) next[i] -= step * grad[i];
            next = project_simplex(std::move(next));
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            for (std::size_t i = 0; i < z.size(); ++i) z[i] = next[i] + ((t - 1.0) / t_next) * (next[i] - h[i]);
            h = std::move(next);
            t = t_next;
        }
        return finish_kernel(std::move(h), opts_.kernel_threshold);
    }

    double misfit(const RealGrid& x, const RealGrid& kernel) const {
        const RealGrid model = convolve(x, kernel);
        double s = 0.0;
        for (std::size_t i = 0; i < model.size(); ++i) s += (model[i] - y_[i]) * (model[i] - y_[i]);
        return s;
    }

    /// Euclidean projection onto {h >= 0, sum h = 1}.
    static RealGrid project_simplex(RealGrid h) {
        std::vector<double> v(h.begin(), h.end());
        std::sort(v.begin(), v.end(), std::greater<>());
        double cum = 0.0;
        double theta = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            cum += v[i];
            const double cand = (cum - 1.0) / static_cast<double>(i + 1);
            if (v[i] - cand > 0.0) theta = cand;
        }
        for (double& x : h) x = std::max(x - theta, 0.0);
        return h;
    }

    /// Optional small-entry cut, recentring and renormalisation.
    static RealGrid finish_kernel(RealGrid k, double threshold) {
        const double peak = max_value(k);
        if (!(peak > 0.0)) {
            k = RealGrid(k.rows(), k.cols());
            k(k.rows() / 2, k.cols() / 2) = 1.0;
            return k;
        }
        if (threshold > 0.0)
            for (double& v : k)
                if (v < threshold * peak) v = 0.0;
        k = recentre(std::move(k));
        k *= 1.0 / sum(k);
        return k;
    }

    /// size x size window of a full-grid kernel centred at index (0, 0).
    static RealGrid window_at_origin(const RealGrid& full, std::size_t size) {
        RealGrid k(size, size);
        const long half = static_cast<long>(size / 2);
        const long R = static_cast<long>(full.rows());
        const long C = static_cast<long>(full.cols());
        for (long r = -half; r <= half; ++r)
            for (long c = -half; c <= half; ++c)
                k(static_cast<std::size_t>(r + half), static_cast<std::size_t>(c + half)) =
                    full(static_cast<std::size_t>((r % R + R) % R), static_cast<std::size_t>((c % C + C) % C));
        return k;
    }

    // Integer shift that moves the kernel centroid to the window centre.
    static RealGrid recentre(RealGrid k) {
        double s = 0.0, sr = 0.0, sc = 0.0;
        for (std::size_t r = 0; r < k.rows(); ++r)
            for (std::size_t c = 0; c < k.cols(); ++c) {
                s += k(r, c);
                sr += k(r, c) * static_cast<double>(r);
                sc += k(r, c) * static_cast<double>(c);
            }
        const long dr = static_cast<long>(k.rows() / 2) - std::lround(sr / s);
        const long dc = static_cast<long>(k.cols() / 2) - std::lround(sc / s);
        if (dr == 0 && dc == 0) return k;
        RealGrid out(k.rows(), k.cols());
        for (long r = 0; r < static_cast<long>(k.rows()); ++r)
            for (long c = 0; c < static_cast<long>(k.cols()); ++c) {
                const long rr = r + dr;
                const long cc = c + dc;
                if (rr < 0 || cc < 0 || rr >= static_cast<long>(k.rows()) || cc >= static_cast<long>(k.cols())) continue;
                out(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = k(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            }
        return out;
    }

private:
    const RealGrid& y_;
    const BlindPsfOptions& opts_;
    ComplexGrid fy_;
    ComplexGrid dxs_;
    ComplexGrid dys_;
    ComplexGrid fdy_x_;
    ComplexGrid fdy_y_;
};

inline std::size_t odd_at_least_3(double v) {
    auto k = static_cast<std::size_t>(std::lround(v));
    if (k % 2 == 0) ++k;
    return std::max<std::size_t>(k, 3);
}

}  // namespace detail

/// Estimates a unit-energy kernel_size x kernel_size PSF from a single measurement.
[[nodiscard]] inline PsfEstimate estimate_psf_blind(const Measurement& measurement, const BlindPsfOptions& opts = {}) {
    const auto& y = measurement.pixels;
    if (opts.kernel_size < 3 || opts.kernel_size % 2 == 0)
        throw ArgumentError("estimate_psf_blind: kernel size must be odd and >= 3");
    if (static_cast<std::size_t>(opts.kernel_size) > std::min(y.rows(), y.cols()))
        throw ArgumentError("estimate_psf_blind: kernel larger than the measurement");
    double peak = 0.0;
    for (double v : y) {
        if (v < 0.0) throw ArgumentError("estimate_psf_blind: measurement must be nonnegative");
        peak = std::max(peak, v);
    }
    if (peak == 0.0) throw ArgumentError("estimate_psf_blind: all-zero measurement");

    int scales = opts.scales;
    if (scales <= 0) {
        scales = 1;
        double ks = opts.kernel_size;
        std::size_t side = std::min(y.rows(), y.cols());
        while (ks / 2.0 >= 7.0 && side / 2 >= 32) {
            ks /= 2.0;
            side /= 2;
            ++scales;
        }
    }
    std::vector<RealGrid> pyramid{y};
    for (int s = 1; s < scales; ++s) pyramid.push_back(detail::downsample2(pyramid.back()));

    RealGrid kernel;
    double lambda = opts.lambda;
    int iterations = 0;
    bool converged = false;
    double fidelity = 0.0;
    for (int s = scales - 1; s >= 0; --s) {
        const std::size_t ks = s == 0 ? static_cast<std::size_t>(opts.kernel_size)
                                      : detail::odd_at_least_3(opts.kernel_size / std::pow(2.0, s));
        if (kernel.empty()) {
            kernel = RealGrid(ks, ks);
            const double c = static_cast<double>(ks / 2);
            for (std::size_t r = 0; r < ks; ++r)
                for (std::size_t q = 0; q < ks; ++q)
                    kernel(r, q) = std::exp(-((r - c) * (r - c) + (q - c) * (q - c)) /
                                            (2.0 * std::max(opts.initial_sigma, 1e-3) * std::max(opts.initial_sigma, 1e-3)));
            kernel *= 1.0 / sum(kernel);
        } else {
            kernel = detail::upsample_kernel(kernel, ks);
        }
        const detail::BlindScaleSolver solver(pyramid[static_cast<std::size_t>(s)], opts);
        converged = false;
        RealGrid x;
        for (int it = 0; it < opts.iterations_per_scale; ++it) {
            x = solver.latent(kernel, lambda);
            RealGrid next = solver.kernel(x, kernel);
            double change = 0.0, norm = 0.0;
            for (std::size_t i = 0; i < next.size(); ++i) {
                change += (next[i] - kernel[i]) * (next[i] - kernel[i]);
                norm += next[i] * next[i];
            }
            kernel = std::move(next);
            ++iterations;
            if (opts.progress) opts.progress(iterations, std::sqrt(change / norm));
            converged = std::sqrt(change / norm) < opts.accept_change;
            if (std::sqrt(change / norm) < opts.tolerance) break;
        }
        if (s == 0) fidelity = solver.misfit(solver.latent(kernel, lambda), kernel);
        lambda *= opts.lambda_decay;
    }
    return {Psf(kernel), fidelity, iterations, converged ? SolverStatus::converged : SolverStatus::not_converged};
}

}  // namespace gfao
