#pragma once

// Support-constrained Fourier phase retrieval (error reduction interleaved with hybrid
// input-output) from several random starts, followed by a wrapped-gradient Zernike fit.
//
// Iterations run on a W x W window around the PSF centre. Cropping the focal plane to W
// samples is equivalent to sampling the pupil d = M / W times more coarsely, so the pupil
// constraint uses the d x d block average of the aperture. That model is only approximate
// at the aperture edge, so the coarse result seeds a few error-reduction steps on the full
// padded grid before the final fit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "gfao/estimators/common.hpp"
#include "gfao/fft.hpp"
#include "gfao/optics.hpp"
#include "gfao/zernike.hpp"

namespace gfao {

struct PhaseRetrievalOptions {
    int starts = 8;
    int er_warmup = 50;
    int hio_per_cycle = 40;
    int er_per_cycle = 10;
    int cycles = 4;
    int fine_er = 30;                 // full-resolution error-reduction steps after the coarse stage
    double beta = 0.9;
    std::size_t window = 128;         // focal samples per axis used by the iterations
    int pad_factor = kDefaultPadFactor;
    double start_rms = 1.0;           // RMS of the random Zernike starting phases (start 0 is flat)
    double misfit_threshold = 0.15;   // relative Fourier-magnitude misfit accepted as converged
    std::uint64_t seed = 0;
    ProgressCallback progress;
};

namespace detail {

struct CoarseProblem {
    std::size_t w = 0;
    std::size_t d = 1;
    RealGrid amplitude;  // block-averaged aperture on the W grid
    RealGrid magnitude;  // sqrt of the windowed target, energy-matched to the amplitude
};

inline CoarseProblem coarse_problem(const Psf& psf, const Aperture& aperture, const PhaseRetrievalOptions& opts) {
    const std::size_t n = aperture.n();
    const std::size_t m = n * static_cast<std::size_t>(opts.pad_factor);
    CoarseProblem p;
    p.w = std::min(opts.window, m);
    if (m % p.w != 0 || !is_power_of_two(p.w)) throw ArgumentError("retrieve_phase_iterative: window must be a power of two dividing the padded grid");
    p.d = m / p.w;

    const RealGrid fine = embed_centered(aperture.amplitude(), m, m);
    p.amplitude = RealGrid(p.w, p.w);
    const double inv = 1.0 / static_cast<double>(p.d * p.d);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c) p.amplitude(r / p.d, c / p.d) += fine(r, c) * inv;

    RealGrid t = psf.kernel();
    if (t.rows() > p.w || t.cols() > p.w) t = crop_centered(t, std::min(t.rows(), p.w), std::min(t.cols(), p.w));
    t = embed_centered(t, p.w, p.w);
    double amp_energy = 0.0;
    for (double v : p.amplitude) amp_energy += v * v;
    t *= amp_energy / sum(t);
    p.magnitude = RealGrid(p.w, p.w);
    for (std::size_t i = 0; i < t.size(); ++i) p.magnitude[i] = std::sqrt(std::max(t[i], 0.0));
    return p;
}

/// Relative Fourier-magnitude misfit sum(|G| - m)^2 / sum m^2.
inline double magnitude_misfit(const ComplexGrid& spectrum, const RealGrid& magnitude) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        const double e = std::abs(spectrum[i]) - magnitude[i];
        num += e * e;
        den += magnitude[i] * magnitude[i];
    }
    return num / den;
}

/// Runs the ER/HIO schedule from one starting field; returns the final field and its misfit.
inline std::pair<ComplexGrid, double> run_er_hio(ComplexGrid g, const CoarseProblem& p, const PhaseRetrievalOptions& opts) {
    auto fourier_projection = [&](const ComplexGrid& field, double* misfit) {
        ComplexGrid spec = fft::centered_unitary(field, fft::Direction::forward);
        if (misfit) *misfit = magnitude_misfit(spec, p.magnitude);
        for (std::size_t i = 0; i < spec.size(); ++i) {
            const double a = std::abs(spec[i]);
            spec[i] = a > 0.0 ? spec[i] * (p.magnitude[i] / a) : Complex(p.magnitude[i], 0.0);
        }
        return fft::centered_unitary(spec, fft::Direction::inverse);
    };
    auto amplitude_projection = [&](const Complex& v, double a) {
        const double mag = std::abs(v);
        return mag > 0.0 ? v * (a / mag) : Complex(a, 0.0);
    };
    auto er = [&](ComplexGrid& field) {
        const ComplexGrid gp = fourier_projection(field, nullptr);
        for (std::size_t i = 0; i < field.size(); ++i)
            field[i] = p.amplitude[i] > 0.0 ? amplitude_projection(gp[i], p.amplitude[i]) : Complex{};
    };
    auto hio = [&](ComplexGrid& field) {
        const ComplexGrid gp = fourier_projection(field, nullptr);
        for (std::size_t i = 0; i < field.size(); ++i)
            field[i] = p.amplitude[i] > 0.0 ? amplitude_projection(gp[i], p.amplitude[i]) : field[i] - opts.beta * gp[i];
    };
    for (int i = 0; i < opts.er_warmup; ++i) er(g);
    for (int cycle = 0; cycle < opts.cycles; ++cycle) {
        for (int i = 0; i < opts.hio_per_cycle; ++i) hio(g);
        for (int i = 0; i < opts.er_per_cycle; ++i) er(g);
    }
    double misfit = 0.0;
    (void)fourier_projection(g, &misfit);
    return {std::move(g), misfit};
}

/// Least-squares Zernike coefficients whose forward differences match the wrapped phase
/// differences of `field` over pairs inside the support.
inline std::vector<double> fit_wrapped_gradients(const ComplexGrid& field, const RealGrid& support,
                                                 const ZernikeBasis& basis) {
    const std::size_t w = field.rows();
    const std::size_t k = basis.mode_count();
    std::vector<RealGrid> modes;
    modes.reserve(k);
    for (std::size_t j = 0; j < k; ++j) modes.push_back(basis.mode(j));
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    Eigen::VectorXd row(static_cast<Eigen::Index>(k));
    auto add_pair = [&](std::size_t a, std::size_t b) {
        if (support[a] <= 0.0 || support[b] <= 0.0) return;
        if (!basis.mask().in_support(a / w, a % w) || !basis.mask().in_support(b / w, b % w)) return;
        const double dphi = std::arg(field[b] * std::conj(field[a]));
        const double weight = std::min(support[a], support[b]);
        for (std::size_t j = 0; j < k; ++j) row[static_cast<Eigen::Index>(j)] = modes[j][b] - modes[j][a];
        ata += weight * row * row.transpose();
        atb += weight * dphi * row;
    };
    for (std::size_t r = 0; r < w; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            if (c + 1 < w) add_pair(r * w + c, r * w + c + 1);
            if (r + 1 < w) add_pair(r * w + c, (r + 1) * w + c);
        }
    ata.diagonal().array() += 1e-9 * std::max(1.0, ata.diagonal().maxCoeff());
    const Eigen::VectorXd sol = ata.ldlt().solve(atb);
    return {sol.data(), sol.data() + sol.size()};
}

/// Error reduction on the full M x M grid, starting from `phase`. Focal samples outside the
/// supplied PSF window are unknown and left unconstrained. Returns the pupil field on the n grid.
inline ComplexGrid fine_error_reduction(const Psf& psf, const Aperture& aperture, const PhaseMap& phase, int pad_factor,
                                        int iterations) {
    const std::size_t n = aperture.n();
    const std::size_t m = n * static_cast<std::size_t>(pad_factor);
    const RealGrid amp = embed_centered(aperture.amplitude(), m, m);
    RealGrid t = psf.kernel();
    if (t.rows() > m || t.cols() > m) t = crop_centered(t, std::min(t.rows(), m), std::min(t.cols(), m));
    const RealGrid known = embed_centered(RealGrid(t.rows(), t.cols(), 1.0), m, m);
    t = embed_centered(t, m, m);
    const RealGrid ph = embed_centered(phase.values(), m, m);
    ComplexGrid g(m, m);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (amp[i] > 0.0) g[i] = std::polar(amp[i], ph[i]);
    for (int it = 0; it < iterations; ++it) {
        ComplexGrid spec = fft::centered_unitary(g, fft::Direction::forward);
        double inside = 0.0;
        for (std::size_t i = 0; i < spec.size(); ++i)
            if (known[i] > 0.0) inside += std::norm(spec[i]);
        // the target is rescaled to the energy the field currently puts in the known window
        const double scale = std::sqrt(inside / sum(t));
        for (std::size_t i = 0; i < spec.size(); ++i) {
            if (known[i] <= 0.0) continue;
            const double a = std::abs(spec[i]);
            const double target = scale * std::sqrt(std::max(t[i], 0.0));
            spec[i] = a > 0.0 ? spec[i] * (target / a) : Complex(target, 0.0);
        }
        g = fft::centered_unitary(spec, fft::Direction::inverse);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double mag = std::abs(g[i]);
            g[i] = amp[i] > 0.0 ? (mag > 0.0 ? g[i] * (amp[i] / mag) : Complex(amp[i], 0.0)) : Complex{};
        }
    }
    ComplexGrid out(n, n);
    const std::size_t off = (m - n) / 2;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) out(r, c) = g(r + off, c + off);
    return out;
}

}  // namespace detail

/// Recovers the pupil phase of `psf` (centred, sampled on the aperture's padded grid or a
/// centred window of it) as coefficients of `basis`. Random starts are independent and the
/// one with the lowest Fourier-magnitude misfit wins.
[[nodiscard]] inline PhaseEstimate retrieve_phase_iterative(const Psf& psf, const Aperture& aperture,
                                                            const ZernikeBasis& basis,
                                                            const PhaseRetrievalOptions& opts = {}) {
    if (basis.grid_n() != aperture.n()) throw DimensionError("retrieve_phase_iterative: basis and aperture grids differ");
    if (opts.starts < 1) throw ArgumentError("retrieve_phase_iterative: need at least one start");
    if (!(opts.beta > 0.0 && opts.beta <= 1.0)) throw ArgumentError("retrieve_phase_iterative: beta must lie in (0, 1]");

    const detail::CoarseProblem p = detail::coarse_problem(psf, aperture, opts);
    const ZernikeBasis coarse(p.w, basis.radius_px() / static_cast<double>(p.d), basis.indices());

    std::mt19937_64 rng(opts.seed);
    double best_misfit = std::numeric_limits<double>::infinity();
    ComplexGrid best;
    for (int s = 0; s < opts.starts; ++s) {
        const std::uint64_t start_seed = rng();
        PhaseMap start(p.w);
        if (s > 0) start = phase_from_coeffs(sample_coeffs(start_seed, opts.start_rms, coarse), coarse);
        ComplexGrid g(p.w, p.w);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (p.amplitude[i] > 0.0) g[i] = std::polar(p.amplitude[i], start.values()[i]);
        auto [field, misfit] = detail::run_er_hio(std::move(g), p, opts);
        if (opts.progress) opts.progress(s, misfit);
        if (misfit < best_misfit) {
            best_misfit = misfit;
            best = std::move(field);
        }
    }

    std::vector<double> c = detail::fit_wrapped_gradients(best, p.amplitude, coarse);
    if (opts.fine_er > 0) {
        const PhaseMap seed_phase = phase_from_coeffs(ZernikeCoeffs{c, basis.id()}, basis);
        const ComplexGrid fine = detail::fine_error_reduction(psf, aperture, seed_phase, opts.pad_factor, opts.fine_er);
        c = detail::fit_wrapped_gradients(fine, aperture.amplitude(), basis);
    }
    PhaseMap phase = remove_tilt_piston(phase_from_coeffs(ZernikeCoeffs{c, basis.id()}, basis), aperture);
    PhaseEstimate out{phase, project_over_aperture(phase, basis, aperture), best_misfit,
                      best_misfit <= opts.misfit_threshold ? SolverStatus::converged : SolverStatus::not_converged,
                      is_point_symmetric(aperture)};
    return out;
}

}  // namespace gfao
