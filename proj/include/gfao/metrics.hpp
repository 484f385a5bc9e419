#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gfao/aperture.hpp"
#include "gfao/fft.hpp"
#include "gfao/optics.hpp"
#include "gfao/zernike.hpp"

namespace gfao {

/// Peak of the PSF over the peak of the diffraction-limited PSF, both scaled to equal energy.
/// The psf must be sampled on the same padded grid as the aperture's own PSF.
[[nodiscard]] inline double strehl_ratio(const Psf& psf, const Aperture& aperture,
                                         int pad_factor = kDefaultPadFactor) {
    const Psf ideal = bare_psf(aperture, pad_factor);
    require_same_shape(psf.kernel(), ideal.kernel(), "strehl_ratio");
    if (!(psf.energy() > 0.0)) throw ArgumentError("strehl_ratio: zero-energy psf");
    return (max_value(psf.kernel()) / psf.energy()) / (max_value(ideal.kernel()) / ideal.energy());
}

/// Strehl ratio of the PSF produced by a residual phase.
[[nodiscard]] inline double strehl_of_residual(const Aperture& aperture, const PhaseMap& residual,
                                               int pad_factor = kDefaultPadFactor) {
    return strehl_ratio(psf_of(aperture, residual, pad_factor), aperture, pad_factor);
}

struct MtfProfile {
    std::vector<double> radial_frequency;
    std::vector<double> contrast;
};

/// Annular bin (width one FFT sample) of each pixel around the grid centre.
[[nodiscard]] inline std::size_t radial_bin(std::size_t r, std::size_t c, std::size_t rows, std::size_t cols) {
    const double dy = static_cast<double>(r) - static_cast<double>(rows / 2);
    const double dx = static_cast<double>(c) - static_cast<double>(cols / 2);
    return static_cast<std::size_t>(std::lround(std::hypot(dx, dy)));
}

/// Radially averaged |OTF| normalised to 1 at DC. Frequencies are reported in bins divided by
/// `aperture_width_px` (the pupil width in padded-grid samples), i.e. in units of the cutoff of
/// an aperture of that width; pass 1 for raw bins.
[[nodiscard]] inline MtfProfile mtf(const Psf& psf, double aperture_width_px = 1.0) {
    const auto& k = psf.kernel();
    const ComplexGrid otf = fft::centered_unitary(fft::to_complex(k), fft::Direction::forward);
    const std::size_t rows = k.rows();
    const std::size_t cols = k.cols();
    const double dc = std::abs(otf(rows / 2, cols / 2));
    const std::size_t nbins = std::min(rows, cols) / 2;
    std::vector<double> acc(nbins, 0.0);
    std::vector<std::size_t> cnt(nbins, 0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t b = radial_bin(r, c, rows, cols);
            if (b >= nbins) continue;
            acc[b] += std::abs(otf(r, c)) / dc;
            ++cnt[b];
        }
    MtfProfile out;
    for (std::size_t b = 0; b < nbins; ++b) {
        out.radial_frequency.push_back(static_cast<double>(b) / aperture_width_px);
        out.contrast.push_back(cnt[b] ? acc[b] / static_cast<double>(cnt[b]) : 0.0);
    }
    out.contrast[0] = 1.0;
    return out;
}

/// Peak signal-to-noise ratio in dB; +infinity for identical images.
[[nodiscard]] inline double psnr(const RealGrid& a, const RealGrid& b, double peak = 1.0) {
    require_same_shape(a, b, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / (se / static_cast<double>(a.size())));
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

namespace detail {

// Separable Gaussian filter keeping only positions where the window fits ("valid").
inline RealGrid gaussian_valid(const RealGrid& in, const std::vector<double>& w) {
    const std::size_t k = w.size();
    const std::size_t rows = in.rows() - k + 1;
    const std::size_t cols = in.cols() - k + 1;
    RealGrid tmp(in.rows(), cols);
    for (std::size_t r = 0; r < in.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += w[j] * in(r, c + j);
            tmp(r, c) = s;
        }
    RealGrid out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += w[j] * tmp(r + j, c);
            out(r, c) = s;
        }
    return out;
}

}  // namespace detail

/// Mean structural similarity with a Gaussian window over valid positions.
[[nodiscard]] inline double ssim(const RealGrid& a, const RealGrid& b, const SsimParams& p = {}) {
    require_same_shape(a, b, "ssim");
    if (p.window < 1 || a.rows() < static_cast<std::size_t>(p.window) || a.cols() < static_cast<std::size_t>(p.window))
        throw ArgumentError("ssim: image smaller than the window");
    std::vector<double> w(static_cast<std::size_t>(p.window));
    const double half = (p.window - 1) / 2.0;
    double ws = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = static_cast<double>(i) - half;
        w[i] = std::exp(-d * d / (2.0 * p.sigma * p.sigma));
        ws += w[i];
    }
    for (double& v : w) v /= ws;

    RealGrid aa(a.rows(), a.cols()), bb(a.rows(), a.cols()), ab(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const RealGrid mu_a = detail::gaussian_valid(a, w);
    const RealGrid mu_b = detail::gaussian_valid(b, w);
    const RealGrid s_aa = detail::gaussian_valid(aa, w);
    const RealGrid s_bb = detail::gaussian_valid(bb, w);
    const RealGrid s_ab = detail::gaussian_valid(ab, w);
    const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i];
        const double mb = mu_b[i];
        const double va = s_aa[i] - ma * ma;
        const double vb = s_bb[i] - mb * mb;
        const double cov = s_ab[i] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

/// Mean squared x-gradient difference plus mean squared y-gradient difference, over forward
/// difference pairs with both samples inside the mask. Blind to piston by construction.
[[nodiscard]] inline double gradient_phase_error(const PhaseMap& est, const PhaseMap& gt, const Aperture& mask) {
    require_same_shape(est.values(), gt.values(), "gradient_phase_error");
    require_same_shape(est.values(), mask.amplitude(), "gradient_phase_error");
    const std::size_t n = est.n();
    double sx = 0.0;
    double sy = 0.0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            if (!mask.in_support(r, c)) continue;
            if (c + 1 < n && mask.in_support(r, c + 1)) {
                const double d = (est(r, c + 1) - gt(r, c + 1)) - (est(r, c) - gt(r, c));
                sx += d * d;
                ++nx;
            }
            if (r + 1 < n && mask.in_support(r + 1, c)) {
                const double d = (est(r + 1, c) - gt(r + 1, c)) - (est(r, c) - gt(r, c));
                sy += d * d;
                ++ny;
            }
        }
    if (nx == 0 && ny == 0) throw ArgumentError("gradient_phase_error: mask has no neighbouring pairs");
    return (nx ? sx / static_cast<double>(nx) : 0.0) + (ny ? sy / static_cast<double>(ny) : 0.0);
}

/// Zero-mean normalised cross-correlation of two centred kernels, maximised over integer
/// shifts up to max_shift in each axis. Kernels of different sizes are compared on the larger
/// window. Insensitive to scale, so unit-sum and unit-peak kernels compare equally.
[[nodiscard]] inline double kernel_ncc(const RealGrid& a, const RealGrid& b, int max_shift = 3) {
    if (a.empty() || b.empty()) throw ArgumentError("kernel_ncc: empty kernel");
    if (max_shift < 0) throw ArgumentError("kernel_ncc: max_shift must be >= 0");
    const std::size_t rows = std::max(a.rows(), b.rows());
    const std::size_t cols = std::max(a.cols(), b.cols());
    RealGrid pa = embed_centered(a, rows, cols);
    RealGrid pb = embed_centered(b, rows, cols);
    const double ma = sum(pa) / static_cast<double>(pa.size());
    const double mb = sum(pb) / static_cast<double>(pb.size());
    for (double& v : pa) v -= ma;
    for (double& v : pb) v -= mb;
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        na += pa[i] * pa[i];
        nb += pb[i] * pb[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) throw ArgumentError("kernel_ncc: constant kernel");
    double best = -1.0;
    const long R = static_cast<long>(rows);
    const long C = static_cast<long>(cols);
    for (long dr = -max_shift; dr <= max_shift; ++dr)
        for (long dc = -max_shift; dc <= max_shift; ++dc) {
            double s = 0.0;
            for (long r = std::max(0L, dr); r < std::min(R, R + dr); ++r)
                for (long c = std::max(0L, dc); c < std::min(C, C + dc); ++c)
                    s += pa(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) *
                         pb(static_cast<std::size_t>(r - dr), static_cast<std::size_t>(c - dc));
            best = std::max(best, s / std::sqrt(na * nb));
        }
    return best;
}

}  // namespace gfao
