#pragma once

// Conjugate-flip twin experiment: phi and -phi(-x, -y) give the same PSF on a point-symmetric
// aperture. Only even radial orders change sign under the flip, so the even-order part of an
// aberration is what an asymmetric aperture can tell apart.

#include <cmath>
#include <cstdint>

#include "gfao/optics.hpp"
#include "gfao/zernike.hpp"

namespace gfao {

/// Norm of the coefficients on even radial orders.
[[nodiscard]] inline double even_order_rms(const ZernikeCoeffs& c, const ZernikeBasis& basis) {
    require_matching(c, basis);
    double s = 0.0;
    for (std::size_t k = 0; k < c.values.size(); ++k)
        if (basis.indices()[k].n % 2 == 0) s += c.values[k] * c.values[k];
    return std::sqrt(s);
}

/// First draw in a seed-derived sequence whose even-order norm reaches `min_even_rms`.
[[nodiscard]] inline ZernikeCoeffs sample_separable_coeffs(std::uint64_t seed, double rms, const ZernikeBasis& basis,
                                                           double min_even_rms, int max_attempts = 10000) {
    if (min_even_rms > rms) throw ArgumentError("sample_separable_coeffs: min_even_rms exceeds the total RMS");
    for (int a = 0; a < max_attempts; ++a) {
        ZernikeCoeffs c = sample_coeffs(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(a), rms, basis);
        if (even_order_rms(c, basis) >= min_even_rms) return c;
    }
    throw ArgumentError("sample_separable_coeffs: no draw met the even-order threshold");
}

/// Relative L2 distance between the PSFs of phi and its conjugate flip.
[[nodiscard]] inline double twin_psf_distance(const Aperture& aperture, const PhaseMap& phi,
                                              int pad_factor = kDefaultPadFactor) {
    return relative_l2(psf_of(aperture, phi, pad_factor).kernel(),
                       psf_of(aperture, conjugate_flip(phi), pad_factor).kernel());
}

}  // namespace gfao
