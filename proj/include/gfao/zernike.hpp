#pragma once

// RMS-normalised Zernike polynomials on a pixelated disk.
//
// Modes use Noll's sequential index. After analytic evaluation the modes are re-orthonormalised
// on the discrete disk (modified Gram-Schmidt, constant first, Noll order), so coefficient
// norms equal the wavefront RMS over the disk to rounding error and every mode has zero mean.
// Gram-Schmidt only mixes a mode with earlier ones, so tip and tilt stay exactly linear.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gfao/aperture.hpp"
#include "gfao/grid.hpp"
#include "gfao/phase_map.hpp"

namespace gfao {

struct ZernikeIndex {
    int n = 0;     // radial order
    int m = 0;     // signed azimuthal frequency, negative for sine terms
    int noll = 0;  // Noll sequential index (piston is 1)
    bool operator==(const ZernikeIndex&) const = default;
};

/// Noll index -> (n, m).
[[nodiscard]] inline ZernikeIndex noll_to_nm(int j) {
    if (j < 1) throw ArgumentError("noll_to_nm: index must be >= 1");
    int n = 0;
    while ((n + 1) * (n + 2) / 2 < j) ++n;
    const int k = j - n * (n + 1) / 2 - 1;  // position within order n, 0-based
    int am = 0;
    if (n % 2 == 0)
        am = 2 * ((k + 1) / 2);
    else
        am = 2 * (k / 2) + 1;
    const int m = (am == 0) ? 0 : ((j % 2 == 0) ? am : -am);
    return {n, m, j};
}

/// Radial polynomial R_n^|m|(rho).
[[nodiscard]] inline double zernike_radial(int n, int m, double rho) {
    m = std::abs(m);
    if ((n - m) % 2 != 0) return 0.0;
    double out = 0.0;
    for (int k = 0; k <= (n - m) / 2; ++k) {
        const double num = std::tgamma(n - k + 1.0) * ((k % 2) ? -1.0 : 1.0);
        const double den = std::tgamma(k + 1.0) * std::tgamma((n + m) / 2.0 - k + 1.0) *
                           std::tgamma((n - m) / 2.0 - k + 1.0);
        out += num / den * std::pow(rho, n - 2 * k);
    }
    return out;
}

/// Analytic RMS-normalised Zernike value on the unit disk.
[[nodiscard]] inline double zernike_value(int n, int m, double rho, double theta) {
    const double radial = zernike_radial(n, m, rho);
    if (m == 0) return std::sqrt(n + 1.0) * radial;
    const double norm = std::sqrt(2.0 * (n + 1.0));
    return m > 0 ? norm * radial * std::cos(m * theta) : norm * radial * std::sin(-m * theta);
}

enum class ZernikeOrdering {
    radial_order,  // every mode with 1 <= n <= max_order
    first_modes    // the first `max_order` modes after piston, in Noll order
};

class ZernikeBasis {
public:
    ZernikeBasis(std::size_t grid_n, double radius_px, std::vector<ZernikeIndex> indices)
        : grid_n_(grid_n), radius_px_(radius_px), indices_(std::move(indices)) {
        if (grid_n < 8) throw ArgumentError("ZernikeBasis: grid too small");
        if (!(radius_px >= 1.0) || radius_px > static_cast<double>(grid_n) / 2.0 - 1.0)
            throw ArgumentError("ZernikeBasis: disk radius does not fit the grid");
        build();
    }

    [[nodiscard]] std::size_t grid_n() const noexcept { return grid_n_; }
    [[nodiscard]] double radius_px() const noexcept { return radius_px_; }
    [[nodiscard]] std::size_t mode_count() const noexcept { return indices_.size(); }
    [[nodiscard]] const std::vector<ZernikeIndex>& indices() const noexcept { return indices_; }
    /// Flat indices of the pixels inside the disk.
    [[nodiscard]] const std::vector<std::size_t>& support() const noexcept { return support_; }
    /// Value of mode k at the i-th support pixel.
    [[nodiscard]] double value(std::size_t k, std::size_t i) const noexcept {
        return values_[k * support_.size() + i];
    }
    [[nodiscard]] std::span<const double> mode_values(std::size_t k) const noexcept {
        return {values_.data() + k * support_.size(), support_.size()};
    }

    /// Dense n x n copy of mode k (zero outside the disk).
    [[nodiscard]] RealGrid mode(std::size_t k) const {
        RealGrid g(grid_n_, grid_n_);
        for (std::size_t i = 0; i < support_.size(); ++i) g[support_[i]] = value(k, i);
        return g;
    }

    /// Binary disk mask on which the modes are orthonormal.
    [[nodiscard]] const Aperture& mask() const noexcept { return mask_; }

    /// Identifier used to tie coefficient vectors to the basis that produced them.
    [[nodiscard]] std::string id() const {
        std::string s = "zernike:" + std::to_string(grid_n_) + ":" + std::to_string(radius_px_) + ":";
        for (const auto& ix : indices_) s += std::to_string(ix.noll) + ",";
        return s;
    }

private:
    void build() {
        const double centre = static_cast<double>(grid_n_ / 2);
        RealGrid mask(grid_n_, grid_n_);
        std::vector<double> rho;
        std::vector<double> theta;
        for (std::size_t r = 0; r < grid_n_; ++r)
            for (std::size_t c = 0; c < grid_n_; ++c) {
                const double x = static_cast<double>(c) - centre;
                const double y = centre - static_cast<double>(r);
                const double rr = std::hypot(x, y) / radius_px_;
                if (rr > 1.0) continue;
                mask(r, c) = 1.0;
                support_.push_back(r * grid_n_ + c);
                rho.push_back(rr);
                theta.push_back(std::atan2(y, x));
            }
        mask_ = Aperture(std::move(mask), ApertureShape::disk, Headroom::not_required);

        const std::size_t p = support_.size();
        const double inv_p = 1.0 / static_cast<double>(p);
        values_.assign(indices_.size() * p, 0.0);
        for (std::size_t k = 0; k < indices_.size(); ++k) {
            if (indices_[k].n < 1) throw ArgumentError("ZernikeBasis: piston is not a basis member");
            double* v = values_.data() + k * p;
            for (std::size_t i = 0; i < p; ++i) v[i] = zernike_value(indices_[k].n, indices_[k].m, rho[i], theta[i]);
            // orthogonal to constants
            double mean = 0.0;
            for (std::size_t i = 0; i < p; ++i) mean += v[i];
            mean *= inv_p;
            for (std::size_t i = 0; i < p; ++i) v[i] -= mean;
            for (std::size_t q = 0; q < k; ++q) {
                const double* u = values_.data() + q * p;
                double dot = 0.0;
                for (std::size_t i = 0; i < p; ++i) dot += u[i] * v[i];
                dot *= inv_p;
                for (std::size_t i = 0; i < p; ++i) v[i] -= dot * u[i];
            }
            double ss = 0.0;
            for (std::size_t i = 0; i < p; ++i) ss += v[i] * v[i];
            const double rms = std::sqrt(ss * inv_p);
            if (!(rms > 1e-9)) throw ArgumentError("ZernikeBasis: disk too coarse to resolve the requested modes");
            for (std::size_t i = 0; i < p; ++i) v[i] /= rms;
        }
    }

    std::size_t grid_n_ = 0;
    double radius_px_ = 0.0;
    std::vector<ZernikeIndex> indices_;
    std::vector<std::size_t> support_;
    std::vector<double> values_;
    Aperture mask_;
};

/// Zernike coefficient vector (radians RMS per mode) tied to its basis.
struct ZernikeCoeffs {
    std::vector<double> values;
    std::string basis_id;

    [[nodiscard]] double norm() const {
        double s = 0.0;
        for (double v : values) s += v * v;
        return std::sqrt(s);
    }
};

/// Disk radius in pixels for a fraction of the aperture headroom radius n/4.
[[nodiscard]] inline double zernike_radius_px(std::size_t grid_n, double disk_radius_fraction) {
    return disk_radius_fraction * static_cast<double>(grid_n) / 4.0;
}

[[nodiscard]] inline std::vector<ZernikeIndex> zernike_indices(int max_order, ZernikeOrdering ordering) {
    if (max_order < 1) throw ArgumentError("zernike basis: max_radial_order must be >= 1");
    std::vector<ZernikeIndex> out;
    if (ordering == ZernikeOrdering::first_modes) {
        for (int j = 2; j < 2 + max_order; ++j) out.push_back(noll_to_nm(j));
        return out;
    }
    for (int j = 2;; ++j) {
        const auto ix = noll_to_nm(j);
        if (ix.n > max_order) break;
        out.push_back(ix);
    }
    return out;
}

/// Basis on an n x n grid whose disk radius is disk_radius_fraction * n / 4, so that a fraction
/// of 1 reaches the edge of the central half-grid.
[[nodiscard]] inline ZernikeBasis build_basis(std::size_t grid_n, double disk_radius_fraction, int max_radial_order,
                                              ZernikeOrdering ordering = ZernikeOrdering::radial_order) {
    if (!(disk_radius_fraction > 0.0 && disk_radius_fraction <= 1.0))
        throw ArgumentError("build_basis: disk radius fraction must lie in (0, 1]");
    return ZernikeBasis(grid_n, zernike_radius_px(grid_n, disk_radius_fraction),
                        zernike_indices(max_radial_order, ordering));
}

inline void require_matching(const ZernikeCoeffs& coeffs, const ZernikeBasis& basis) {
    if (coeffs.values.size() != basis.mode_count())
        throw DimensionError("zernike: coefficient count does not match basis");
    if (!coeffs.basis_id.empty() && coeffs.basis_id != basis.id())
        throw DimensionError("zernike: coefficients belong to a different basis");
}

[[nodiscard]] inline PhaseMap phase_from_coeffs(const ZernikeCoeffs& coeffs, const ZernikeBasis& basis) {
    require_matching(coeffs, basis);
    PhaseMap out(basis.grid_n());
    auto& g = out.values();
    const auto& sup = basis.support();
    for (std::size_t k = 0; k < basis.mode_count(); ++k) {
        const double ck = coeffs.values[k];
        if (ck == 0.0) continue;
        const auto mv = basis.mode_values(k);
        for (std::size_t i = 0; i < sup.size(); ++i) g[sup[i]] += ck * mv[i];
    }
    return out;
}

/// Gaussian coefficients with per-mode standard deviation (1 + n)^(-decay / 2), modes below
/// min_order forced to zero, rescaled so the vector norm equals rms_target.
[[nodiscard]] inline ZernikeCoeffs sample_coeffs(std::uint64_t seed, double rms_target, const ZernikeBasis& basis,
                                                 double decay = 0.0, int min_order = 1) {
    if (!(rms_target > 0.0)) throw ArgumentError("sample_coeffs: rms_target must be > 0");
    if (!(decay >= 0.0)) throw ArgumentError("sample_coeffs: decay must be >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ZernikeCoeffs c{std::vector<double>(basis.mode_count(), 0.0), basis.id()};
    for (std::size_t k = 0; k < basis.mode_count(); ++k) {
        const double g = gauss(rng);  // drawn for every mode so min_order does not reshuffle the stream
        const int n = basis.indices()[k].n;
        if (n < min_order) continue;
        c.values[k] = g * std::pow(1.0 + n, -decay / 2.0);
    }
    const double norm = c.norm();
    if (!(norm > 0.0)) throw ArgumentError("sample_coeffs: no modes left to sample");
    for (double& v : c.values) v *= rms_target / norm;
    return c;
}

/// Least-squares projection of a phase onto the basis over the disk. The modes are orthonormal
/// and orthogonal to piston, so the projection is a set of inner products.
[[nodiscard]] inline ZernikeCoeffs fit_coeffs(const PhaseMap& phase, const ZernikeBasis& basis) {
    if (phase.n() != basis.grid_n()) throw DimensionError("fit_coeffs: grid size mismatch");
    const auto& sup = basis.support();
    const double inv_p = 1.0 / static_cast<double>(sup.size());
    ZernikeCoeffs c{std::vector<double>(basis.mode_count(), 0.0), basis.id()};
    for (std::size_t k = 0; k < basis.mode_count(); ++k) {
        const auto mv = basis.mode_values(k);
        double dot = 0.0;
        for (std::size_t i = 0; i < sup.size(); ++i) dot += mv[i] * phase.values()[sup[i]];
        c.values[k] = dot * inv_p;
    }
    return c;
}

/// RMS of a phase over the nonzero samples of a mask, after removing its mean.
[[nodiscard]] inline double rms_over(const PhaseMap& phase, const Aperture& mask) {
    require_same_shape(phase.values(), mask.amplitude(), "rms_over");
    double s = 0.0;
    double s2 = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < phase.values().size(); ++i)
        if (mask.amplitude()[i] > 0.0) {
            s += phase.values()[i];
            s2 += phase.values()[i] * phase.values()[i];
            ++cnt;
        }
    if (cnt == 0) return 0.0;
    const double mean = s / static_cast<double>(cnt);
    return std::sqrt(std::max(0.0, s2 / static_cast<double>(cnt) - mean * mean));
}

struct PhaseGradient {
    RealGrid gx;  // phi(r, c + 1) - phi(r, c)
    RealGrid gy;  // phi(r + 1, c) - phi(r, c)
};

/// Forward differences, kept only where both samples of the pair lie inside the mask.
[[nodiscard]] inline PhaseGradient phase_gradient(const PhaseMap& phase, const Aperture& mask) {
    require_same_shape(phase.values(), mask.amplitude(), "phase_gradient");
    const std::size_t n = phase.n();
    PhaseGradient g{RealGrid(n, n), RealGrid(n, n)};
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            if (!mask.in_support(r, c)) continue;
            if (c + 1 < n && mask.in_support(r, c + 1)) g.gx(r, c) = phase(r, c + 1) - phase(r, c);
            if (r + 1 < n && mask.in_support(r + 1, c)) g.gy(r, c) = phase(r + 1, c) - phase(r, c);
        }
    return g;
}

}  // namespace gfao
