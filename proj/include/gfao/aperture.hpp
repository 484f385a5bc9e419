#pragma once

// Pupil amplitude masks: synthesis, point-symmetry classification, and checkerboard
// encoding of zero-amplitude regions onto a phase-only modulator.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "gfao/fft.hpp"
#include "gfao/grid.hpp"
#include "gfao/phase_map.hpp"

namespace gfao {

enum class ApertureShape { disk, rectangle, triangle, bitmap };

[[nodiscard]] inline std::string_view to_string(ApertureShape s) {
    switch (s) {
        case ApertureShape::disk: return "disk";
        case ApertureShape::rectangle: return "rectangle";
        case ApertureShape::triangle: return "triangle";
        case ApertureShape::bitmap: return "bitmap";
    }
    return "unknown";
}

[[nodiscard]] inline ApertureShape parse_aperture_shape(std::string_view s) {
    if (s == "disk") return ApertureShape::disk;
    if (s == "rectangle") return ApertureShape::rectangle;
    if (s == "triangle") return ApertureShape::triangle;
    if (s == "bitmap") return ApertureShape::bitmap;
    throw ArgumentError("unknown aperture shape '" + std::string(s) + "'");
}

/// Whether the support must stay inside the central half-grid. Masks used only on the
/// modulator plane (never zero-padded) may opt out.
enum class Headroom { required, not_required };

/// Pupil amplitude transmission in [0, 1]. By default the support must stay inside the central
/// half of the grid, which leaves room for 2x zero padding without wrap-around.
class Aperture {
public:
    Aperture() = default;
    Aperture(RealGrid amplitude, ApertureShape shape, Headroom headroom = Headroom::required)
        : amplitude_(std::move(amplitude)), shape_(shape) {
        const std::size_t n = amplitude_.rows();
        if (!amplitude_.is_square() || n < 8 || !is_power_of_two(n))
            throw DimensionError("Aperture: grid must be square with a power-of-two side >= 8");
        const long lo = -static_cast<long>(n / 4);
        const long hi = static_cast<long>(n / 4);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) {
                const double a = amplitude_(r, c);
                if (!(a >= 0.0 && a <= 1.0)) throw ArgumentError("Aperture: amplitude outside [0, 1]");
                if (a == 0.0) continue;
                ++fill_count_;
                const long y = static_cast<long>(r) - static_cast<long>(n / 2);
                const long x = static_cast<long>(c) - static_cast<long>(n / 2);
                if (headroom == Headroom::required && (y < lo || y >= hi || x < lo || x >= hi))
                    throw ArgumentError("Aperture: support extends beyond the central half of the grid");
            }
        if (fill_count_ == 0) throw ArgumentError("Aperture: empty support");
    }

    [[nodiscard]] const RealGrid& amplitude() const noexcept { return amplitude_; }
    [[nodiscard]] ApertureShape shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t fill_count() const noexcept { return fill_count_; }
    [[nodiscard]] std::size_t n() const noexcept { return amplitude_.rows(); }
    [[nodiscard]] bool in_support(std::size_t r, std::size_t c) const noexcept {
        return amplitude_(r, c) > 0.0;
    }
    /// Sum of |A|^2, the pupil energy under the unitary transform.
    [[nodiscard]] double energy() const noexcept {
        double e = 0.0;
        for (double a : amplitude_) e += a * a;
        return e;
    }

private:
    RealGrid amplitude_;
    ApertureShape shape_ = ApertureShape::bitmap;
    std::size_t fill_count_ = 0;
};

/// Builds a binary aperture inscribed in a circle of radius size_fraction * n / 2 around the
/// grid centre. Disk and rectangle (4:3) are point-symmetric; the triangle is equilateral with
/// its centroid on the centre and apex towards row 0.
[[nodiscard]] inline Aperture make_aperture(ApertureShape shape, std::size_t grid_n, double size_fraction) {
    if (!(size_fraction > 0.0 && size_fraction < 1.0))
        throw ArgumentError("make_aperture: size_fraction must lie in (0, 1)");
    if (grid_n < 8 || !is_power_of_two(grid_n))
        throw ArgumentError("make_aperture: grid size must be a power of two >= 8");
    if (shape == ApertureShape::bitmap)
        throw ArgumentError("make_aperture: bitmap apertures are loaded from images");
    const double radius = size_fraction * static_cast<double>(grid_n) / 2.0;
    if (radius >= static_cast<double>(grid_n) / 4.0)
        throw ArgumentError("make_aperture: size_fraction too large for the central half-grid");

    const double half_w = 0.8 * radius;
    const double half_h = 0.6 * radius;
    const double s3 = std::sqrt(3.0);

    RealGrid amp(grid_n, grid_n);
    const double centre = static_cast<double>(grid_n / 2);
    for (std::size_t r = 0; r < grid_n; ++r) {
        const double y = static_cast<double>(r) - centre;  // grows away from the apex
        for (std::size_t c = 0; c < grid_n; ++c) {
            const double x = static_cast<double>(c) - centre;
            bool inside = false;
            switch (shape) {
                case ApertureShape::disk: inside = x * x + y * y <= radius * radius; break;
                case ApertureShape::rectangle: inside = std::abs(x) <= half_w && std::abs(y) <= half_h; break;
                case ApertureShape::triangle:
                    // apex (0, -R), base vertices (+-R*sqrt(3)/2, R/2)
                    inside = y <= radius / 2.0 && s3 * x - y <= radius && -s3 * x - y <= radius;
                    break;
                case ApertureShape::bitmap: break;
            }
            amp(r, c) = inside ? 1.0 : 0.0;
        }
    }
    return Aperture(std::move(amp), shape);
}

/// True iff max |A(x, y) - A(-x, -y)| <= tol under the FFT-centre reflection.
[[nodiscard]] inline bool is_point_symmetric(const Aperture& aperture, double tol = 0.0) {
    const auto& a = aperture.amplitude();
    const std::size_t n = a.rows();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            if (std::abs(a(r, c) - a(mirror_index(r, n), mirror_index(c, n))) > tol) return false;
    return true;
}

/// Pixelwise maximum of an aperture and its point reflection.
[[nodiscard]] inline Aperture symmetrize(const Aperture& aperture) {
    const RealGrid flipped = point_reflect(aperture.amplitude());
    RealGrid out = aperture.amplitude();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], flipped[i]);
    return Aperture(std::move(out), ApertureShape::bitmap);
}

/// Phase pattern for a phase-only modulator that realises the aperture's zero-amplitude
/// region: pixels outside the support alternate between slm_phase and slm_phase + amplitude in
/// a one-pixel checkerboard, which pushes their light to the highest spatial frequencies.
/// Pixels inside the support are left untouched.
[[nodiscard]] inline PhaseMap checkerboard_encode(const Aperture& aperture, const PhaseMap& slm_phase,
                                                  double checker_amplitude) {
    if (!(checker_amplitude > 0.0 && checker_amplitude <= std::numbers::pi))
        throw ArgumentError("checkerboard_encode: amplitude must lie in (0, pi]");
    require_same_shape(aperture.amplitude(), slm_phase.values(), "checkerboard_encode");
    PhaseMap out = slm_phase;
    const std::size_t n = aperture.n();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            if (!aperture.in_support(r, c) && ((r + c) & 1U) != 0) out(r, c) += checker_amplitude;
    return out;
}

struct CheckerboardLeakage {
    double encoded = 0.0;      // energy outside support after low-pass, encoded pattern
    double unsuppressed = 0.0; // same, for the bare slm phase
    [[nodiscard]] double ratio() const noexcept { return unsuppressed > 0.0 ? encoded / unsuppressed : 0.0; }
};

namespace detail {

// Energy outside the support of a unit-amplitude phase-only field after keeping only the
// central quarter band (|k| < n/4 on both axes) of its spectrum.
inline double lowpass_energy_outside(const Aperture& aperture, const PhaseMap& phase) {
    const std::size_t n = aperture.n();
    ComplexGrid field(n, n);
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = std::polar(1.0, phase.values()[i]);
    ComplexGrid spec = fft::centered_unitary(field, fft::Direction::forward);
    const long half = static_cast<long>(n / 2);
    const long band = static_cast<long>(n / 4);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const long kr = static_cast<long>(r) - half;
            const long kc = static_cast<long>(c) - half;
            if (std::abs(kr) >= band || std::abs(kc) >= band) spec(r, c) = 0.0;
        }
    const ComplexGrid filtered = fft::centered_unitary(spec, fft::Direction::inverse);
    double e = 0.0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            if (!aperture.in_support(r, c)) e += std::norm(filtered(r, c));
    return e;
}

}  // namespace detail

/// Residual zero-order energy outside the aperture after a quarter-band low-pass, a software
/// stand-in for the Fourier-plane stop of the relay optics.
[[nodiscard]] inline CheckerboardLeakage checkerboard_leakage(const Aperture& aperture, const PhaseMap& slm_phase,
                                                              const PhaseMap& encoded) {
    return {detail::lowpass_energy_outside(aperture, encoded),
            detail::lowpass_energy_outside(aperture, slm_phase)};
}

}  // namespace gfao
