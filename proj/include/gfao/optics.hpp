#pragma once

// Wave-optics forward model: pupil construction, PSF formation and incoherent image formation.
//
// Conventions used throughout the library:
//  * grids are sampled with the optical axis at index (n/2, n/2);
//  * Fourier transforms are unitary and centred, so sum(psf) equals the pupil energy;
//  * the point reflection (x, y) -> (-x, -y) is the index map k -> (n - k) mod n.

#include <cmath>
#include <cstdint>
#include <random>

#include "gfao/aperture.hpp"
#include "gfao/fft.hpp"
#include "gfao/grid.hpp"
#include "gfao/phase_map.hpp"

namespace gfao {

inline constexpr int kDefaultPadFactor = 2;

/// Complex pupil-plane field on a square power-of-two grid.
class ComplexField {
public:
    ComplexField() = default;
    explicit ComplexField(ComplexGrid grid, double dx = 1.0) : grid_(std::move(grid)), dx_(dx) {
        if (!grid_.is_square() || grid_.rows() < 8 || !is_power_of_two(grid_.rows()))
            throw DimensionError("ComplexField: grid must be square with a power-of-two side >= 8");
        for (const auto& v : grid_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw ArgumentError("ComplexField: non-finite sample");
    }

    [[nodiscard]] const ComplexGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t n() const noexcept { return grid_.rows(); }
    [[nodiscard]] double dx() const noexcept { return dx_; }
    [[nodiscard]] double energy() const noexcept {
        double e = 0.0;
        for (const auto& v : grid_) e += std::norm(v);
        return e;
    }

private:
    ComplexGrid grid_;
    double dx_ = 1.0;
};

/// Nonnegative intensity kernel, centred at (rows/2, cols/2).
class Psf {
public:
    Psf() = default;
    explicit Psf(RealGrid kernel) : kernel_(std::move(kernel)) {
        if (kernel_.empty()) throw ArgumentError("Psf: empty kernel");
        for (double& v : kernel_) {
            if (!std::isfinite(v) || v < 0.0) throw ArgumentError("Psf: negative or non-finite entry");
            energy_ += v;
        }
        if (!(energy_ > 0.0)) throw ArgumentError("Psf: zero energy");
    }

    [[nodiscard]] const RealGrid& kernel() const noexcept { return kernel_; }
    [[nodiscard]] double energy() const noexcept { return energy_; }
    [[nodiscard]] std::size_t rows() const noexcept { return kernel_.rows(); }
    [[nodiscard]] std::size_t cols() const noexcept { return kernel_.cols(); }

    /// Copy scaled to the requested total energy.
    [[nodiscard]] Psf scaled_to(double total) const {
        RealGrid k = kernel_;
        k *= total / energy_;
        return Psf(std::move(k));
    }
    [[nodiscard]] Psf normalized() const { return scaled_to(1.0); }

private:
    RealGrid kernel_;
    double energy_ = 0.0;
};

/// Scene radiance in [0, 1]; values are clamped on construction.
class SceneImage {
public:
    SceneImage() = default;
    explicit SceneImage(RealGrid pixels) : pixels_(std::move(pixels)) {
        if (pixels_.empty()) throw ArgumentError("SceneImage: empty image");
        for (double& v : pixels_) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    }
    [[nodiscard]] const RealGrid& pixels() const noexcept { return pixels_; }
    [[nodiscard]] std::size_t width() const noexcept { return pixels_.cols(); }
    [[nodiscard]] std::size_t height() const noexcept { return pixels_.rows(); }

private:
    RealGrid pixels_;
};

/// Sensor image Y = X (*) H + noise.
struct Measurement {
    RealGrid pixels;
    double noise_sigma = 0.0;
};

enum class ConvolutionMode { circular, linear };

/// A o e^{j phi}.
[[nodiscard]] inline ComplexField pupil_function(const Aperture& aperture, const PhaseMap& phase) {
    require_same_shape(aperture.amplitude(), phase.values(), "pupil_function");
    const auto& a = aperture.amplitude();
    ComplexGrid g(a.rows(), a.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = a[i] == 0.0 ? Complex{} : std::polar(a[i], phase.values()[i]);
    return ComplexField(std::move(g));
}

/// |F{pupil}|^2 after zero-padding the pupil to pad_factor * n.
[[nodiscard]] inline Psf psf_from_pupil(const ComplexField& pupil, int pad_factor = kDefaultPadFactor) {
    if (pad_factor < 1) throw ArgumentError("psf_from_pupil: pad_factor must be >= 1");
    const std::size_t m = pupil.n() * static_cast<std::size_t>(pad_factor);
    const ComplexGrid spectrum =
        fft::centered_unitary(embed_centered(pupil.grid(), m, m), fft::Direction::forward);
    return Psf(abs2(spectrum));
}

[[nodiscard]] inline Psf psf_of(const Aperture& aperture, const PhaseMap& phase, int pad_factor = kDefaultPadFactor) {
    return psf_from_pupil(pupil_function(aperture, phase), pad_factor);
}

/// Diffraction-limited PSF |F{A}|^2.
[[nodiscard]] inline Psf bare_psf(const Aperture& aperture, int pad_factor = kDefaultPadFactor) {
    return psf_of(aperture, PhaseMap(aperture.n()), pad_factor);
}

/// -phi(-x, -y).
[[nodiscard]] inline PhaseMap conjugate_flip(const PhaseMap& phase) {
    PhaseMap out(point_reflect(phase.values()));
    out *= -1.0;
    return out;
}

/// PSF for residual phi_o + phi_slm.
[[nodiscard]] inline Psf corrected_psf(const Aperture& aperture, const PhaseMap& phi_o, const PhaseMap& phi_slm,
                                       int pad_factor = kDefaultPadFactor) {
    require_same_shape(phi_o.values(), phi_slm.values(), "corrected_psf");
    return psf_of(aperture, phi_o + phi_slm, pad_factor);
}

/// Convolution of an image with a centred kernel, output the size of the image.
/// Circular mode wraps at the borders; linear mode treats the image as zero outside.
[[nodiscard]] inline RealGrid convolve(const RealGrid& image, const RealGrid& kernel,
                                       ConvolutionMode mode = ConvolutionMode::circular) {
    // A single-tap kernel is a scaled shift; do it directly so it stays exact.
    std::size_t taps = 0;
    std::size_t tap = 0;
    for (std::size_t i = 0; i < kernel.size() && taps < 2; ++i)
        if (kernel[i] != 0.0) {
            ++taps;
            tap = i;
        }
    if (taps == 1) {
        const long dr = static_cast<long>(tap / kernel.cols()) - static_cast<long>(kernel.rows() / 2);
        const long dc = static_cast<long>(tap % kernel.cols()) - static_cast<long>(kernel.cols() / 2);
        const double w = kernel[tap];
        RealGrid out(image.rows(), image.cols());
        const long R = static_cast<long>(image.rows());
        const long C = static_cast<long>(image.cols());
        for (long r = 0; r < R; ++r)
            for (long c = 0; c < C; ++c) {
                long sr = r - dr;
                long sc = c - dc;
                if (mode == ConvolutionMode::circular) {
                    sr = (sr % R + R) % R;
                    sc = (sc % C + C) % C;
                } else if (sr < 0 || sr >= R || sc < 0 || sc >= C) {
                    continue;
                }
                out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                    w * image(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
            }
        return out;
    }
    if (mode == ConvolutionMode::circular) {
        ComplexGrid spec = fft::forward_real(image);
        const ComplexGrid ks = fft::kernel_spectrum(kernel, image.rows(), image.cols());
        for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= ks[i];
        return fft::inverse_to_real(std::move(spec));
    }
    const std::size_t pr = image.rows() + kernel.rows();
    const std::size_t pc = image.cols() + kernel.cols();
    RealGrid padded(pr, pc);
    for (std::size_t r = 0; r < image.rows(); ++r)
        for (std::size_t c = 0; c < image.cols(); ++c) padded(r, c) = image(r, c);
    ComplexGrid spec = fft::forward_real(padded);
    const ComplexGrid ks = fft::kernel_spectrum(kernel, pr, pc);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= ks[i];
    const RealGrid full = fft::inverse_to_real(std::move(spec));
    RealGrid out(image.rows(), image.cols());
    for (std::size_t r = 0; r < image.rows(); ++r)
        for (std::size_t c = 0; c < image.cols(); ++c) out(r, c) = full(r, c);
    return out;
}

/// Y = X (*) H + eps with H rescaled to unit energy and eps ~ N(0, sigma^2) i.i.d.
/// Kernels larger than the scene are cropped about their centre before use. Negative sensor
/// values are clipped to zero.
[[nodiscard]] inline Measurement image_measurement(const SceneImage& scene, const Psf& psf, double noise_sigma,
                                                   std::uint64_t seed,
                                                   ConvolutionMode mode = ConvolutionMode::circular) {
    if (!(noise_sigma >= 0.0)) throw ArgumentError("image_measurement: noise sigma must be >= 0");
    const auto& x = scene.pixels();
    RealGrid kernel = psf.kernel();
    if (mode == ConvolutionMode::circular && (kernel.rows() > x.rows() || kernel.cols() > x.cols()))
        kernel = crop_centered(kernel, std::min(kernel.rows(), x.rows()), std::min(kernel.cols(), x.cols()));
    const double e = sum(kernel);
    if (!(e > 0.0)) throw ArgumentError("image_measurement: kernel has no energy inside the scene window");
    kernel *= 1.0 / e;

    Measurement m{convolve(x, kernel, mode), noise_sigma};
    if (noise_sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, noise_sigma);
        for (double& v : m.pixels) v += noise(rng);
    }
    for (double& v : m.pixels) v = std::max(v, 0.0);
    return m;
}

}  // namespace gfao
