#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "gfao/optics.hpp"

namespace gfao {

/// Procedural test scene: a smooth background with overlapping flat-shaded rectangles, disks
/// and triangles, a few thin lines and a striped patch. Deterministic in the seed.
[[nodiscard]] inline SceneImage textured_scene(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double R = static_cast<double>(rows);
    const double C = static_cast<double>(cols);
    RealGrid g(rows, cols);
    const double gx = 0.3 * (u(rng) - 0.5);
    const double gy = 0.3 * (u(rng) - 0.5);
    const double base = 0.3 + 0.3 * u(rng);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g(r, c) = base + gx * (c / C - 0.5) + gy * (r / R - 0.5);

    const int shapes = 18 + static_cast<int>(u(rng) * 10);
    for (int s = 0; s < shapes; ++s) {
        const int kind = static_cast<int>(u(rng) * 3.0);
        const double cy = u(rng) * R;
        const double cx = u(rng) * C;
        const double size = (0.04 + 0.16 * u(rng)) * std::min(R, C);
        const double level = u(rng);
        const double angle = u(rng) * std::numbers::pi;
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double aspect = 0.4 + 0.6 * u(rng);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const double dy = static_cast<double>(r) - cy;
                const double dx = static_cast<double>(c) - cx;
                const double xr = ca * dx + sa * dy;
                const double yr = -sa * dx + ca * dy;
                bool inside = false;
                switch (kind) {
                    case 0: inside = std::abs(xr) <= size && std::abs(yr) <= aspect * size; break;
                    case 1: inside = xr * xr + (yr / aspect) * (yr / aspect) <= size * size; break;
                    default:
                        inside = yr <= size / 2 && std::sqrt(3.0) * xr - yr <= size && -std::sqrt(3.0) * xr - yr <= size;
                        break;
                }
                if (inside) g(r, c) = level;
            }
    }
    const int lines = 3 + static_cast<int>(u(rng) * 4);
    for (int l = 0; l < lines; ++l) {
        const double angle = u(rng) * std::numbers::pi;
        const double offset = (u(rng) - 0.5) * std::min(R, C);
        const double level = u(rng);
        const double nx = std::cos(angle), ny = std::sin(angle);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const double d = nx * (static_cast<double>(c) - C / 2) + ny * (static_cast<double>(r) - R / 2) - offset;
                if (std::abs(d) < 1.0) g(r, c) = level;
            }
    }
    // striped patch
    const double sy = u(rng) * R * 0.7, sx = u(rng) * C * 0.7;
    const double period = 4.0 + 6.0 * u(rng);
    for (std::size_t r = static_cast<std::size_t>(sy); r < std::min(rows, static_cast<std::size_t>(sy + 0.25 * R)); ++r)
        for (std::size_t c = static_cast<std::size_t>(sx); c < std::min(cols, static_cast<std::size_t>(sx + 0.25 * C)); ++c)
            g(r, c) = std::fmod(static_cast<double>(c + r) / period, 1.0) < 0.5 ? 0.15 : 0.85;
    return SceneImage(std::move(g));
}

}  // namespace gfao
