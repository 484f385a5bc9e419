#pragma once

#include "gfao/grid.hpp"

namespace gfao {

/// Wavefront error in radians sampled on the square pupil grid.
class PhaseMap {
public:
    PhaseMap() = default;
    explicit PhaseMap(std::size_t n, double fill = 0.0) : values_(n, n, fill) {}
    explicit PhaseMap(RealGrid values) : values_(std::move(values)) {
        if (!values_.is_square()) throw DimensionError("PhaseMap: grid must be square");
    }

    [[nodiscard]] std::size_t n() const noexcept { return values_.rows(); }
    [[nodiscard]] const RealGrid& values() const noexcept { return values_; }
    [[nodiscard]] RealGrid& values() noexcept { return values_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_(r, c); }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_(r, c); }

    PhaseMap& operator+=(const PhaseMap& o) {
        values_ += o.values_;
        return *this;
    }
    PhaseMap& operator-=(const PhaseMap& o) {
        values_ -= o.values_;
        return *this;
    }
    PhaseMap& operator*=(double s) {
        values_ *= s;
        return *this;
    }
    PhaseMap& operator+=(double piston) {
        for (auto& v : values_) v += piston;
        return *this;
    }

    bool operator==(const PhaseMap&) const = default;

private:
    RealGrid values_;
};

inline PhaseMap operator+(PhaseMap a, const PhaseMap& b) { return a += b; }
inline PhaseMap operator-(PhaseMap a, const PhaseMap& b) { return a -= b; }
inline PhaseMap operator*(PhaseMap a, double s) { return a *= s; }
inline PhaseMap operator*(double s, PhaseMap a) { return a *= s; }
inline PhaseMap operator-(PhaseMap a) { return a *= -1.0; }
inline PhaseMap operator+(PhaseMap a, double piston) { return a += piston; }

/// Index of the point reflection of `i` about the FFT centre of an n-sample axis.
/// Index 0 is its own mirror on even grids.
[[nodiscard]] constexpr std::size_t mirror_index(std::size_t i, std::size_t n) noexcept {
    return (n - i) % n;
}

/// g(-x, -y) under the FFT-centre index map.
template <class T>
[[nodiscard]] Grid<T> point_reflect(const Grid<T>& g) {
    Grid<T> out(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
            out(r, c) = g(mirror_index(r, g.rows()), mirror_index(c, g.cols()));
    return out;
}

}  // namespace gfao
