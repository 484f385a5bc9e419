#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfao {

using Complex = std::complex<double>;

/// Raised when two grids that must agree in shape do not.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for out-of-range scalar arguments.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a file does not follow its declared format.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a file cannot be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major 2-D array. Row index first, column index second.
template <class T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Grid(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw DimensionError("grid data size does not match its shape");
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
    [[nodiscard]] bool is_square() const noexcept { return rows_ == cols_; }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] std::span<T> span() noexcept { return data_; }
    [[nodiscard]] std::span<const T> span() const noexcept { return data_; }
    [[nodiscard]] T* data() noexcept { return data_.data(); }
    [[nodiscard]] const T* data() const noexcept { return data_.data(); }
    [[nodiscard]] const std::vector<T>& vector() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    [[nodiscard]] bool same_shape(const Grid<T>& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }
    template <class U>
    [[nodiscard]] bool same_shape(const Grid<U>& o) const noexcept {
        return rows_ == o.rows() && cols_ == o.cols();
    }

    bool operator==(const Grid&) const = default;

    Grid& operator+=(const Grid& o) {
        require_shape(o, "grid +=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Grid& operator-=(const Grid& o) {
        require_shape(o, "grid -=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    template <class S>
    Grid& operator*=(S s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

private:
    void require_shape(const Grid& o, const char* what) const {
        if (!same_shape(o)) throw DimensionError(std::string(what) + ": shape mismatch");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

template <class T>
Grid<T> operator+(Grid<T> a, const Grid<T>& b) { return a += b; }
template <class T>
Grid<T> operator-(Grid<T> a, const Grid<T>& b) { return a -= b; }
template <class T, class S>
Grid<T> operator*(Grid<T> a, S s) { return a *= s; }
template <class T, class S>
Grid<T> operator*(S s, Grid<T> a) { return a *= s; }

using RealGrid = Grid<double>;
using ComplexGrid = Grid<Complex>;

template <class A, class B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) +
                             "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()) + ")");
}

[[nodiscard]] constexpr bool is_power_of_two(std::size_t n) noexcept {
    return n != 0 && (n & (n - 1)) == 0;
}

template <class T>
[[nodiscard]] double sum(const Grid<T>& g) {
    double s = 0.0;
    for (const auto& v : g) s += static_cast<double>(v);
    return s;
}

[[nodiscard]] inline double max_value(const RealGrid& g) {
    return g.empty() ? 0.0 : *std::max_element(g.begin(), g.end());
}

/// Relative L2 distance ||a - b|| / ||a||, with ||a|| == 0 treated as absolute distance.
[[nodiscard]] inline double relative_l2(const RealGrid& a, const RealGrid& b) {
    require_same_shape(a, b, "relative_l2");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        num += d * d;
        den += a[i] * a[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

[[nodiscard]] inline RealGrid abs2(const ComplexGrid& g) {
    RealGrid out(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::norm(g[i]);
    return out;
}

/// Copies `src` into the centre of a larger zero grid. Centres follow the FFT convention
/// (index n/2), so the centre of `src` lands on the centre of the result.
template <class T>
[[nodiscard]] Grid<T> embed_centered(const Grid<T>& src, std::size_t rows, std::size_t cols) {
    if (rows < src.rows() || cols < src.cols())
        throw DimensionError("embed_centered: target smaller than source");
    Grid<T> out(rows, cols);
    const std::size_t r0 = rows / 2 - src.rows() / 2;
    const std::size_t c0 = cols / 2 - src.cols() / 2;
    for (std::size_t r = 0; r < src.rows(); ++r)
        for (std::size_t c = 0; c < src.cols(); ++c) out(r0 + r, c0 + c) = src(r, c);
    return out;
}

/// Inverse of embed_centered: the window of the given shape around the FFT centre.
template <class T>
[[nodiscard]] Grid<T> crop_centered(const Grid<T>& src, std::size_t rows, std::size_t cols) {
    if (rows > src.rows() || cols > src.cols())
        throw DimensionError("crop_centered: window larger than source");
    Grid<T> out(rows, cols);
    const std::size_t r0 = src.rows() / 2 - rows / 2;
    const std::size_t c0 = src.cols() / 2 - cols / 2;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = src(r0 + r, c0 + c);
    return out;
}

/// Circular shift: out(r, c) = in(r - dr, c - dc).
template <class T>
[[nodiscard]] Grid<T> circshift(const Grid<T>& in, long dr, long dc) {
    Grid<T> out(in.rows(), in.cols());
    const long R = static_cast<long>(in.rows());
    const long C = static_cast<long>(in.cols());
    for (long r = 0; r < R; ++r) {
        const long rr = ((r + dr) % R + R) % R;
        for (long c = 0; c < C; ++c) {
            const long cc = ((c + dc) % C + C) % C;
            out(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) =
                in(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        }
    }
    return out;
}

}  // namespace gfao
