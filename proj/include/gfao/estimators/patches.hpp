#pragma once

#include <vector>

#include "gfao/optics.hpp"

namespace gfao {

/// Non-overlapping tiles of a measurement in row-major order.
struct PatchStack {
    std::vector<RealGrid> patches;
    std::size_t patch_rows = 0;
    std::size_t patch_cols = 0;
    std::size_t tiles_down = 0;
    std::size_t tiles_across = 0;

    [[nodiscard]] std::size_t count() const noexcept { return patches.size(); }
};

[[nodiscard]] inline PatchStack patchify(const Measurement& m, std::size_t patch_rows, std::size_t patch_cols) {
    const auto& y = m.pixels;
    if (patch_rows == 0 || patch_cols == 0 || y.rows() % patch_rows != 0 || y.cols() % patch_cols != 0)
        throw ArgumentError("patchify: measurement size is not a multiple of the patch size");
    PatchStack s{{}, patch_rows, patch_cols, y.rows() / patch_rows, y.cols() / patch_cols};
    for (std::size_t tr = 0; tr < s.tiles_down; ++tr)
        for (std::size_t tc = 0; tc < s.tiles_across; ++tc) {
            RealGrid p(patch_rows, patch_cols);
            for (std::size_t r = 0; r < patch_rows; ++r)
                for (std::size_t c = 0; c < patch_cols; ++c) p(r, c) = y(tr * patch_rows + r, tc * patch_cols + c);
            s.patches.push_back(std::move(p));
        }
    return s;
}

[[nodiscard]] inline RealGrid reassemble(const PatchStack& s) {
    RealGrid out(s.tiles_down * s.patch_rows, s.tiles_across * s.patch_cols);
    for (std::size_t i = 0; i < s.patches.size(); ++i) {
        const std::size_t tr = i / s.tiles_across;
        const std::size_t tc = i % s.tiles_across;
        for (std::size_t r = 0; r < s.patch_rows; ++r)
            for (std::size_t c = 0; c < s.patch_cols; ++c)
                out(tr * s.patch_rows + r, tc * s.patch_cols + c) = s.patches[i](r, c);
    }
    return out;
}

}  // namespace gfao
