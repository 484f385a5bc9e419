#pragma once

#include <functional>
#include <string_view>

#include <Eigen/Dense>

#include "gfao/aperture.hpp"
#include "gfao/optics.hpp"
#include "gfao/phase_map.hpp"
#include "gfao/zernike.hpp"

namespace gfao {

enum class SolverStatus { converged, not_converged, diverged };

[[nodiscard]] inline std::string_view to_string(SolverStatus s) {
    switch (s) {
        case SolverStatus::converged: return "converged";
        case SolverStatus::not_converged: return "not_converged";
        case SolverStatus::diverged: return "diverged";
    }
    return "unknown";
}

/// Called by iterative solvers with (iteration, objective).
using ProgressCallback = std::function<void(int, double)>;

struct PsfEstimate {
    Psf psf;  // unit energy
    double fidelity = 0.0;
    int iterations_used = 0;
    SolverStatus status = SolverStatus::converged;
};

struct PhaseEstimate {
    PhaseMap phase;
    ZernikeCoeffs coeffs;
    double residual = 0.0;
    SolverStatus status = SolverStatus::converged;
    bool ambiguous = false;  // aperture is point-symmetric: phase and its conjugate flip fit equally
};

/// Subtracts the least-squares plane a + b x + c y fitted over the aperture support. Samples
/// outside the support are set to zero.
[[nodiscard]] inline PhaseMap remove_tilt_piston(const PhaseMap& phase, const Aperture& aperture) {
    require_same_shape(phase.values(), aperture.amplitude(), "remove_tilt_piston");
    const std::size_t n = phase.n();
    const double centre = static_cast<double>(n / 2);
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            if (!aperture.in_support(r, c)) continue;
            const Eigen::Vector3d row(1.0, static_cast<double>(c) - centre, static_cast<double>(r) - centre);
            ata += row * row.transpose();
            atb += row * phase(r, c);
        }
    const Eigen::Vector3d plane = ata.ldlt().solve(atb);
    PhaseMap out(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            if (!aperture.in_support(r, c)) continue;
            out(r, c) = phase(r, c) - plane[0] - plane[1] * (static_cast<double>(c) - centre) -
                        plane[2] * (static_cast<double>(r) - centre);
        }
    return out;
}

/// Least-squares coefficients of `basis` (plus a free piston) matching `phase` over the
/// aperture support. Unlike fit_coeffs, pixels outside the aperture carry no weight.
[[nodiscard]] inline ZernikeCoeffs project_over_aperture(const PhaseMap& phase, const ZernikeBasis& basis,
                                                         const Aperture& aperture) {
    require_same_shape(phase.values(), aperture.amplitude(), "project_over_aperture");
    if (basis.grid_n() != aperture.n()) throw DimensionError("project_over_aperture: grid size mismatch");
    const auto k = static_cast<Eigen::Index>(basis.mode_count());
    const auto& sup = basis.support();
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(k + 1);
    Eigen::VectorXd row(k + 1);
    for (std::size_t i = 0; i < sup.size(); ++i) {
        const std::size_t px = sup[i];
        if (aperture.amplitude()[px] <= 0.0) continue;
        row[0] = 1.0;
        for (Eigen::Index j = 0; j < k; ++j) row[j + 1] = basis.value(static_cast<std::size_t>(j), i);
        ata += row * row.transpose();
        atb += row * phase.values()[px];
    }
    const Eigen::VectorXd sol = ata.ldlt().solve(atb);
    return {std::vector<double>(sol.data() + 1, sol.data() + sol.size()), basis.id()};
}

}  // namespace gfao
