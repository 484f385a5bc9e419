#pragma once

// Parametric phase refinement: fits Zernike coefficients so that the modelled PSF matches a
// target PSF in least squares, using analytic gradients and a line-search L-BFGS solver.

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gfao/estimators/common.hpp"
#include "gfao/fft.hpp"
#include "gfao/optics.hpp"
#include "gfao/zernike.hpp"

namespace gfao {

struct RefineOptions {
    int max_iterations = 150;
    int pad_factor = kDefaultPadFactor;
    bool fit_scale = false;  // closed-form scale; can reward pushing light out of a small target window
    double function_tolerance = 1e-12;
    double gradient_tolerance = 1e-14;
    double accept_objective = 1e-4;  // final relative misfit reported as converged when the budget runs out
    ProgressCallback progress;
};

/// L(c) = sum_w (H(c) - s T)^2 / sum_w T^2 where H(c) = |F{A e^{j phi(c)}}|^2 on the padded grid,
/// T is the target centred on that grid and w is the window covered by the target. With
/// fit_scale, s minimises L for each c; otherwise s = 1 and T is scaled to the aperture energy.
class PsfFitObjective {
public:
    PsfFitObjective(const Psf& target, const Aperture& aperture, const ZernikeBasis& basis,
                    int pad_factor = kDefaultPadFactor, bool fit_scale = false)
        : aperture_(aperture), basis_(basis), fit_scale_(fit_scale) {
        if (basis.grid_n() != aperture.n()) throw DimensionError("PsfFitObjective: basis and aperture grids differ");
        if (pad_factor < 1) throw ArgumentError("PsfFitObjective: pad_factor must be >= 1");
        m_ = aperture.n() * static_cast<std::size_t>(pad_factor);
        RealGrid t = target.kernel();
        const std::size_t wr = std::min(t.rows(), m_);
        const std::size_t wc = std::min(t.cols(), m_);
        if (wr != t.rows() || wc != t.cols()) t = crop_centered(t, wr, wc);
        t *= aperture.energy() / sum(t);
        target_ = embed_centered(t, m_, m_);
        RealGrid ones(wr, wc, 1.0);
        weight_ = embed_centered(ones, m_, m_);
        for (std::size_t i = 0; i < target_.size(); ++i) target_norm_ += weight_[i] * target_[i] * target_[i];
    }

    [[nodiscard]] std::size_t parameter_count() const noexcept { return basis_.mode_count(); }
    [[nodiscard]] const ZernikeBasis& basis() const noexcept { return basis_; }

    [[nodiscard]] double value(const std::vector<double>& c) const { return evaluate(c.data(), nullptr); }

    [[nodiscard]] double value_of_phase(const PhaseMap& phase) const { return evaluate_phase(phase, nullptr); }

    /// Returns L(c); fills grad (size parameter_count) when non-null.
    double evaluate(const double* c, double* grad) const {
        PhaseMap phase(aperture_.n());
        auto& g = phase.values();
        const auto& sup = basis_.support();
        for (std::size_t k = 0; k < basis_.mode_count(); ++k) {
            const auto mv = basis_.mode_values(k);
            for (std::size_t i = 0; i < sup.size(); ++i) g[sup[i]] += c[k] * mv[i];
        }
        if (!grad) return evaluate_phase(phase, nullptr);
        RealGrid dphi;
        const double value = evaluate_phase(phase, &dphi);
        for (std::size_t k = 0; k < basis_.mode_count(); ++k) {
            const auto mv = basis_.mode_values(k);
            double s = 0.0;
            for (std::size_t i = 0; i < sup.size(); ++i) s += dphi[sup[i]] * mv[i];
            grad[k] = s;
        }
        return value;
    }

    /// Objective of an arbitrary phase map; fills dL/dphi per pixel when dphi is non-null.
    double evaluate_phase(const PhaseMap& phase, RealGrid* dphi) const {
        const ComplexField pupil = pupil_function(aperture_, phase);
        ComplexGrid spectrum = fft::centered_unitary(embed_centered(pupil.grid(), m_, m_), fft::Direction::forward);
        double s = 1.0;
        if (fit_scale_) {
            double ht = 0.0;
            for (std::size_t i = 0; i < spectrum.size(); ++i)
                if (weight_[i] > 0.0) ht += std::norm(spectrum[i]) * target_[i];
            s = target_norm_ > 0.0 ? ht / target_norm_ : 0.0;
        }
        double loss = 0.0;
        for (std::size_t i = 0; i < spectrum.size(); ++i) {
            if (weight_[i] == 0.0) {
                spectrum[i] = 0.0;
                continue;
            }
            const double r = std::norm(spectrum[i]) - s * target_[i];
            loss += r * r;
            spectrum[i] *= r;  // w (H - sT) G, reused for the adjoint
        }
        const double inv_norm = 1.0 / target_norm_;
        if (dphi) {
            // dL/dphi = -4 Im(p conj(Q)), Q = F^-1{w (H - sT) G}; s is stationary so it drops out
            const ComplexGrid q = crop_centered(fft::centered_unitary(spectrum, fft::Direction::inverse),
                                                aperture_.n(), aperture_.n());
            *dphi = RealGrid(aperture_.n(), aperture_.n());
            for (std::size_t i = 0; i < q.size(); ++i)
                (*dphi)[i] = -4.0 * std::imag(pupil.grid()[i] * std::conj(q[i])) * inv_norm;
        }
        return loss * inv_norm;
    }

private:
    const Aperture& aperture_;
    const ZernikeBasis& basis_;
    bool fit_scale_ = true;
    std::size_t m_ = 0;
    RealGrid target_;
    RealGrid weight_;
    double target_norm_ = 0.0;
};

namespace detail {

class CeresPsfFit final : public ceres::FirstOrderFunction {
public:
    explicit CeresPsfFit(const PsfFitObjective& objective) : objective_(objective) {}
    bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
        *cost = objective_.evaluate(parameters, gradient);
        return std::isfinite(*cost);
    }
    int NumParameters() const override { return static_cast<int>(objective_.parameter_count()); }

private:
    const PsfFitObjective& objective_;
};

class ProgressForwarder final : public ceres::IterationCallback {
public:
    explicit ProgressForwarder(const ProgressCallback& cb) : cb_(cb) {}
    ceres::CallbackReturnType operator()(const ceres::IterationSummary& s) override {
        if (cb_) cb_(s.iteration, s.cost);
        return ceres::SOLVER_CONTINUE;
    }

private:
    const ProgressCallback& cb_;
};

}  // namespace detail

/// Minimises the PSF misfit over the coefficients of `basis`, starting from `init`.
/// The returned phase has tip, tilt and piston removed over the aperture.
[[nodiscard]] inline PhaseEstimate refine_phase_zernike(const Psf& psf, const Aperture& aperture,
                                                        const ZernikeCoeffs& init, const ZernikeBasis& basis,
                                                        const RefineOptions& opts = {}) {
    require_matching(init, basis);
    const PsfFitObjective objective(psf, aperture, basis, opts.pad_factor, opts.fit_scale);
    std::vector<double> c = init.values;
    const double initial = objective.value(c);

    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.line_search_type = ceres::WOLFE;
    options.max_num_iterations = opts.max_iterations;
    options.function_tolerance = opts.function_tolerance;
    options.gradient_tolerance = opts.gradient_tolerance;
    options.parameter_tolerance = 1e-12;
    options.logging_type = ceres::SILENT;
    options.minimizer_progress_to_stdout = false;
    detail::ProgressForwarder forward(opts.progress);
    if (opts.progress) options.callbacks.push_back(&forward);

    ceres::GradientProblem problem(new detail::CeresPsfFit(objective));
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, c.data(), &summary);

    double final_value = objective.value(c);
    SolverStatus status = summary.termination_type == ceres::CONVERGENCE || final_value <= opts.accept_objective
                              ? SolverStatus::converged
                              : SolverStatus::not_converged;
    if (!std::isfinite(final_value) || final_value > initial) {
        c = init.values;
        final_value = initial;
        status = SolverStatus::diverged;
    }
    const ZernikeCoeffs fitted{c, basis.id()};
    PhaseMap phase = remove_tilt_piston(phase_from_coeffs(fitted, basis), aperture);
    return {phase, project_over_aperture(phase, basis, aperture), final_value, status, is_point_symmetric(aperture)};
}

}  // namespace gfao
