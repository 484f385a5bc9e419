#pragma once

// Closed-loop correction: measure, estimate the PSF, estimate the phase, subtract the estimate
// from the SLM pattern, repeat.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

#include "gfao/estimators/blind_psf.hpp"
#include "gfao/estimators/phase_retrieval.hpp"
#include "gfao/estimators/refine.hpp"
#include "gfao/metrics.hpp"
#include "gfao/optics.hpp"
#include "gfao/zernike.hpp"

namespace gfao {

/// Derives an independent stream seed (splitmix64 finaliser).
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct SlmState {
    PhaseMap phase;
    int quantization_levels = 0;  // 0 = continuous
    std::vector<PhaseMap> history;

    static SlmState zero(std::size_t n, int levels = 0) { return {PhaseMap(n), levels, {}}; }
};

/// Rounds to the 2 pi / levels lattice and wraps into [0, 2 pi).
[[nodiscard]] inline PhaseMap quantize_phase(const PhaseMap& phase, int levels) {
    if (levels <= 0) return phase;
    const double step = 2.0 * std::numbers::pi / levels;
    PhaseMap out(phase.n());
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        long q = std::lround(phase.values()[i] / step) % levels;
        if (q < 0) q += levels;
        out.values()[i] = static_cast<double>(q) * step;
    }
    return out;
}

/// phi_slm <- phi_slm - gain * update, quantised when the SLM is.
[[nodiscard]] inline SlmState apply_update(const SlmState& slm, const PhaseMap& update, double gain = 1.0) {
    SlmState next = slm;
    next.phase = quantize_phase(slm.phase - gain * update, slm.quantization_levels);
    next.history.push_back(update);
    return next;
}

/// Ground truth handed to oracle-style estimators; real estimators ignore it.
struct Truth {
    const Psf* psf = nullptr;
    const PhaseMap* residual = nullptr;
};

struct Estimators {
    std::function<PsfEstimate(const Measurement&, std::uint64_t seed, const Truth&)> psf;
    std::function<PhaseEstimate(const Psf&, const Aperture&, std::uint64_t seed, const Truth&)> phase;
};

// Full-resolution polishing (fine_er, refinement) overfits errors in blindly estimated
// kernels, so both are off here and on for direct PSF input.
inline PhaseRetrievalOptions loop_retrieval_defaults() {
    PhaseRetrievalOptions o;
    o.fine_er = 0;
    return o;
}

struct EstimatorOptions {
    BlindPsfOptions psf;
    PhaseRetrievalOptions retrieval = loop_retrieval_defaults();
    RefineOptions refine;
    bool refine_enabled = false;
};

/// Blind PSF estimation followed by iterative retrieval and parametric refinement.
[[nodiscard]] inline Estimators default_estimators(const ZernikeBasis& basis, EstimatorOptions opts = {}) {
    Estimators e;
    e.psf = [opts](const Measurement& m, std::uint64_t, const Truth&) { return estimate_psf_blind(m, opts.psf); };
    e.phase = [opts, &basis](const Psf& psf, const Aperture& aperture, std::uint64_t seed, const Truth&) {
        PhaseRetrievalOptions ro = opts.retrieval;
        ro.seed = seed;
        PhaseEstimate coarse = retrieve_phase_iterative(psf, aperture, basis, ro);
        if (!opts.refine_enabled) return coarse;
        PhaseEstimate fine = refine_phase_zernike(psf, aperture, coarse.coeffs, basis, opts.refine);
        if (fine.status != SolverStatus::diverged && coarse.status == SolverStatus::not_converged)
            fine.status = SolverStatus::not_converged;
        return fine;
    };
    return e;
}

/// Returns the true PSF and the true residual phase scaled by `fraction` (1 = oracle).
[[nodiscard]] inline Estimators truth_estimators(double fraction = 1.0) {
    Estimators e;
    e.psf = [](const Measurement&, std::uint64_t, const Truth& t) {
        if (!t.psf) throw ArgumentError("truth estimator: no ground-truth PSF supplied");
        return PsfEstimate{t.psf->normalized(), 0.0, 0, SolverStatus::converged};
    };
    e.phase = [fraction](const Psf&, const Aperture& aperture, std::uint64_t, const Truth& t) {
        if (!t.residual) throw ArgumentError("truth estimator: no ground-truth phase supplied");
        PhaseEstimate out;
        out.phase = *t.residual * fraction;
        out.ambiguous = is_point_symmetric(aperture);
        return out;
    };
    return e;
}

struct LoopConfig {
    int loops = 3;
    double noise_sigma = 0.0;
    double gain = 1.0;                 // in (0, 1]
    int quantization_levels = 0;
    double early_stop_rms = 0.0;       // stop once the estimated residual RMS falls below; 0 disables
    int pad_factor = kDefaultPadFactor;
    ConvolutionMode convolution = ConvolutionMode::circular;

    [[nodiscard]] int measurements_budget() const noexcept { return loops + 1; }
    void validate() const {
        if (loops < 0) throw ArgumentError("loop: loops must be >= 0");
        if (!(noise_sigma >= 0.0)) throw ArgumentError("loop: noise sigma must be >= 0");
        if (!(gain > 0.0 && gain <= 1.0)) throw ArgumentError("loop: gain must lie in (0, 1]");
        if (quantization_levels < 0) throw ArgumentError("loop: quantization levels must be >= 0");
        if (!(early_stop_rms >= 0.0)) throw ArgumentError("loop: early-stop threshold must be >= 0");
    }
};

struct LoopRecord {
    int iteration = 0;
    Measurement measurement;
    PhaseMap slm_phase;               // pattern in place while measuring
    std::optional<PsfEstimate> psf;   // absent on the final, measure-only record
    std::optional<PhaseEstimate> phase;
    double strehl = 0.0;              // of the true residual
    double residual_rms = 0.0;        // true residual over the aperture
    double estimated_rms = 0.0;       // RMS of the phase estimate over the aperture
    double estimated_strehl = 0.0;    // exp(-estimated_rms^2)
    double psnr = 0.0;                // vs. the diffraction-limited image
    double ssim = 0.0;
};

struct LoopTrace {
    std::vector<LoopRecord> records;
    int measurements_formed = 0;
};

namespace detail {

inline LoopRecord measure(const SceneImage& scene, const PhaseMap& phi_o, const PhaseMap& slm_phase,
                          const Aperture& aperture, const LoopConfig& cfg, const RealGrid& reference,
                          std::uint64_t seed, int iteration, LoopTrace* trace, Psf* psf_out, PhaseMap* residual_out) {
    *residual_out = phi_o + slm_phase;
    *psf_out = psf_of(aperture, *residual_out, cfg.pad_factor);
    LoopRecord rec;
    rec.iteration = iteration;
    rec.measurement = image_measurement(scene, *psf_out, cfg.noise_sigma, mix_seed(seed, 2 * iteration), cfg.convolution);
    if (trace) ++trace->measurements_formed;
    rec.slm_phase = slm_phase;
    rec.strehl = strehl_ratio(*psf_out, aperture, cfg.pad_factor);
    rec.residual_rms = rms_over(*residual_out, aperture);
    rec.psnr = psnr(rec.measurement.pixels, reference);
    rec.ssim = ssim(rec.measurement.pixels, reference);
    return rec;
}

inline RealGrid reference_image(const SceneImage& scene, const Aperture& aperture, const LoopConfig& cfg) {
    return image_measurement(scene, bare_psf(aperture, cfg.pad_factor), 0.0, 0, cfg.convolution).pixels;
}

inline std::pair<SlmState, LoopRecord> step(const SceneImage& scene, const PhaseMap& phi_o, const SlmState& slm,
                                            const Aperture& aperture, const Estimators& estimators,
                                            const LoopConfig& cfg, const RealGrid& reference, std::uint64_t seed,
                                            int iteration, LoopTrace* trace) {
    Psf true_psf;
    PhaseMap residual;
    LoopRecord rec = measure(scene, phi_o, slm.phase, aperture, cfg, reference, seed, iteration, trace, &true_psf, &residual);
    const Truth truth{&true_psf, &residual};
    const std::uint64_t est_seed = mix_seed(seed, 2 * iteration + 1);
    rec.psf = estimators.psf(rec.measurement, est_seed, truth);
    rec.phase = estimators.phase(rec.psf->psf, aperture, est_seed, truth);
    rec.estimated_rms = rms_over(rec.phase->phase, aperture);
    rec.estimated_strehl = std::exp(-rec.estimated_rms * rec.estimated_rms);
    SlmState next = apply_update(slm, rec.phase->phase, cfg.gain);
    return {std::move(next), std::move(rec)};
}

}  // namespace detail

/// One measure-estimate-correct iteration. The record describes the measurement taken with
/// the incoming SLM state.
[[nodiscard]] inline std::pair<SlmState, LoopRecord> ao_step(const SceneImage& scene, const PhaseMap& phi_o,
                                                             const SlmState& slm, const Aperture& aperture,
                                                             const Estimators& estimators, const LoopConfig& cfg,
                                                             std::uint64_t seed, int iteration = 0) {
    cfg.validate();
    require_same_shape(phi_o.values(), slm.phase.values(), "ao_step");
    require_same_shape(phi_o.values(), aperture.amplitude(), "ao_step");
    return detail::step(scene, phi_o, slm, aperture, estimators, cfg, detail::reference_image(scene, aperture, cfg),
                        seed, iteration, nullptr);
}

/// `loops` corrections from a flat SLM followed by one measure-only record.
[[nodiscard]] inline LoopTrace run_closed_loop(const SceneImage& scene, const PhaseMap& phi_o, const Aperture& aperture,
                                               const Estimators& estimators, const LoopConfig& cfg,
                                               std::uint64_t seed) {
    cfg.validate();
    require_same_shape(phi_o.values(), aperture.amplitude(), "run_closed_loop");
    const RealGrid reference = detail::reference_image(scene, aperture, cfg);
    LoopTrace trace;
    SlmState slm = SlmState::zero(aperture.n(), cfg.quantization_levels);
    int it = 0;
    for (; it < cfg.loops; ++it) {
        auto [next, rec] = detail::step(scene, phi_o, slm, aperture, estimators, cfg, reference, seed, it, &trace);
        const bool stop = cfg.early_stop_rms > 0.0 && rec.estimated_rms < cfg.early_stop_rms;
        trace.records.push_back(std::move(rec));
        slm = std::move(next);
        if (stop) {
            ++it;
            break;
        }
    }
    Psf psf;
    PhaseMap residual;
    trace.records.push_back(detail::measure(scene, phi_o, slm.phase, aperture, cfg, reference, seed, it, &trace, &psf, &residual));
    return trace;
}

/// Correction from a directly measured PSF: phase retrieval only, no PSF estimation.
[[nodiscard]] inline SlmState guidestar_mode_step(const Psf& psf_measured, const SlmState& slm,
                                                  const Aperture& aperture, const Estimators& estimators,
                                                  std::uint64_t seed = 0, double gain = 1.0) {
    require_same_shape(slm.phase.values(), aperture.amplitude(), "guidestar_mode_step");
    const PhaseEstimate est = estimators.phase(psf_measured, aperture, seed, Truth{});
    return apply_update(slm, est.phase, gain);
}

}  // namespace gfao
