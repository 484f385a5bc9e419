#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gfao/estimators/blind_psf.hpp"
#include "gfao/estimators/patches.hpp"
#include "gfao/estimators/phase_retrieval.hpp"
#include "gfao/estimators/refine.hpp"
#include "gfao/metrics.hpp"
#include "gfao/scenes.hpp"
#include "oracles.hpp"

using namespace gfao;

namespace {

Measurement random_measurement(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    return {oracle::random_grid(rows, cols, seed, 0.0, 1.0), 0.0};
}

// Phase with only even-m modes, hence point-symmetric: phi(-x, -y) == phi(x, y).
PhaseMap even_parity_phase(const ZernikeBasis& basis, std::uint64_t seed, double rms) {
    ZernikeCoeffs c = sample_coeffs(seed, 1.0, basis, 0.0, 2);
    for (std::size_t k = 0; k < basis.mode_count(); ++k)
        if (basis.indices()[k].m % 2 != 0) c.values[k] = 0.0;
    const double norm = c.norm();
    for (double& v : c.values) v *= rms / norm;
    return phase_from_coeffs(c, basis);
}

PhaseMap tilt_free(const ZernikeBasis& basis, const Aperture& a, std::uint64_t seed, double rms) {
    return remove_tilt_piston(phase_from_coeffs(sample_coeffs(seed, rms, basis, 0.0, 2), basis), a);
}

}  // namespace

// ---- patches

TEST(Patchify, SixteenPatchesOf64) {
    const auto m = random_measurement(256, 256, 1);
    const auto p = patchify(m, 64, 64);
    EXPECT_EQ(p.count(), 16u);
    EXPECT_EQ(p.count() * 64 * 64, m.pixels.size());
}

TEST(Patchify, WholeImageIsOnePatch) {
    const auto m = random_measurement(32, 48, 2);
    const auto p = patchify(m, 32, 48);
    ASSERT_EQ(p.count(), 1u);
    EXPECT_EQ(p.patches[0], m.pixels);
}

TEST(Patchify, ReassemblyIsBitIdentical) {
    const auto m = random_measurement(96, 64, 3);
    EXPECT_EQ(reassemble(patchify(m, 32, 16)), m.pixels);
}

TEST(Patchify, RowMajorTiling) {
    const auto m = random_measurement(64, 64, 4);
    const auto p = patchify(m, 32, 32);
    EXPECT_EQ(p.patches[1](0, 0), m.pixels(0, 32));
    EXPECT_EQ(p.patches[2](0, 0), m.pixels(32, 0));
}

TEST(Patchify, NonDivisibleThrows) {
    EXPECT_THROW((void)patchify(random_measurement(100, 64, 5), 64, 64), ArgumentError);
}

// ---- tilt / piston normalisation

TEST(RemoveTiltPiston, ConstantBecomesZero) {
    const auto a = make_aperture(ApertureShape::triangle, 64, 0.4);
    const auto out = remove_tilt_piston(PhaseMap(64, 1.7), a);
    for (double v : out.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(RemoveTiltPiston, PlaneBecomesZero) {
    const auto a = make_aperture(ApertureShape::triangle, 64, 0.4);
    PhaseMap tilt(64);
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c) tilt(r, c) = 0.3 + 0.05 * static_cast<double>(c) - 0.02 * static_cast<double>(r);
    for (double v : remove_tilt_piston(tilt, a).values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(RemoveTiltPiston, Idempotent) {
    const auto a = make_aperture(ApertureShape::triangle, 64, 0.4);
    const PhaseMap phi(oracle::random_grid(64, 64, 6, -2.0, 2.0));
    const auto once = remove_tilt_piston(phi, a);
    const auto twice = remove_tilt_piston(once, a);
    for (std::size_t i = 0; i < once.values().size(); ++i) EXPECT_NEAR(once.values()[i], twice.values()[i], 1e-12);
}

TEST(RemoveTiltPiston, ZeroMeanAndZeroTiltOverSupport) {
    const auto a = make_aperture(ApertureShape::disk, 64, 0.4);
    const auto out = remove_tilt_piston(PhaseMap(oracle::random_grid(64, 64, 7, -2.0, 2.0)), a);
    double s = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c)
            if (a.in_support(r, c)) {
                s += out(r, c);
                sx += out(r, c) * static_cast<double>(c);
                sy += out(r, c) * static_cast<double>(r);
            }
    EXPECT_NEAR(s, 0.0, 1e-9);
    EXPECT_NEAR(sx, 0.0, 1e-7);
    EXPECT_NEAR(sy, 0.0, 1e-7);
}

TEST(ProjectOverAperture, RecoversInSpanPhase) {
    const auto a = make_aperture(ApertureShape::triangle, 64, 0.4);
    const auto basis = build_basis(64, 0.9, 4);
    const auto c = sample_coeffs(8, 1.0, basis);
    const auto phi = phase_from_coeffs(c, basis);
    const auto fit = project_over_aperture(phi, basis, a);
    for (std::size_t k = 0; k < c.values.size(); ++k) EXPECT_NEAR(fit.values[k], c.values[k], 1e-8);
}

// ---- blind PSF estimation

TEST(BlindPsf, DeltaKernelConcentratesInCentre) {
    const auto scene = textured_scene(128, 128, 11);
    RealGrid delta(9, 9);
    delta(4, 4) = 1.0;
    const auto m = image_measurement(scene, Psf(delta), 0.0, 0);
    BlindPsfOptions o;
    o.kernel_size = 15;
    const auto est = estimate_psf_blind(m, o);
    const auto& k = est.psf.kernel();
    EXPECT_GE(k(7, 7) / sum(k), 0.99);
}

TEST(BlindPsf, DefocusRoundTripCorrelates) {
    const std::size_t n = 256;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 6);
    ZernikeCoeffs c{std::vector<double>(basis.mode_count(), 0.0), basis.id()};
    c.values[2] = 1.0;  // Noll 4, defocus
    const auto psf = psf_of(a, phase_from_coeffs(c, basis));
    const auto m = image_measurement(textured_scene(256, 256, 12), psf, 0.0, 0);
    const auto est = estimate_psf_blind(m);
    EXPECT_EQ(est.psf.rows(), 63u);
    EXPECT_GE(kernel_ncc(est.psf.kernel(), crop_centered(psf.kernel(), 63, 63)), 0.9);
}

TEST(BlindPsf, UnitSumAndDeterministic) {
    const std::size_t n = 128;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 4);
    const auto psf = psf_of(a, phase_from_coeffs(sample_coeffs(13, 1.0, basis, 0.0, 2), basis));
    const auto m = image_measurement(textured_scene(128, 128, 13), psf, 0.01, 5);
    BlindPsfOptions o;
    o.kernel_size = 31;
    const auto e1 = estimate_psf_blind(m, o);
    const auto e2 = estimate_psf_blind(m, o);
    EXPECT_NEAR(sum(e1.psf.kernel()), 1.0, 1e-12);
    EXPECT_EQ(e1.psf.kernel(), e2.psf.kernel());
    EXPECT_EQ(e1.fidelity, e2.fidelity);
    EXPECT_GT(e1.iterations_used, 0);
}

TEST(BlindPsf, ProjectedGradientUpdateStaysOnSimplex) {
    const std::size_t n = 128;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 4);
    const auto psf = psf_of(a, phase_from_coeffs(sample_coeffs(14, 0.7, basis, 0.0, 2), basis));
    const auto m = image_measurement(textured_scene(128, 128, 14), psf, 0.0, 0);
    BlindPsfOptions o;
    o.kernel_size = 31;
    o.kernel_update = KernelUpdate::projected_gradient;
    const auto e = estimate_psf_blind(m, o);
    EXPECT_NEAR(sum(e.psf.kernel()), 1.0, 1e-12);
    for (double v : e.psf.kernel()) EXPECT_GE(v, 0.0);
    EXPECT_GE(kernel_ncc(e.psf.kernel(), crop_centered(psf.kernel(), 31, 31)), 0.8);
}

TEST(BlindPsf, ReportsMisfitOfFinalIterate) {
    const auto scene = textured_scene(64, 64, 14);
    RealGrid box(3, 3, 1.0 / 9.0);
    const auto m = image_measurement(scene, Psf(box), 0.0, 0);
    BlindPsfOptions o;
    o.kernel_size = 7;
    const auto est = estimate_psf_blind(m, o);
    EXPECT_GE(est.fidelity, 0.0);
    EXPECT_LT(est.fidelity, 0.05 * sum(m.pixels));
}

TEST(BlindPsf, RejectsBadInputs) {
    EXPECT_THROW((void)estimate_psf_blind(Measurement{RealGrid(64, 64), 0.0}), ArgumentError);
    BlindPsfOptions even;
    even.kernel_size = 8;
    EXPECT_THROW((void)estimate_psf_blind(random_measurement(64, 64, 15), even), ArgumentError);
    BlindPsfOptions big;
    big.kernel_size = 65;
    EXPECT_THROW((void)estimate_psf_blind(random_measurement(64, 64, 15), big), ArgumentError);
    Measurement neg = random_measurement(64, 64, 16);
    neg.pixels(3, 3) = -1.0;
    BlindPsfOptions small;
    small.kernel_size = 7;
    EXPECT_THROW((void)estimate_psf_blind(neg, small), ArgumentError);
}

TEST(BlindPsf, ProgressCallbackSeesEveryIteration) {
    RealGrid box(3, 3, 1.0 / 9.0);
    const auto m = image_measurement(textured_scene(64, 64, 17), Psf(box), 0.0, 0);
    BlindPsfOptions o;
    o.kernel_size = 7;
    int calls = 0;
    o.progress = [&](int, double) { ++calls; };
    const auto est = estimate_psf_blind(m, o);
    EXPECT_EQ(calls, est.iterations_used);
}

// ---- phase retrieval

TEST(PhaseRetrieval, BareApertureGivesFlatPhase) {
    const std::size_t n = 128;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 6);
    const auto est = retrieve_phase_iterative(bare_psf(a), a, basis);
    EXPECT_LE(rms_over(est.phase, a), 0.05);
    EXPECT_FALSE(est.ambiguous);
    EXPECT_EQ(est.status, SolverStatus::converged);
}

TEST(PhaseRetrieval, TriangleRoundTripAfterRefinement) {
    const std::size_t n = 256;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 6);
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        const auto phi = tilt_free(basis, a, seed, 1.0);
        const auto psf = psf_of(a, phi);
        const auto coarse = retrieve_phase_iterative(psf, a, basis);
        const auto fine = refine_phase_zernike(psf, a, coarse.coeffs, basis);
        EXPECT_LE(gradient_phase_error(fine.phase, phi, a), 0.1) << seed;
        EXPECT_GE(strehl_of_residual(a, phi - fine.phase), 0.8) << seed;
    }
}

TEST(PhaseRetrieval, WorksFromCroppedKernel) {
    const std::size_t n = 256;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 6);
    const auto phi = tilt_free(basis, a, 24, 1.0);
    const Psf kernel(crop_centered(psf_of(a, phi).kernel(), 63, 63));
    const auto est = retrieve_phase_iterative(kernel.normalized(), a, basis);
    EXPECT_LE(gradient_phase_error(est.phase, phi, a), 0.1);
}

TEST(PhaseRetrieval, SymmetricApertureIsFlaggedAndReturnsOneOfTheTwins) {
    const std::size_t n = 128;
    const auto a = make_aperture(ApertureShape::disk, n, 0.4);
    const auto basis = build_basis(n, 0.9, 6);
    for (std::uint64_t seed : {31u, 32u}) {
        const auto phi = even_parity_phase(basis, seed, 1.0);
        const auto psf = psf_of(a, phi);
        const auto coarse = retrieve_phase_iterative(psf, a, basis);
        const auto est = refine_phase_zernike(psf, a, coarse.coeffs, basis);
        EXPECT_TRUE(coarse.ambiguous);
        EXPECT_TRUE(est.ambiguous);
        const double e = std::min(gradient_phase_error(est.phase, phi, a),
                                  gradient_phase_error(est.phase, conjugate_flip(phi), a));
        EXPECT_LE(e, 0.1) << seed;
    }
}

TEST(PhaseRetrieval, DeterministicForSeed) {
    const std::size_t n = 64;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 4);
    const auto psf = psf_of(a, phase_from_coeffs(sample_coeffs(41, 1.0, basis, 0.0, 2), basis));
    PhaseRetrievalOptions o;
    o.seed = 9;
    o.starts = 3;
    const auto e1 = retrieve_phase_iterative(psf, a, basis, o);
    const auto e2 = retrieve_phase_iterative(psf, a, basis, o);
    EXPECT_EQ(e1.phase.values(), e2.phase.values());
    EXPECT_EQ(e1.residual, e2.residual);
}

TEST(PhaseRetrieval, RejectsBadOptions) {
    const auto a = make_aperture(ApertureShape::triangle, 64, 0.4);
    const auto basis = build_basis(64, 0.9, 4);
    PhaseRetrievalOptions o;
    o.beta = 0.0;
    EXPECT_THROW((void)retrieve_phase_iterative(bare_psf(a), a, basis, o), ArgumentError);
    o = {};
    o.starts = 0;
    EXPECT_THROW((void)retrieve_phase_iterative(bare_psf(a), a, basis, o), ArgumentError);
    const auto other = build_basis(128, 0.9, 4);
    EXPECT_THROW((void)retrieve_phase_iterative(bare_psf(a), a, other), DimensionError);
}

// ---- refinement

TEST(Refine, ObjectiveMatchesDirectEvaluation) {
    const std::size_t n = 32;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 4);
    const auto target = psf_of(a, phase_from_coeffs(sample_coeffs(51, 1.0, basis), basis));
    const auto c = sample_coeffs(52, 1.0, basis);
    const PsfFitObjective obj(target, a, basis);
    // direct: model PSF from the DFT oracle, target already at aperture energy
    const ComplexGrid pupil = pupil_function(a, phase_from_coeffs(c, basis)).grid();
    const RealGrid model = abs2(oracle::dft_centered(embed_centered(pupil, 2 * n, 2 * n)));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        num += (model[i] - target.kernel()[i]) * (model[i] - target.kernel()[i]);
        den += target.kernel()[i] * target.kernel()[i];
    }
    EXPECT_NEAR(obj.value(c.values), num / den, 1e-10 * std::max(1.0, num / den));
}

TEST(Refine, AnalyticGradientMatchesFiniteDifferences) {
    for (bool fit_scale : {false, true})
        for (std::uint64_t seed : {61u, 62u, 63u}) {
            const std::size_t n = 32;
            const auto a = make_aperture(seed % 2 ? ApertureShape::triangle : ApertureShape::disk, n, 0.4);
            const auto basis = build_basis(n, 0.9, 4);
            const auto target = psf_of(a, phase_from_coeffs(sample_coeffs(seed, 1.0, basis), basis));
            const PsfFitObjective obj(seed == 63u ? Psf(crop_centered(target.kernel(), 21, 21)) : target, a, basis, 2,
                                      fit_scale);
            const auto c = sample_coeffs(seed + 100, 0.8, basis);
            std::vector<double> grad(basis.mode_count());
            (void)obj.evaluate(c.values.data(), grad.data());
            double diff = 0.0, ref = 0.0;
            for (std::size_t k = 0; k < grad.size(); ++k) {
                const double h = 1e-5;
                auto p = c.values;
                auto m = c.values;
                p[k] += h;
                m[k] -= h;
                const double fd = (obj.value(p) - obj.value(m)) / (2.0 * h);
                diff += (grad[k] - fd) * (grad[k] - fd);
                ref += fd * fd;
            }
            EXPECT_LE(std::sqrt(diff / ref), 1e-4) << seed << " " << fit_scale;
        }
}

TEST(Refine, TrueCoefficientsAreAFixedPoint) {
    const std::size_t n = 64;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 4);
    const auto phi = tilt_free(basis, a, 71, 1.0);
    const auto psf = psf_of(a, phi);
    const auto init = project_over_aperture(phi, basis, a);
    const PsfFitObjective obj(psf, a, basis);
    EXPECT_LE(obj.value(init.values), 1e-8);
    const auto est = refine_phase_zernike(psf, a, init, basis);
    EXPECT_LE(est.residual, 1e-8);
    double worst = 0.0;
    for (std::size_t i = 0; i < phi.values().size(); ++i)
        if (a.in_support(i / n, i % n)) worst = std::max(worst, std::abs(est.phase.values()[i] - phi.values()[i]));
    EXPECT_LE(worst, 1e-4);
}

TEST(Refine, ObjectiveNeverIncreases) {
    const std::size_t n = 64;
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto basis = build_basis(n, 0.9, 6);
    const auto phi = tilt_free(basis, a, 72, 1.0);
    const auto psf = psf_of(a, phi);
    const auto coarse = retrieve_phase_iterative(psf, a, basis);
    std::vector<double> trace;
    RefineOptions o;
    o.progress = [&](int, double v) { trace.push_back(v); };
    const auto est = refine_phase_zernike(psf, a, coarse.coeffs, basis, o);
    ASSERT_GE(trace.size(), 2u);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
    EXPECT_LE(est.residual, trace.front());
}

TEST(Refine, MismatchedBasisThrows) {
    const auto a = make_aperture(ApertureShape::triangle, 64, 0.4);
    const auto basis = build_basis(64, 0.9, 4);
    const auto other = build_basis(64, 0.9, 3);
    EXPECT_THROW((void)refine_phase_zernike(bare_psf(a), a, sample_coeffs(1, 1.0, other), basis), DimensionError);
}

TEST(Ambiguity, ObjectiveCannotSeparateTwinsOnSymmetricApertures) {
    const std::size_t n = 64;
    const auto basis = build_basis(n, 0.9, 6);
    for (auto shape : {ApertureShape::disk, ApertureShape::rectangle}) {
        const auto a = make_aperture(shape, n, 0.4);
        const auto target = psf_of(a, phase_from_coeffs(sample_coeffs(81, 1.0, basis), basis));
        const PsfFitObjective obj(target, a, basis);
        const auto phi = phase_from_coeffs(sample_coeffs(82, 1.0, basis), basis);
        EXPECT_NEAR(obj.value_of_phase(phi), obj.value_of_phase(conjugate_flip(phi)), 1e-9);
    }
}

TEST(Ambiguity, TriangleObjectiveSeparatesTwins) {
    const std::size_t n = 64;
    const auto basis = build_basis(n, 0.9, 6);
    const auto a = make_aperture(ApertureShape::triangle, n, 0.4);
    const auto phi = phase_from_coeffs(sample_coeffs(83, 1.0, basis, 0.0, 2), basis);
    const PsfFitObjective obj(psf_of(a, phi), a, basis);
    EXPECT_LT(obj.value_of_phase(phi), 1e-12);
    EXPECT_GT(obj.value_of_phase(conjugate_flip(phi)), 1e-3);
}
