#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#include "gfao/control_loop.hpp"
#include "gfao/scenes.hpp"

using namespace gfao;

namespace {

struct Rig {
    std::size_t n;
    Aperture aperture;
    ZernikeBasis basis;
    SceneImage scene;

    explicit Rig(std::size_t n_, ApertureShape shape = ApertureShape::triangle)
        : n(n_), aperture(make_aperture(shape, n_, 0.4)), basis(build_basis(n_, 0.9, 6)),
          scene(textured_scene(n_, n_, 77)) {}

    PhaseMap aberration(std::uint64_t seed, double rms) const {
        return remove_tilt_piston(phase_from_coeffs(sample_coeffs(seed, rms, basis, 0.0, 2), basis), aperture);
    }
};

bool on_lattice(const PhaseMap& p, int levels) {
    const double step = 2.0 * std::numbers::pi / levels;
    for (double v : p.values()) {
        if (v < 0.0 || v >= 2.0 * std::numbers::pi) return false;
        if (std::abs(v / step - std::round(v / step)) > 1e-9) return false;
    }
    return true;
}

Estimators direct_psf_estimators(const ZernikeBasis& basis) {
    EstimatorOptions o;
    o.retrieval = PhaseRetrievalOptions{};
    o.refine_enabled = true;
    return default_estimators(basis, o);
}

}  // namespace

TEST(Slm, QuantizationLattice) {
    PhaseMap p(16);
    for (std::size_t i = 0; i < p.values().size(); ++i) p.values()[i] = -7.0 + 0.113 * static_cast<double>(i);
    const PhaseMap q = quantize_phase(p, 256);
    EXPECT_TRUE(on_lattice(q, 256));
    // the wrapped difference stays within half a step
    for (std::size_t i = 0; i < p.values().size(); ++i) {
        const double d = std::remainder(q.values()[i] - p.values()[i], 2.0 * std::numbers::pi);
        EXPECT_LE(std::abs(d), std::numbers::pi / 256 + 1e-12);
    }
    EXPECT_EQ(quantize_phase(p, 0).values(), p.values());
}

TEST(Slm, ApplyUpdateRecordsHistory) {
    SlmState s = SlmState::zero(8);
    PhaseMap u(8);
    u.values()[3] = 0.5;
    const SlmState t = apply_update(apply_update(s, u, 1.0), u, 0.5);
    ASSERT_EQ(t.history.size(), 2u);
    EXPECT_DOUBLE_EQ(t.phase.values()[3], -0.75);
}

TEST(LoopConfig, Validation) {
    LoopConfig c;
    EXPECT_EQ(c.measurements_budget(), 4);
    EXPECT_NO_THROW(c.validate());
    c.gain = 0.0;
    EXPECT_THROW(c.validate(), ArgumentError);
    c = LoopConfig{};
    c.loops = -1;
    EXPECT_THROW(c.validate(), ArgumentError);
    c = LoopConfig{};
    c.noise_sigma = -1.0;
    EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(AoStep, OracleReachesDiffractionLimitInOneStep) {
    const Rig s(128);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const PhaseMap phi = s.aberration(seed, 1.5);
        const auto [slm, rec] = ao_step(s.scene, phi, SlmState::zero(s.n), s.aperture, truth_estimators(), {}, seed);
        EXPECT_LT(rec.strehl, 0.9);
        const double after = strehl_ratio(psf_of(s.aperture, phi + slm.phase), s.aperture);
        EXPECT_GE(after, 1.0 - 1e-6);
    }
}

TEST(AoStep, HalfEstimatorHalvesResidualEachStep) {
    const Rig s(128);
    const PhaseMap phi = s.aberration(4, 1.2);
    LoopConfig cfg;
    cfg.loops = 4;
    const LoopTrace t = run_closed_loop(s.scene, phi, s.aperture, truth_estimators(0.5), cfg, 4);
    ASSERT_EQ(t.records.size(), 5u);
    for (std::size_t k = 1; k < t.records.size(); ++k) {
        EXPECT_NEAR(t.records[k].residual_rms, 0.5 * t.records[k - 1].residual_rms, 1e-9);
        EXPECT_GE(t.records[k].strehl, t.records[k - 1].strehl);
    }
}

// Measured (not blindly estimated) PSF feeding the real phase stage.
TEST(AoStep, NothingToCorrectStaysSharpWithMeasuredPsf) {
    const Rig s(128);
    Estimators e = direct_psf_estimators(s.basis);
    e.psf = truth_estimators().psf;
    const LoopTrace t = run_closed_loop(s.scene, PhaseMap(s.n), s.aperture, e, {}, 9);
    for (const auto& r : t.records) EXPECT_GE(r.strehl, 0.99);
    EXPECT_LE(t.records[0].estimated_rms, 0.05);
}

TEST(AoStep, RejectsMismatchedShapes) {
    const Rig s(64);
    EXPECT_THROW((void)ao_step(s.scene, PhaseMap(32), SlmState::zero(64), s.aperture, truth_estimators(), {}, 0),
                 DimensionError);
}

TEST(ClosedLoop, RecordCountMatchesBudget) {
    const Rig s(64);
    const PhaseMap phi = s.aberration(5, 1.0);
    for (int loops : {0, 1, 3}) {
        LoopConfig cfg;
        cfg.loops = loops;
        const LoopTrace t = run_closed_loop(s.scene, phi, s.aperture, truth_estimators(0.5), cfg, 1);
        EXPECT_EQ(t.records.size(), static_cast<std::size_t>(loops + 1));
        EXPECT_EQ(t.measurements_formed, cfg.measurements_budget());
        EXPECT_FALSE(t.records.back().psf.has_value());
        for (int k = 0; k < loops; ++k) EXPECT_TRUE(t.records[static_cast<std::size_t>(k)].phase.has_value());
    }
}

TEST(ClosedLoop, EarlyStopFormsOneMoreMeasurement) {
    const Rig s(64);
    LoopConfig cfg;
    cfg.loops = 5;
    cfg.early_stop_rms = 0.05;
    const LoopTrace t = run_closed_loop(s.scene, s.aberration(6, 1.0), s.aperture, truth_estimators(), cfg, 2);
    // the oracle fixes everything in step 0; step 1 estimates ~0 and stops
    EXPECT_EQ(t.records.size(), 3u);
    EXPECT_EQ(t.measurements_formed, 3);
}

TEST(ClosedLoop, QuantizedSlmStaysOnLattice) {
    const Rig s(64);
    LoopConfig cfg;
    cfg.quantization_levels = 256;
    const LoopTrace t = run_closed_loop(s.scene, s.aberration(7, 1.0), s.aperture, truth_estimators(), cfg, 3);
    for (const auto& r : t.records) EXPECT_TRUE(on_lattice(r.slm_phase, 256));
    // what remains is quantisation error, under a hundredth of a radian RMS
    EXPECT_GE(t.records.back().strehl, 0.999);
}

TEST(ClosedLoop, DeterministicUnderSeed) {
    const Rig s(64);
    LoopConfig cfg;
    cfg.noise_sigma = 0.01;
    const PhaseMap phi = s.aberration(8, 1.0);
    const LoopTrace a = run_closed_loop(s.scene, phi, s.aperture, truth_estimators(0.5), cfg, 11);
    const LoopTrace b = run_closed_loop(s.scene, phi, s.aperture, truth_estimators(0.5), cfg, 11);
    const LoopTrace c = run_closed_loop(s.scene, phi, s.aperture, truth_estimators(0.5), cfg, 12);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        const auto& pa = a.records[k].measurement.pixels;
        const auto& pb = b.records[k].measurement.pixels;
        EXPECT_EQ(0, std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)));
        EXPECT_EQ(a.records[k].strehl, b.records[k].strehl);
    }
    EXPECT_FALSE(a.records[0].measurement.pixels == c.records[0].measurement.pixels);
}

TEST(Guidestar, BarePsfGivesNegligibleUpdate) {
    const Rig s(128);
    const SlmState next = guidestar_mode_step(bare_psf(s.aperture), SlmState::zero(s.n), s.aperture,
                                              direct_psf_estimators(s.basis));
    ASSERT_EQ(next.history.size(), 1u);
    EXPECT_LE(rms_over(next.history[0], s.aperture), 0.05);
}

TEST(Guidestar, DefocusIsCorrected) {
    const Rig s(128);
    ZernikeCoeffs c{std::vector<double>(s.basis.mode_count(), 0.0), s.basis.id()};
    for (std::size_t k = 0; k < s.basis.mode_count(); ++k)
        if (s.basis.indices()[k].noll == 4) c.values[k] = 1.0;
    const PhaseMap phi = phase_from_coeffs(c, s.basis);
    const SlmState next = guidestar_mode_step(psf_of(s.aperture, phi), SlmState::zero(s.n), s.aperture,
                                              direct_psf_estimators(s.basis));
    EXPECT_GE(strehl_ratio(psf_of(s.aperture, phi + next.phase), s.aperture), 0.9);
}

TEST(Guidestar, QuantizedUpdateOnLattice) {
    const Rig s(64);
    const PhaseMap phi = s.aberration(9, 1.0);
    Estimators e = truth_estimators();
    e.phase = [&](const Psf&, const Aperture& a, std::uint64_t, const Truth&) {
        PhaseEstimate out;
        out.phase = phi;
        out.ambiguous = is_point_symmetric(a);
        return out;
    };
    const SlmState next = guidestar_mode_step(psf_of(s.aperture, phi), SlmState::zero(s.n, 256), s.aperture, e);
    EXPECT_TRUE(on_lattice(next.phase, 256));
}
