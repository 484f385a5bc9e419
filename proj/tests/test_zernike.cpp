#include <gtest/gtest.h>

#include "gfao/zernike.hpp"
#include "oracles.hpp"

using namespace gfao;

namespace {

ZernikeCoeffs random_coeffs(const ZernikeBasis& b, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.3);
    ZernikeCoeffs c{std::vector<double>(b.mode_count()), b.id()};
    for (double& v : c.values) v = g(rng);
    return c;
}

double rms_on_mask(const RealGrid& g, const ZernikeBasis& b) {
    double s = 0.0;
    for (std::size_t i : b.support()) s += g[i] * g[i];
    return std::sqrt(s / static_cast<double>(b.support().size()));
}

}  // namespace

TEST(NollIndex, FirstModes) {
    EXPECT_EQ(noll_to_nm(2), (ZernikeIndex{1, 1, 2}));
    EXPECT_EQ(noll_to_nm(3), (ZernikeIndex{1, -1, 3}));
    EXPECT_EQ(noll_to_nm(4), (ZernikeIndex{2, 0, 4}));
    EXPECT_EQ(noll_to_nm(5), (ZernikeIndex{2, -2, 5}));
    EXPECT_EQ(noll_to_nm(6), (ZernikeIndex{2, 2, 6}));
    EXPECT_EQ(noll_to_nm(11), (ZernikeIndex{4, 0, 11}));
    EXPECT_EQ(noll_to_nm(15), (ZernikeIndex{4, -4, 15}));
    EXPECT_EQ(noll_to_nm(22), (ZernikeIndex{6, 0, 22}));
}

TEST(BuildBasis, ModeCountMatchesCombinatorics) {
    for (int order = 1; order <= 6; ++order) {
        const auto b = build_basis(32, 0.9, order);
        EXPECT_EQ(static_cast<int>(b.mode_count()), oracle::zernike_mode_count(order)) << order;
    }
    EXPECT_EQ(build_basis(64, 0.9, 6).mode_count(), 27U);
}

TEST(BuildBasis, FirstModesOrdering) {
    const auto b = build_basis(32, 0.9, 6, ZernikeOrdering::first_modes);
    ASSERT_EQ(b.mode_count(), 6U);
    EXPECT_EQ(b.indices().front().noll, 2);
    EXPECT_EQ(b.indices().back().noll, 7);
}

TEST(BuildBasis, RejectsBadArguments) {
    EXPECT_THROW((void)build_basis(64, 0.0, 6), ArgumentError);
    EXPECT_THROW((void)build_basis(64, 1.2, 6), ArgumentError);
    EXPECT_THROW((void)build_basis(64, 0.9, 0), ArgumentError);
}

TEST(BuildBasis, TiltIsLinearAlongX) {
    const auto b = build_basis(128, 0.9, 6);
    const RealGrid tilt = b.mode(0);
    const std::size_t row = 64;
    const double slope = tilt(row, 65) - tilt(row, 64);
    EXPECT_GT(slope, 0.0);
    for (std::size_t c = 40; c < 88; ++c) EXPECT_NEAR(tilt(row, c + 1) - tilt(row, c), slope, 1e-12);
}

TEST(BuildBasis, GramMatrixIsIdentity) {
    const auto b = build_basis(256, 0.9, 6);
    // independent numerical integration over the dense mask
    const RealGrid& mask = b.mask().amplitude();
    const double area = sum(mask);
    std::vector<RealGrid> modes;
    for (std::size_t k = 0; k < b.mode_count(); ++k) modes.push_back(b.mode(k));
    double worst = 0.0;
    for (std::size_t i = 0; i < modes.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < mask.size(); ++p) s += mask[p] * modes[i][p] * modes[j][p];
            worst = std::max(worst, std::abs(s / area - (i == j ? 1.0 : 0.0)));
        }
    EXPECT_LE(worst, 1e-3);
}

TEST(BuildBasis, StaysCloseToAnalyticPolynomials) {
    // the discrete re-orthonormalisation only nudges the analytic modes
    const auto b = build_basis(256, 0.9, 6);
    const double centre = 128.0;
    for (std::size_t k = 0; k < b.mode_count(); ++k) {
        const auto& ix = b.indices()[k];
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < b.support().size(); ++i) {
            const std::size_t p = b.support()[i];
            const double x = static_cast<double>(p % 256) - centre;
            const double y = centre - static_cast<double>(p / 256);
            const double a = zernike_value(ix.n, ix.m, std::hypot(x, y) / b.radius_px(), std::atan2(y, x));
            num += (a - b.value(k, i)) * (a - b.value(k, i));
            den += a * a;
        }
        EXPECT_LT(std::sqrt(num / den), 0.03) << "noll " << ix.noll;
    }
}

TEST(PhaseFromCoeffs, ZeroCoefficientsGiveZeroPhase) {
    const auto b = build_basis(64, 0.9, 6);
    const ZernikeCoeffs c{std::vector<double>(b.mode_count(), 0.0), b.id()};
    EXPECT_EQ(phase_from_coeffs(c, b), PhaseMap(64));
}

TEST(PhaseFromCoeffs, UnitDefocusHasUnitRms) {
    const auto b = build_basis(256, 0.9, 6);
    ZernikeCoeffs c{std::vector<double>(b.mode_count(), 0.0), b.id()};
    c.values[2] = 1.0;
    ASSERT_EQ(b.indices()[2].noll, 4);
    EXPECT_NEAR(rms_on_mask(phase_from_coeffs(c, b).values(), b), 1.0, 0.01);
}

TEST(PhaseFromCoeffs, IsLinear) {
    const auto b = build_basis(64, 0.9, 6);
    const auto c1 = random_coeffs(b, 1);
    const auto c2 = random_coeffs(b, 2);
    ZernikeCoeffs mix{std::vector<double>(b.mode_count()), b.id()};
    for (std::size_t k = 0; k < mix.values.size(); ++k) mix.values[k] = 2.0 * c1.values[k] - 0.5 * c2.values[k];
    const RealGrid lhs = phase_from_coeffs(mix, b).values();
    const RealGrid rhs = 2.0 * phase_from_coeffs(c1, b).values() - 0.5 * phase_from_coeffs(c2, b).values();
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-12);
}

TEST(PhaseFromCoeffs, NormPredictsRms) {
    const auto b = build_basis(256, 0.9, 6);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto c = random_coeffs(b, s);
        EXPECT_NEAR(rms_on_mask(phase_from_coeffs(c, b).values(), b), c.norm(), 0.01 * c.norm());
    }
}

TEST(PhaseFromCoeffs, RejectsForeignCoefficients) {
    const auto b = build_basis(64, 0.9, 6);
    const auto other = build_basis(64, 0.8, 6);
    EXPECT_THROW((void)phase_from_coeffs(random_coeffs(other, 1), b), DimensionError);
    EXPECT_THROW((void)phase_from_coeffs(ZernikeCoeffs{{1.0, 2.0}, ""}, b), DimensionError);
}

TEST(SampleCoeffs, HitsTargetNormAndIsDeterministic) {
    const auto b = build_basis(32, 0.9, 6);
    const auto c1 = sample_coeffs(7, 1.0, b, 1.0);
    const auto c2 = sample_coeffs(7, 1.0, b, 1.0);
    EXPECT_NEAR(c1.norm(), 1.0, 1e-14);
    EXPECT_EQ(c1.values, c2.values);
    EXPECT_NE(c1.values, sample_coeffs(8, 1.0, b, 1.0).values);
    EXPECT_THROW((void)sample_coeffs(1, 0.0, b), ArgumentError);
}

TEST(SampleCoeffs, MinOrderZeroesTipTilt) {
    const auto b = build_basis(32, 0.9, 6);
    const auto c = sample_coeffs(3, 1.5, b, 0.0, 2);
    EXPECT_EQ(c.values[0], 0.0);
    EXPECT_EQ(c.values[1], 0.0);
    EXPECT_NEAR(c.norm(), 1.5, 1e-14);
}

TEST(SampleCoeffs, ZeroDecayHasEqualVariancePerOrder) {
    const auto b = build_basis(32, 0.9, 6);
    std::vector<double> per_order(7, 0.0);
    std::vector<int> modes_in_order(7, 0);
    for (const auto& ix : b.indices()) ++modes_in_order[static_cast<std::size_t>(ix.n)];
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        const auto c = sample_coeffs(static_cast<std::uint64_t>(d), 1.0, b, 0.0);
        for (std::size_t k = 0; k < c.values.size(); ++k)
            per_order[static_cast<std::size_t>(b.indices()[k].n)] += c.values[k] * c.values[k];
    }
    const double expected = 1.0 / static_cast<double>(b.mode_count());
    for (int n = 1; n <= 6; ++n) {
        const double var = per_order[static_cast<std::size_t>(n)] / (draws * modes_in_order[static_cast<std::size_t>(n)]);
        EXPECT_NEAR(var, expected, 0.1 * expected) << "order " << n;
    }
}

TEST(FitCoeffs, RoundTrip) {
    const auto b = build_basis(128, 0.9, 6);
    const auto c = random_coeffs(b, 11);
    const auto fit = fit_coeffs(phase_from_coeffs(c, b), b);
    for (std::size_t k = 0; k < c.values.size(); ++k) EXPECT_NEAR(fit.values[k], c.values[k], 1e-6);
}

TEST(FitCoeffs, ZeroAndPiston) {
    const auto b = build_basis(64, 0.9, 6);
    for (double v : fit_coeffs(PhaseMap(64), b).values) EXPECT_EQ(v, 0.0);
    const auto c = random_coeffs(b, 12);
    const auto fit = fit_coeffs(phase_from_coeffs(c, b) + 3.0, b);
    for (std::size_t k = 0; k < c.values.size(); ++k) EXPECT_NEAR(fit.values[k], c.values[k], 1e-9);
    EXPECT_THROW((void)fit_coeffs(PhaseMap(32), b), DimensionError);
}

TEST(PhaseGradient, ConstantHasNoGradient) {
    const auto b = build_basis(64, 0.9, 6);
    const auto g = phase_gradient(PhaseMap(64, 2.5), b.mask());
    for (double v : g.gx) EXPECT_EQ(v, 0.0);
    for (double v : g.gy) EXPECT_EQ(v, 0.0);
}

TEST(PhaseGradient, TiltGivesConstantSlope) {
    const auto b = build_basis(64, 0.9, 6);
    const double s = 0.05;
    PhaseMap tilt(64);
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c) tilt(r, c) = s * static_cast<double>(c);
    const auto g = phase_gradient(tilt, b.mask());
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c + 1 < 64; ++c) {
            const bool pair = b.mask().in_support(r, c) && b.mask().in_support(r, c + 1);
            EXPECT_NEAR(g.gx(r, c), pair ? s : 0.0, 1e-12);
            EXPECT_EQ(g.gy(r, c), 0.0);
        }
}

TEST(PhaseGradient, MatchesCentralDifferenceOracle) {
    const std::size_t n = 128;
    const auto b = build_basis(n, 0.9, 6);
    const PhaseMap phi = phase_from_coeffs(random_coeffs(b, 5), b);
    const auto g = phase_gradient(phi, b.mask());
    // forward difference sits half a sample off the central difference: error <= h/2 * max|phi''|
    double curvature = 0.0;
    for (std::size_t r = 2; r + 2 < n; ++r)
        for (std::size_t c = 2; c + 2 < n; ++c)
            if (b.mask().in_support(r, c - 1) && b.mask().in_support(r, c + 2))
                curvature = std::max(curvature, std::abs(phi(r, c + 1) - 2 * phi(r, c) + phi(r, c - 1)));
    for (std::size_t r = 2; r + 2 < n; ++r)
        for (std::size_t c = 2; c + 2 < n; ++c) {
            if (!(b.mask().in_support(r, c - 1) && b.mask().in_support(r, c + 2))) continue;
            const double central = (phi(r, c + 1) - phi(r, c - 1)) / 2.0;
            EXPECT_LE(std::abs(g.gx(r, c) - central), 0.5 * curvature + 1e-12);
        }
}
