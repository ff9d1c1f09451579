#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "fracwave/special_functions.hpp"

using namespace fracwave;

namespace {

using big = boost::multiprecision::cpp_bin_float_50;

// 200-term series in 50 significant digits with Kahan-compensated summation.
// Independent of the evaluator: different precision, no coefficient cache.
cplx series_reference(double alpha, double delta, cplx z) {
    big sr = 0, si = 0, cr = 0, ci = 0;
    big pr = 1, pi = 0;
    const big zr = z.real(), zi = z.imag();
    for (int k = 0; k < 200; ++k) {
        const big x = big(alpha) * k + big(delta);
        big rg = 0;
        if (!(x <= 0 && x == boost::multiprecision::round(x))) {
            rg = 1 / boost::math::tgamma(x);
        }
        const big tr = pr * rg - cr;
        const big ti = pi * rg - ci;
        const big nr = sr + tr;
        const big ni = si + ti;
        cr = (nr - sr) - tr;
        ci = (ni - si) - ti;
        sr = nr;
        si = ni;
        const big npr = pr * zr - pi * zi;
        pi = pr * zi + pi * zr;
        pr = npr;
    }
    return {static_cast<double>(sr), static_cast<double>(si)};
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(MittagLeffler, ClosedFormExamples) {
    EXPECT_NEAR(ml_eval({1.0, 1.0}, {1.0, 0.0}).real(), std::numbers::e, 1e-15);
    const double q = std::numbers::pi / 2.0;
    EXPECT_NEAR(std::abs(ml_eval({2.0, 1.0}, {-q * q, 0.0})), 0.0, 1e-15);
    EXPECT_NEAR(ml_eval({1.5, 0.7}, {0.0, 0.0}).real(), 1.0 / std::tgamma(0.7), 1e-15);
    EXPECT_NEAR(ml_eval({1.0, 2.0}, {1.0, 0.0}).real(), std::numbers::e - 1.0, 1e-15);
}

TEST(MittagLeffler, RejectsNonPositiveAlpha) {
    EXPECT_THROW(ml_eval({0.0, 1.0}, {1.0, 0.0}), domain_error);
    EXPECT_THROW(ml_eval({-1.0, 1.0}, {1.0, 0.0}), domain_error);
    EXPECT_THROW(ml_eval({1.0, 1.0}, {std::nan(""), 0.0}), domain_error);
}

TEST(MittagLeffler, AgreesWithHighPrecisionSeries) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    for (double alpha : {0.5, 1.0, 1.5, 1.9}) {
        const double rmax = alpha == 0.5 ? 5.0 : 30.0;
        std::uniform_real_distribution<double> rad(0.0, rmax);
        for (double delta : {1.0, 2.0, alpha, 0.3}) {
            for (int i = 0; i < 25; ++i) {
                const cplx z = std::polar(rad(rng), ang(rng));
                const cplx ref = series_reference(alpha, delta, z);
                EXPECT_LT(rel(ml_eval({alpha, delta}, z), ref), 1e-12)
                    << "alpha=" << alpha << " delta=" << delta << " z=" << z;
            }
        }
    }
}

TEST(MittagLeffler, IndexShiftRecurrence) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-40.0, 40.0);
    for (double alpha : {0.8, 1.3, 1.5, 1.9}) {
        for (double delta : {1.0, 0.5, 2.0, -0.4}) {
            for (int i = 0; i < 20; ++i) {
                const cplx z{u(rng), u(rng)};
                const MLParams p{alpha, delta};
                const cplx lhs = ml_eval(p, z);
                const cplx rhs = z * ml_eval({alpha, delta + alpha}, z) + reciprocal_gamma(delta);
                // skip the exponentially large part of the plane for alpha < 1
                if (std::abs(lhs) > 1e12) continue;
                EXPECT_LT(std::abs(lhs - rhs), 1e-11 * std::max(1.0, std::abs(lhs)))
                    << alpha << " " << delta << " " << z;
            }
        }
    }
}

TEST(MittagLeffler, HyperbolicClosedForms) {
    for (int i = 0; i <= 40; ++i) {
        const cplx z = std::polar(5.0 * i / 40.0, 0.37 * i);
        EXPECT_LT(rel(ml_eval({2.0, 1.0}, z * z), std::cosh(z)), 1e-11);
        if (i > 0) {
            EXPECT_LT(rel(ml_eval({2.0, 2.0}, z * z), std::sinh(z) / z), 1e-11);
        }
    }
}

TEST(MittagLeffler, AsymptoticRegionMatchesSeries) {
    // just past the switch, where both branches are applicable
    for (double alpha : {1.2, 1.5, 1.8}) {
        const double r = std::pow(36.0, alpha);
        for (double phi : {std::numbers::pi, 2.6, 2.2}) {
            const cplx z = std::polar(r * 1.01, phi);
            const cplx asym = ml_eval({alpha, 1.0}, z);
            const cplx ser = ml_eval({alpha, 1.0}, z, MLOptions{.taylor_radius = 1e9});
            EXPECT_LT(rel(asym, ser), 1e-11) << alpha << " " << phi;
        }
    }
}

TEST(MittagLeffler, DerivativeExamples) {
    EXPECT_NEAR(ml_derivative({1.0, 1.0}, {0.0, 0.0}, 1).real(), 1.0, 1e-15);
    EXPECT_NEAR(ml_derivative({1.5, 1.0}, {0.0, 0.0}, 1).real(), 1.0 / std::tgamma(2.5), 1e-15);

    const MLParams p{1.3, 1.0};
    const cplx z{-2.0, 0.5};
    const double h = 1e-6;
    const cplx fd = (ml_eval(p, z + h) - ml_eval(p, z - h)) / (2.0 * h);
    EXPECT_LT(rel(ml_derivative(p, z, 1), fd), 1e-6);
}

TEST(MittagLeffler, DerivativeOrderZeroIsValue) {
    for (cplx z : {cplx(0.3, 0.1), cplx(-20.0, 3.0), cplx(-900.0, 20.0)}) {
        EXPECT_EQ(ml_derivative({1.5, 1.2}, z, 0), ml_eval({1.5, 1.2}, z));
    }
    EXPECT_THROW(ml_derivative({1.5, 1.0}, {1.0, 0.0}, 5), domain_error);
}

TEST(MittagLeffler, HigherDerivativesMatchFiniteDifferences) {
    // the asymptotic branch uses the index recurrence; the series branch differentiates term-wise
    const MLParams p{1.5, 1.0};
    for (cplx z : {cplx(-3.0, 1.0), cplx(-400.0, 50.0)}) {
        const double h = 1e-3 * std::max(1.0, std::abs(z) / 10.0);
        for (int n = 1; n <= 3; ++n) {
            const cplx fd = (ml_derivative(p, z + h, n - 1) - ml_derivative(p, z - h, n - 1)) / (2.0 * h);
            EXPECT_LT(rel(ml_derivative(p, z, n), fd), 1e-5) << z << " n=" << n;
        }
    }
}

TEST(ReciprocalGamma, Values) {
    EXPECT_DOUBLE_EQ(reciprocal_gamma(1.0), 1.0);
    EXPECT_EQ(reciprocal_gamma(0.0), 0.0);
    EXPECT_EQ(reciprocal_gamma(-1.0), 0.0);
    EXPECT_EQ(reciprocal_gamma(-7.0), 0.0);
    EXPECT_NEAR(reciprocal_gamma(0.5), 1.0 / std::sqrt(std::numbers::pi), 1e-15);
}

TEST(ReciprocalGamma, RecurrenceAndReflection) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-12.0, 30.0);
    for (int i = 0; i < 500; ++i) {
        const double x = u(rng);
        const double a = x * reciprocal_gamma(x + 1.0);
        const double b = reciprocal_gamma(x);
        EXPECT_LT(std::abs(a - b), 1e-13 * std::abs(b)) << x;
        const double refl = reciprocal_gamma(x) * reciprocal_gamma(1.0 - x);
        EXPECT_NEAR(refl, std::sin(std::numbers::pi * x) / std::numbers::pi,
                    1e-13 * std::max(1.0, std::abs(refl)))
            << x;
    }
}

TEST(SectorBound, DecaySlopes) {
    std::vector<cplx> ray;
    for (int i = 0; i <= 80; ++i) {
        ray.push_back(std::polar(std::pow(10.0, 4.0 * i / 80.0), std::numbers::pi));
    }
    const auto rep = ml_sector_bound_check({1.5, 1.0}, 0.8 * std::numbers::pi, ray);
    EXPECT_TRUE(std::isfinite(rep.c_empirical));
    EXPECT_NEAR(rep.slope, -1.0, 0.05);

    std::vector<cplx> far;
    for (int i = 0; i <= 40; ++i) {
        far.push_back(std::polar(std::pow(10.0, 2.0 + 2.0 * i / 40.0), std::numbers::pi));
    }
    const auto rep2 = ml_sector_bound_check({1.5, 1.5}, 0.8 * std::numbers::pi, far);
    EXPECT_NEAR(rep2.slope, -2.0, 0.1);
}

TEST(SectorBound, RejectsBadInput) {
    std::vector<cplx> empty;
    EXPECT_THROW(ml_sector_bound_check({1.5, 1.0}, 0.8 * std::numbers::pi, empty), domain_error);
    std::vector<cplx> inside{std::polar(10.0, 0.1)};
    EXPECT_THROW(ml_sector_bound_check({1.5, 1.0}, 0.8 * std::numbers::pi, inside), domain_error);
    std::vector<cplx> ok{cplx(-10.0, 0.0)};
    EXPECT_THROW(ml_sector_bound_check({1.5, 1.0}, 0.5 * std::numbers::pi, ok), domain_error);
}
