#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "fracwave/operator_model.hpp"

using namespace fracwave;

namespace {

constexpr double pi = std::numbers::pi;

State random_state(Eigen::Index d, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    State x(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        x[i] = cplx(n(rng), n(rng));
    }
    return x;
}

Eigen::MatrixXcd dense(const AlmostSectorialModel& m) {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(m.dim(), m.dim());
    for (std::size_t j = 0; j < m.blocks.size(); ++j) {
        const auto i = static_cast<Eigen::Index>(2 * j);
        a(i, i) = a(i + 1, i + 1) = m.blocks[j].lambda;
        a(i, i + 1) = m.blocks[j].coupling;
    }
    return a;
}

double slope_on_ray(AlmostSectorialModel m, double lo, double hi) {
    const auto r = log_space(lo, hi, 41);
    return verify_resolvent_bound(m, pi, r).slope;
}

}  // namespace

TEST(LadderModel, ResolventSlopeMatchesGamma) {
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e4, 4);
    EXPECT_EQ(m.blocks.size(), 25u);
    EXPECT_NEAR(slope_on_ray(m, 1e-1, 1e3), -0.75, 0.1);
    const auto m2 = build_ladder_model(-0.5, pi / 6.0, 1e-2, 1e4, 4);
    EXPECT_NEAR(slope_on_ray(m2, 1e-1, 1e3), -0.5, 0.1);
}

TEST(LadderModel, UnitCouplingShowsGrowthOnlyAtLargeModuli) {
    // with s = rho^(2+gamma) the diagonal 1/|z - lambda| term dominates below |z| ~ 10
    const auto m = build_ladder_model(-0.5, pi / 6.0, 1e-2, 1e4, 4, 1.0);
    EXPECT_LT(slope_on_ray(m, 1e-1, 1e0), -0.9);
    EXPECT_NEAR(slope_on_ray(m, 1e2, 1e3), -0.5, 0.1);
    EXPECT_NEAR(m.blocks.back().coupling.real(), std::pow(1e4, 1.5), 1e-6);
}

TEST(LadderModel, DiagonalModelIsSectorial) {
    EXPECT_NEAR(slope_on_ray(scalar_model(1.0), 1e1, 1e4), -1.0, 0.01);
}

TEST(LadderModel, RejectsDegenerateInput) {
    EXPECT_THROW(build_ladder_model(-1.0, 0.5, 1e-2, 1e2, 4), domain_error);
    EXPECT_THROW(build_ladder_model(0.0, 0.5, 1e-2, 1e2, 4), domain_error);
    EXPECT_THROW(build_ladder_model(-0.5, 0.5, 1e2, 1e-2, 4), domain_error);
    EXPECT_THROW(build_ladder_model(-0.5, 0.5, 0.0, 1e2, 4), domain_error);
    EXPECT_THROW(build_ladder_model(-0.5, pi, 1e-2, 1e2, 4), domain_error);
    EXPECT_THROW(build_ladder_model(-0.5, 0.5, 1e-2, 1e2, 0), domain_error);
}

TEST(Resolvent, Examples) {
    auto m = diagonal_model({cplx(1.0, 0.0)});
    State x(2);
    x << 1.0, 0.0;
    const State r = resolvent_apply(m, 2.0, x);
    EXPECT_EQ(r[0], cplx(1.0, 0.0));
    EXPECT_EQ(r[1], cplx(0.0, 0.0));

    m.blocks[0].coupling = 3.0;
    x << 0.0, 1.0;
    const State r2 = resolvent_apply(m, 2.0, x);
    EXPECT_EQ(r2[0], cplx(3.0, 0.0));
    EXPECT_EQ(r2[1], cplx(1.0, 0.0));

    EXPECT_THROW(resolvent_apply(m, 1.0, x), spectral_collision);
    EXPECT_THROW(resolvent_apply(m, 2.0, State::Zero(4)), domain_error);
}

TEST(Resolvent, InvertsShiftedOperator) {
    std::mt19937_64 rng(5);
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e4, 4);
    for (double r : {1e-3, 0.3, 7.0, 2e3}) {
        const cplx z = std::polar(r, 0.8 * pi);
        const State x = random_state(m.dim(), rng);
        const State y = resolvent_apply(m, z, x);
        const State back = z * y - fracwave::apply(m, y);
        EXPECT_LT((back - x).norm(), 1e-12 * x.norm()) << r;
    }
}

TEST(Resolvent, ResolventIdentity) {
    std::mt19937_64 rng(9);
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e4, 4);
    for (int k = 0; k < 10; ++k) {
        const cplx z1 = std::polar(std::pow(10.0, -1.0 + 0.4 * k), 0.9 * pi);
        const cplx z2 = std::polar(std::pow(10.0, 2.0 - 0.3 * k), -0.7 * pi);
        const State x = random_state(m.dim(), rng);
        const State lhs = resolvent_apply(m, z1, x) - resolvent_apply(m, z2, x);
        const State rhs = (z2 - z1) * resolvent_apply(m, z1, resolvent_apply(m, z2, x));
        EXPECT_LT((lhs - rhs).norm(), 1e-12 * rhs.norm()) << k;
    }
}

TEST(Apply, Examples) {
    auto m = diagonal_model({cplx(2.0, 0.0)});
    State x(2);
    x << 1.0, 0.0;
    EXPECT_EQ((fracwave::apply(m, x) - (State(2) << 2.0, 0.0).finished()).norm(), 0.0);
    m = diagonal_model({cplx(1.0, 0.0)});
    m.blocks[0].coupling = 3.0;
    x << 0.0, 1.0;
    EXPECT_EQ((fracwave::apply(m, x) - (State(2) << 3.0, 1.0).finished()).norm(), 0.0);
    EXPECT_TRUE(fracwave::apply(m, State::Zero(2)).isZero(0.0));
}

TEST(BlockNorm, MatchesSingularValues) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int k = 0; k < 50; ++k) {
        const cplx a(n(rng), n(rng)), b(n(rng) * 10.0, n(rng));
        Eigen::Matrix2cd mat;
        mat << a, b, 0.0, a;
        const double sv = Eigen::JacobiSVD<Eigen::Matrix2cd>(mat).singularValues()[0];
        EXPECT_NEAR(block_norm(a, b), sv, 1e-13 * sv);
    }
}

TEST(FunctionOf, MatchesDenseMatrixExponential) {
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-1, 1e1, 2);
    const auto op = function_of(m, [](cplx z) {
        const cplx e = std::exp(-z);
        return FnValue{e, -e};
    });
    const Eigen::MatrixXcd ref = (-dense(m)).exp();
    std::mt19937_64 rng(2);
    const State x = random_state(m.dim(), rng);
    EXPECT_LT((op.apply(x) - ref * x).norm(), 1e-12 * (ref * x).norm());
    const double sv = Eigen::JacobiSVD<Eigen::MatrixXcd>(ref).singularValues()[0];
    EXPECT_NEAR(op.norm(), sv, 1e-12 * sv);
}

TEST(Power, Examples) {
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e4, 4);
    const auto same = power(m, 1.0);
    for (std::size_t j = 0; j < m.blocks.size(); ++j) {
        EXPECT_LT(std::abs(same.blocks[j].lambda - m.blocks[j].lambda), 1e-14 * std::abs(m.blocks[j].lambda));
        EXPECT_LT(std::abs(same.blocks[j].coupling - m.blocks[j].coupling), 1e-14 * std::abs(m.blocks[j].coupling));
    }
    const auto root = power(diagonal_model({cplx(4.0, 0.0)}), 0.6);
    EXPECT_NEAR(std::abs(root.blocks[0].lambda - std::pow(4.0, 0.6)), 0.0, 1e-15);

    const auto p = power(m, 1.5);
    EXPECT_NEAR(p.profile.gamma, -5.0 / 6.0, 1e-15);
    EXPECT_NEAR(p.profile.omega, pi / 4.0, 1e-15);
    EXPECT_NEAR(slope_on_ray(p, 1e-2, 1e5), -5.0 / 6.0, 0.1);

    EXPECT_THROW(power(m, 0.2), domain_error);  // beta <= 1 + gamma
    EXPECT_THROW(power(m, 6.5), domain_error);  // beta >= pi / omega
}

TEST(Power, SquareRootOfDiagonal) {
    const auto m = diagonal_model({cplx(4.0, 0.0)}, -0.75);
    EXPECT_NEAR(std::abs(power(m, 0.5).blocks[0].lambda - cplx(2.0, 0.0)), 0.0, 1e-15);
}

TEST(Power, CompositionOfPowers) {
    const auto m = build_ladder_model(-0.6, pi / 6.0, 1e-2, 1e4, 4);
    const auto a = power(power(m, 1.2), 1.5);
    const auto b = power(m, 1.8);
    for (std::size_t j = 0; j < m.blocks.size(); ++j) {
        EXPECT_LT(std::abs(a.blocks[j].lambda - b.blocks[j].lambda), 1e-12 * std::abs(b.blocks[j].lambda));
        EXPECT_LT(std::abs(a.blocks[j].coupling - b.blocks[j].coupling), 1e-12 * std::abs(b.blocks[j].coupling));
    }
}

TEST(VerifyResolventBound, RecordsConstantAndRejectsBadInput) {
    auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e4, 4);
    const auto r = log_space(1e-1, 1e3, 21);
    const auto rep = verify_resolvent_bound(m, pi, r);
    EXPECT_EQ(rep.samples, 21u);
    EXPECT_GT(rep.c_empirical, 0.0);
    EXPECT_EQ(m.profile.c_mu, rep.c_empirical);
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_LE(rep.magnitudes[i], m.profile.c_mu * std::pow(r[i], m.profile.gamma) * (1.0 + 1e-12));
    }
    std::vector<double> none;
    EXPECT_THROW(verify_resolvent_bound(m, pi, none), domain_error);
    EXPECT_THROW(verify_resolvent_bound(m, 0.1, r), domain_error);
}

TEST(ModelFile, RoundTripIsExact) {
    const auto m = power(build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e4, 3), 1.3);
    std::stringstream ss;
    write_model(ss, m);
    const auto back = read_model(ss);
    ASSERT_EQ(back.blocks.size(), m.blocks.size());
    for (std::size_t j = 0; j < m.blocks.size(); ++j) {
        EXPECT_EQ(back.blocks[j].lambda, m.blocks[j].lambda);
        EXPECT_EQ(back.blocks[j].coupling, m.blocks[j].coupling);
    }
    EXPECT_EQ(back.profile.omega, m.profile.omega);
    EXPECT_EQ(back.profile.gamma, m.profile.gamma);
    EXPECT_EQ(back.profile.mu, m.profile.mu);
    EXPECT_EQ(back.profile.theta, m.profile.theta);
}

TEST(ModelFile, RejectsMalformedLines) {
    const std::string head = "omega 0.5\ngamma -0.5\nmu 2\ntheta 1\nc_mu 1\n";
    std::istringstream bad_number(head + "block 1 0 abc\n");
    EXPECT_THROW(read_model(bad_number), domain_error);
    std::istringstream bad_key(head + "blok 1 0 1\n");
    EXPECT_THROW(read_model(bad_key), domain_error);
    std::istringstream outside(head + "block -1 0 1\n");
    EXPECT_THROW(read_model(outside), domain_error);
    std::istringstream ok(head + "# comment\nblock 1 0.1 2\n");
    EXPECT_EQ(read_model(ok).blocks.size(), 1u);
}

TEST(SectorProfile, AdmissibleAngles) {
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e4, 4);
    const auto p = m.profile.fitted_to(1.5);
    EXPECT_TRUE(p.admissible(1.5));
    EXPECT_FALSE(m.profile.admissible(1.5));
    EXPECT_THROW((void)m.profile.fitted_to(1.9), regime_violation);
}
