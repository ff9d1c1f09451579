#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fracwave/solvers.hpp"

using namespace fracwave;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double alpha = 1.5;

State ones(Eigen::Index d, double c = 1.0) { return State::Constant(d, cplx(c, 0.0)); }

cplx ml(double d, double t, double a) { return ml_eval({alpha, d}, -std::pow(t, alpha) * a); }

WaveProblem scalar_problem(double a, State w0, State w1, ForcingSpec f = {}, int n = 2048, double T = 1.0) {
    return {scalar_model(a, -0.75), alpha, std::move(w0), std::move(w1), std::move(f), TimeGrid{T, n, 2.0}};
}

State sin_of(double, const State& w) {
    State v = w;
    for (auto& c : v) {
        c = std::sin(c);
    }
    return v;
}

double max_gap(const Trajectory& a, const Trajectory& b) {
    double g = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        g = std::max(g, (a.values[i] - b.values[i]).norm());
    }
    return g;
}

}  // namespace

TEST(ValidateRegime, Examples) {
    auto p = scalar_problem(1.0, ones(2), ones(2));
    auto r = validate_regime(p, Theorem::homogeneous);
    EXPECT_TRUE(r.cond_alpha_upper);
    EXPECT_TRUE(r.cond_alpha_lower);
    EXPECT_TRUE(r.classical_ok);

    p.model = scalar_model(1.0, -0.5);
    r = validate_regime(p, Theorem::homogeneous);
    EXPECT_FALSE(r.cond_alpha_lower);
    EXPECT_FALSE(r.classical_ok);
    p.w1 = State::Zero(2);
    EXPECT_TRUE(validate_regime(p, Theorem::homogeneous).classical_ok);

    auto q = scalar_problem(1.0, State::Zero(2), State::Zero(2), ForcingSpec::time_only([](double) { return ones(2); }, 0.5));
    r = validate_regime(q, Theorem::linear);
    EXPECT_TRUE(r.cond_holder);
    EXPECT_TRUE(r.classical_ok);
    q.forcing.nu = 0.3;
    EXPECT_FALSE(validate_regime(q, Theorem::linear).classical_ok);

    auto s = scalar_problem(1.0, ones(2), ones(2), ForcingSpec::semilinear(sin_of, 2.0, 1.0));
    EXPECT_TRUE(validate_regime(s, Theorem::semilinear_mild).classical_ok);
    EXPECT_TRUE(validate_regime(s, Theorem::semilinear_classical).classical_ok);
    s.model = scalar_model(1.0, -0.2);
    EXPECT_FALSE(validate_regime(s, Theorem::semilinear_mild).classical_ok);
}

TEST(ValidateRegime, EstimatesUndeclaredHolderExponent) {
    auto q = scalar_problem(1.0, State::Zero(2), State::Zero(2),
                            ForcingSpec::time_only([](double t) { return ones(2, std::pow(t, 0.2)); }), 256);
    const auto r = validate_regime(q, Theorem::linear);
    EXPECT_NEAR(r.nu, 0.2, 0.05);
    EXPECT_FALSE(r.cond_holder);
}

TEST(SolveHomogeneous, ScalarOracle) {
    const auto p = scalar_problem(2.0, ones(2), ones(2, 0.5), {}, 256);
    const auto s = solve_homogeneous(p);
    EXPECT_FALSE(s.experimental);
    EXPECT_EQ(s.w.values[0], p.w0);
    for (std::size_t i = 1; i < s.w.size(); i += 17) {
        const double t = s.w.t[i];
        const cplx v = ml(1.0, t, 2.0) + 0.5 * t * ml(2.0, t, 2.0);
        EXPECT_LT(std::abs(s.w.values[i][0] - v), 1e-8 * std::abs(v));
    }
}

TEST(SolveHomogeneous, ZeroDataAndRepresentations) {
    const auto z = solve_homogeneous(scalar_problem(2.0, State::Zero(2), State::Zero(2), {}, 64));
    for (const auto& v : z.w.values) {
        EXPECT_EQ(v.norm(), 0.0);
    }
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e2, 4);
    const WaveProblem p{m, alpha, ones(m.dim()), ones(m.dim(), -0.5), {}, TimeGrid{2.0, 12, 2.0}};
    const auto o = solve_homogeneous(p);
    const auto g = solve_homogeneous(p, {Representation::gamma_path, false});
    const auto h = solve_homogeneous(p, {Representation::hankel_path, false});
    EXPECT_LT(max_gap(o.w, g.w), 1e-8 * ones(m.dim()).norm());
    EXPECT_LT(max_gap(o.w, h.w), 1e-8 * ones(m.dim()).norm());
}

TEST(SolveHomogeneous, InitialVelocity) {
    // w0 = 0: w = t E_{alpha,2} w1, so w'(0) = w1
    const auto p = scalar_problem(2.0, State::Zero(2), ones(2));
    const auto r = verify_classical(p, solve_homogeneous(p).w);
    EXPECT_EQ(r.w0_error, 0.0);
    EXPECT_LT(r.w1_error, 1e-3);
}

TEST(SolveHomogeneous, RegimeGuard) {
    auto p = scalar_problem(1.0, ones(2), ones(2), {}, 32);
    p.model = scalar_model(1.0, -0.5);
    EXPECT_THROW(solve_homogeneous(p), regime_violation);
    const auto s = solve_homogeneous(p, {Representation::oracle, true});
    EXPECT_TRUE(s.experimental);
    p.forcing = ForcingSpec::time_only([](double) { return ones(2); });
    EXPECT_THROW(solve_homogeneous(p), domain_error);
}

TEST(VerifyClassical, HomogeneousResidualShrinks) {
    double prev = 0.0;
    for (int n : {1024, 2048, 4096}) {
        const auto p = scalar_problem(2.0, ones(2), ones(2, 0.5), {}, n);
        const auto r = verify_classical(p, solve_homogeneous(p).w);
        EXPECT_EQ(r.w0_error, 0.0);
        if (n == 2048) {
            EXPECT_LT(r.max_interior, 1e-3);
        }
        if (prev > 0.0) {
            EXPECT_GT(prev / r.max_interior, 2.0) << n;
        }
        prev = r.max_interior;
    }
}

TEST(VerifyClassical, VelocityErrorIsGridOrder) {
    const auto coarse = scalar_problem(2.0, ones(2), ones(2, 0.5), {}, 1024);
    const auto fine = scalar_problem(2.0, ones(2), ones(2, 0.5), {}, 2048);
    const double ec = verify_classical(coarse, solve_homogeneous(coarse).w).w1_error;
    const double ef = verify_classical(fine, solve_homogeneous(fine).w).w1_error;
    EXPECT_LT(ef, 1e-3);
    EXPECT_GT(ec / ef, 1.8);
}

TEST(VerifyClassical, NegativeControlAndZeroProblem) {
    const auto p = scalar_problem(2.0, ones(2), ones(2, 0.5), {}, 512);
    Trajectory w = solve_homogeneous(p).w;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (auto& v : w.values) {
        v += 0.1 * State::Constant(2, cplx(n(rng), 0.0));
    }
    EXPECT_GT(verify_classical(p, w).max_interior, 1.0);

    const auto z = scalar_problem(2.0, State::Zero(2), State::Zero(2), {}, 64);
    const auto r = verify_classical(z, solve_homogeneous(z).w);
    EXPECT_EQ(r.max_interior, 0.0);
    EXPECT_EQ(r.w1_error, 0.0);
    EXPECT_THROW(verify_classical(z, solve_homogeneous(scalar_problem(2.0, State::Zero(2), State::Zero(2), {}, 32)).w),
                 domain_error);
}

TEST(VerifyClassical, ResidualCsv) {
    ResidualReport r;
    r.t = {0.0, 0.5};
    r.residual = {0.0, 0.25};
    std::ostringstream os;
    write_residual_csv(os, r);
    EXPECT_EQ(os.str(), "t,residual\n0,0\n0.5,0.25\n");
}

TEST(SolveLinear, ZeroForcingIsHomogeneous) {
    const auto p = scalar_problem(2.0, ones(2), ones(2, 0.5), {}, 128);
    auto q = p;
    q.forcing = ForcingSpec::time_only([](double) { return State::Zero(2).eval(); }, 1.0);
    EXPECT_LT(max_gap(solve_linear(q).w, solve_homogeneous(p).w), 1e-15);
}

TEST(SolveLinear, ConstantForcingConverges) {
    // w = (1 - E_alpha(-t^alpha a)) / a for w0 = w1 = 0, f = 1
    const double a = 2.0;
    const cplx exact = (1.0 - ml(1.0, 1.0, a)) / a;
    double prev = 0.0;
    for (int n : {256, 512, 1024, 2048}) {
        const auto p = scalar_problem(a, State::Zero(2), State::Zero(2), ForcingSpec::time_only([](double) { return ones(2); }), n);
        const double err = std::abs(solve_linear(p).w.values.back()[0] - exact);
        if (prev > 0.0) {
            EXPECT_GT(prev / err, 2.0) << n;
        }
        prev = err;
    }
    EXPECT_LT(prev, 1e-6);
}

TEST(SolveLinear, Superposition) {
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1e2, 4);
    const auto f = ForcingSpec::time_only([&](double t) { return ones(m.dim(), std::cos(3.0 * t)); }, 1.0);
    const WaveProblem full{m, alpha, ones(m.dim()), ones(m.dim(), 0.3), f, TimeGrid{1.0, 256, 2.0}};
    WaveProblem hom = full;
    hom.forcing = {};
    WaveProblem forced = full;
    forced.w0 = State::Zero(m.dim());
    forced.w1 = State::Zero(m.dim());
    const auto a = solve_linear(full).w;
    const auto b = solve_homogeneous(hom).w;
    const auto c = solve_linear(forced).w;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_LT((a.values[i] - b.values[i] - c.values[i]).norm(), 1e-13 * (1.0 + a.values[i].norm()));
    }
}

TEST(SolveLinear, ResidualOfForcedProblem) {
    const auto p = scalar_problem(2.0, ones(2), ones(2, 0.5),
                                  ForcingSpec::time_only([](double t) { return ones(2, std::sin(2.0 * t)); }, 1.0));
    EXPECT_LT(verify_classical(p, solve_linear(p).w).max_interior, 1e-3);
}

TEST(SolveSemilinear, ZeroNonlinearityIsOneStep) {
    const auto p = scalar_problem(2.0, ones(2), ones(2, 0.5),
                                  ForcingSpec::semilinear([](double, const State& w) { return State::Zero(w.size()).eval(); }, 1.0),
                                  128);
    PicardOptions po;
    po.init = PicardOptions::Init::zero;
    const auto r = solve_semilinear(p, po);
    auto h = p;
    h.forcing = {};
    // the first sweep lands on the homogeneous solution, the second confirms it
    EXPECT_LE(r.iterations, 2);
    EXPECT_LT(max_gap(r.solution.w, solve_homogeneous(h).w), 1e-15);
}

TEST(SolveSemilinear, LinearNonlinearityMatchesShiftedOperator) {
    // f(t, w) = c w turns A = a into a - c
    const double a = 2.0, c = 0.5;
    const auto p = scalar_problem(a, ones(2), ones(2, 0.5),
                                  ForcingSpec::semilinear([c](double, const State& w) { return State(c * w); }, c * (1 + a)), 1024, 0.2);
    const auto r = solve_semilinear(p, {1e-13, 50});
    const auto q = scalar_problem(a - c, ones(2), ones(2, 0.5), {}, 1024, 0.2);
    EXPECT_LT(max_gap(r.solution.w, solve_homogeneous(q).w), 1e-5);
}

TEST(SolveSemilinear, SineNonlinearity) {
    const double a = 2.0;
    const auto p = scalar_problem(a, ones(2, 0.5), ones(2, 0.5), ForcingSpec::semilinear(sin_of, 1 + a, 1.0), 2048, 0.1);
    EXPECT_LT(picard_contraction_bound(p), 0.5);
    const auto r = solve_semilinear(p, {1e-12, 50});
    ASSERT_GE(r.history.size(), 3u);
    for (std::size_t k = 1; k < r.history.size(); ++k) {
        EXPECT_LT(r.history[k], r.history[k - 1]);
    }
    EXPECT_LT(r.history.back() / r.history[r.history.size() - 2], 1.0);
    EXPECT_LT(verify_classical(p, r.solution.w).max_interior, 1e-3);

    PicardOptions zero;
    zero.tol = 1e-12;
    zero.init = PicardOptions::Init::zero;
    EXPECT_LT(max_gap(r.solution.w, solve_semilinear(p, zero).solution.w), 1e-11);
}

TEST(SolveSemilinear, NonconvergenceCarriesHistory) {
    const auto p = scalar_problem(2.0, ones(2, 0.5), ones(2, 0.5), ForcingSpec::semilinear(sin_of, 3.0), 128, 0.1);
    try {
        solve_semilinear(p, {1e-30, 3});
        FAIL() << "expected nonconvergence";
    } catch (const nonconvergence& e) {
        EXPECT_EQ(e.history().size(), 3u);
    }
    auto q = p;
    q.forcing = {};
    EXPECT_THROW(solve_semilinear(q), domain_error);
}

TEST(SolveSemilinear, SmallLadder) {
    const auto m = build_ladder_model(-0.75, pi / 6.0, 1e-2, 1.0, 4);
    double norm_a = 0.0;
    for (const auto& b : m.blocks) {
        norm_a = std::max(norm_a, block_norm(b.lambda, b.coupling));
    }
    const WaveProblem p{m, alpha, ones(m.dim(), 0.5), ones(m.dim(), 0.5), ForcingSpec::semilinear(sin_of, 1 + norm_a, 1.0),
                        TimeGrid{0.3, 1024, 2.0}};
    const auto r = solve_semilinear(p, {1e-12, 50});
    EXPECT_LT(verify_classical(p, r.solution.w).max_interior, 1e-3);
}

TEST(HoelderModulus, Examples) {
    const TimeGrid g{1.0, 256, 1.0};
    EXPECT_NEAR(hoelder_modulus(Trajectory::sample(g, 1, [](double t) { return ones(1, std::sqrt(t)); })).nu, 0.5, 0.05);
    EXPECT_NEAR(hoelder_modulus(Trajectory::sample(g, 1, [](double t) { return ones(1, t); })).nu, 1.0, 0.02);
    const auto c = hoelder_modulus(Trajectory::sample(g, 1, [](double) { return ones(1, 3.0); }));
    EXPECT_TRUE(c.degenerate);
    EXPECT_EQ(c.nu, 1.0);
    EXPECT_THROW(hoelder_modulus(Trajectory::sample(TimeGrid{1.0, 5, 1.0}, 1, [](double) { return ones(1); })),
                 domain_error);
}
