#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fracwave/contour_calculus.hpp"
#include "fracwave/detail/fit.hpp"
#include "fracwave/errors.hpp"
#include "fracwave/fractional_time.hpp"
#include "fracwave/operator_model.hpp"
#include "fracwave/special_functions.hpp"

namespace fracwave {

enum class Representation { gamma_path, hankel_path, oracle };

inline const char* to_string(Representation r) {
    switch (r) {
        case Representation::gamma_path:
            return "gamma-path";
        case Representation::hankel_path:
            return "hankel-path";
        case Representation::oracle:
            return "oracle";
    }
    return "?";
}

inline Representation representation_from_string(const std::string& s) {
    if (s == "gamma-path" || s == "gamma_path") {
        return Representation::gamma_path;
    }
    if (s == "hankel-path" || s == "hankel_path") {
        return Representation::hankel_path;
    }
    if (s == "oracle") {
        return Representation::oracle;
    }
    throw domain_error("unknown representation '" + s + "'");
}

/// The operator family E_{alpha,delta}(-t^alpha A) on a model.
/// Construct with make_propagator, which checks omega < theta < mu < pi - alpha pi/2.
struct PropagatorHandle {
    AlmostSectorialModel model;
    double alpha = 1.5;
    double delta = 1.0;
    /// theta is the Gamma_theta angle; zero r_min / r_max follow the spectrum and t^-alpha.
    ContourSpec contour;
    HankelSpec hankel;
    Representation representation = Representation::gamma_path;
};

/// Builds a validated handle. A nonzero contour.theta overrides the model's
/// theta; a model whose profile is not admissible for alpha gets the midpoint
/// angles of SectorProfile::fitted_to when no theta is given.
inline PropagatorHandle make_propagator(const AlmostSectorialModel& m, double alpha, double delta,
                                        Representation rep = Representation::gamma_path, ContourSpec contour = {},
                                        HankelSpec hankel = {}) {
    if (!(alpha > 1.0 && alpha < 2.0)) {
        throw domain_error("propagator: alpha must lie in (1, 2)");
    }
    if (!std::isfinite(delta)) {
        throw domain_error("propagator: delta must be finite");
    }
    m.validate();
    PropagatorHandle p;
    p.model = m;
    p.alpha = alpha;
    p.delta = delta;
    p.representation = rep;
    if (contour.theta != 0.0) {
        p.model.profile.theta = contour.theta;
    } else if (!m.profile.admissible(alpha)) {
        p.model.profile = m.profile.fitted_to(alpha);
    }
    if (!p.model.profile.admissible(alpha)) {
        throw regime_violation("propagator: need omega < theta < mu < pi - alpha pi / 2");
    }
    contour.theta = p.model.profile.theta;
    p.contour = contour;
    p.hankel = hankel;
    if (rep == Representation::hankel_path && delta != 1.0) {
        throw domain_error("propagator: the Hankel representation is available for delta = 1 only");
    }
    return p;
}

namespace detail {

// E_{alpha,delta}(-s z) with its z-derivative, scaled by c.
inline SpectralFn ml_spectral(double alpha, double delta, double s, double c = 1.0) {
    return [=](cplx z) {
        const MLParams p{alpha, delta};
        return FnValue{c * ml_eval(p, -s * z), -c * s * ml_derivative(p, -s * z, 1)};
    };
}

inline void check_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw domain_error("propagator: t must be positive (t = 0 only through prop_limit_at_zero)");
    }
}

inline ContourSpec contour_at(const PropagatorHandle& p, double scale) {
    ContourSpec c = contour_for(p.model, p.contour.theta, scale, p.contour.nodes_per_decade);
    if (p.contour.r_min > 0.0) {
        c.r_min = p.contour.r_min;
    }
    if (p.contour.r_max > 0.0) {
        c.r_max = p.contour.r_max;
    }
    return c;
}

// c t^power E_{alpha,delta}(-t^alpha A) under a representation.
inline BlockOperator ml_operator(const PropagatorHandle& p, double t, double delta, double c, Representation rep) {
    check_time(t);
    const double s = std::pow(t, p.alpha);
    switch (rep) {
        case Representation::oracle:
            return function_of(p.model, ml_spectral(p.alpha, delta, s, c));
        case Representation::hankel_path:
            if (delta == 1.0) {
                BlockOperator op = hankel_operators(p.model, p.alpha, t, p.hankel, p.contour.theta).value;
                op *= c;
                return op;
            }
            [[fallthrough]];
        case Representation::gamma_path: {
            const double a = p.alpha;
            return calculus_operator(
                       p.model, [=](cplx z) { return c * ml_eval({a, delta}, -s * z); }, contour_at(p, 1.0 / s))
                .fine;
        }
    }
    throw domain_error("propagator: unknown representation");
}

}  // namespace detail

/// E_{alpha,delta}(-t^alpha A) as a block operator under the given representation.
inline BlockOperator prop_operator(const PropagatorHandle& p, double t, Representation rep) {
    return detail::ml_operator(p, t, p.delta, 1.0, rep);
}

inline BlockOperator prop_operator(const PropagatorHandle& p, double t) {
    return prop_operator(p, t, p.representation);
}

/// E_{alpha,delta}(-t^alpha A) x, t > 0.
inline State prop_apply(const PropagatorHandle& p, double t, const State& x, Representation rep) {
    p.model.check_state(x);
    return prop_operator(p, t, rep).apply(x);
}

inline State prop_apply(const PropagatorHandle& p, double t, const State& x) {
    return prop_apply(p, t, x, p.representation);
}

struct LimitValue {
    State value;
    /// The limit t -> 0+ is guaranteed only for x in D(A); in finite
    /// dimension D(A) is the whole space, so the flag is informational.
    bool domain_only = true;
};

/// lim_{t->0+} E_{alpha,delta}(-t^alpha A) x = x / Gamma(delta).
inline LimitValue prop_limit_at_zero(const PropagatorHandle& p, const State& x) {
    p.model.check_state(x);
    return {x * reciprocal_gamma(p.delta), true};
}

/// d^n/dt^n [t^{delta-1} E_{alpha,delta}(-t^alpha A)] x = t^{delta-n-1} E_{alpha,delta-n}(-t^alpha A) x.
/// The Hankel representation covers E_alpha only; other indices use Gamma_theta.
inline State prop_time_derivative(const PropagatorHandle& p, double t, int n, const State& x, Representation rep) {
    if (n < 0) {
        throw domain_error("prop_time_derivative: order must be non-negative");
    }
    p.model.check_state(x);
    detail::check_time(t);
    const double c = std::pow(t, p.delta - n - 1.0);
    return detail::ml_operator(p, t, p.delta - n, c, rep).apply(x);
}

inline State prop_time_derivative(const PropagatorHandle& p, double t, int n, const State& x) {
    return prop_time_derivative(p, t, n, x, p.representation);
}

/// A E_{alpha,delta}(-t^alpha A) x as A applied to prop_apply.
inline State a_prop_apply(const PropagatorHandle& p, double t, const State& x) {
    return fracwave::apply(p.model, prop_apply(p, t, x));
}

/// A E_{alpha,delta}(-t^alpha A) x as the calculus of z E_{alpha,delta}(-t^alpha z).
/// That function decays on Gamma_theta only when delta = alpha - n, n = 0, 1, ...
inline State a_prop_apply_direct(const PropagatorHandle& p, double t, const State& x) {
    p.model.check_state(x);
    detail::check_time(t);
    const double n = p.alpha - p.delta;
    if (!(n > -1e-12 && std::abs(n - std::round(n)) < 1e-12)) {
        throw domain_error("a_prop_apply_direct: needs delta = alpha - n with n a non-negative integer");
    }
    const double s = std::pow(t, p.alpha);
    const double a = p.alpha, d = p.delta;
    return calculus_apply(p.model, [=](cplx z) { return z * ml_eval({a, d}, -s * z); },
                          detail::contour_at(p, 1.0 / s), x)
        .value;
}

/// Norms sampled over t with a fitted log-log slope.
struct DecayReport {
    std::vector<double> t;
    std::vector<double> norm;
    double slope = 0.0;
    /// max over samples of norm * t^(-slope)
    double c_empirical = 0.0;
};

/// Fits a DecayReport to norms of op(t), computed with exact block norms.
inline DecayReport norm_sweep(std::span<const double> t_values, const std::function<BlockOperator(double)>& op) {
    if (t_values.size() < 2) {
        throw domain_error("norm sweep: need at least two times");
    }
    DecayReport rep;
    std::vector<double> lx, ly;
    for (const double t : t_values) {
        detail::check_time(t);
        const double n = op(t).norm();
        rep.t.push_back(t);
        rep.norm.push_back(n);
        lx.push_back(std::log(t));
        ly.push_back(std::log(n));
    }
    rep.slope = detail::least_squares(lx, ly).slope;
    for (std::size_t i = 0; i < rep.t.size(); ++i) {
        rep.c_empirical = std::max(rep.c_empirical, rep.norm[i] * std::pow(rep.t[i], -rep.slope));
    }
    return rep;
}

struct DecayOptions {
    /// multiplies the operator by t^t_power (1 for t E_{alpha,2})
    double t_power = 0.0;
    /// applies A on the left
    bool times_A = false;
};

/// || t^power [A] E_{alpha,delta}(-t^alpha A) || over t, from the block oracle.
inline DecayReport prop_norm_decay(const PropagatorHandle& p, std::span<const double> t_values,
                                   DecayOptions opt = {}) {
    return norm_sweep(t_values, [&](double t) {
        BlockOperator op = detail::ml_operator(p, t, p.delta, std::pow(t, opt.t_power), Representation::oracle);
        return opt.times_A ? compose(as_operator(p.model), op) : op;
    });
}

/// || A (g_{alpha-1} * E_alpha)(t) || = || A t^{alpha-1} E_{alpha,alpha}(-t^alpha A) ||.
inline DecayReport convolution_norm_decay(const PropagatorHandle& p, std::span<const double> t_values) {
    return norm_sweep(t_values, [&](double t) {
        return compose(as_operator(p.model),
                       detail::ml_operator(p, t, p.alpha, std::pow(t, p.alpha - 1.0), Representation::oracle));
    });
}

/// || (E_alpha(-t^alpha A) - I) A^{-1} ||, the strong continuity rate on D(A).
inline DecayReport strong_continuity_sweep(const PropagatorHandle& p, std::span<const double> t_values) {
    const double a = p.alpha;
    return norm_sweep(t_values, [&](double t) {
        const double s = std::pow(t, a);
        return function_of(p.model, [=](cplx z) {
            const cplx e = ml_eval({a, 1.0}, -s * z);
            const cplx de = -s * ml_derivative({a, 1.0}, -s * z, 1);
            return FnValue{(e - 1.0) / z, (de * z - (e - 1.0)) / (z * z)};
        });
    });
}

/// || d/dt E_alpha(-t^alpha A) A^{-1} || = || t^{alpha-1} E_{alpha,alpha}(-t^alpha A) ||.
inline DecayReport derivative_at_zero_sweep(const PropagatorHandle& p, std::span<const double> t_values) {
    return norm_sweep(t_values, [&](double t) {
        return detail::ml_operator(p, t, p.alpha, std::pow(t, p.alpha - 1.0), Representation::oracle);
    });
}

/// Time grid and resolution for the convolution-based identity checks.
struct CheckGrid {
    int n_steps = 2048;
    double grading = 2.0;
};

namespace detail {

inline void require_continuity_regime(const PropagatorHandle& p, const char* what) {
    if (!(p.alpha * (1.0 + p.model.profile.gamma) < 1.0)) {
        throw regime_violation(std::string(what) + ": requires alpha (1 + gamma) < 1");
    }
}

// Nodes on [0, t] graded towards both ends, where g_beta and E_alpha(t - tau) are singular.
inline std::vector<double> two_sided_nodes(double t, const CheckGrid& g) {
    if (g.n_steps < 2) {
        throw domain_error("check grid: need at least two steps");
    }
    const TimeGrid half{0.5 * t, g.n_steps / 2, g.grading};
    std::vector<double> left = half.nodes();
    std::vector<double> nodes = left;
    for (std::size_t i = left.size() - 1; i-- > 0;) {
        nodes.push_back(t - left[i]);
    }
    return nodes;
}

// (g_beta * E_alpha(-s^alpha A) x)(t) = int g_beta(tau) E_alpha(t - tau) x d tau by product
// integration, the propagator taken from the oracle at t - tau_m.
inline State convolved_propagator(const PropagatorHandle& p, double beta, double t, const State& x,
                                  const CheckGrid& g) {
    Trajectory f;
    f.grid = TimeGrid{t, g.n_steps, g.grading};
    f.t = two_sided_nodes(t, g);
    f.values.assign(f.t.size(), x);
    std::vector<BlockOperator> snaps(f.t.size());
    for (std::size_t m = 0; m + 1 < f.t.size(); ++m) {
        snaps[m] = ml_operator(p, t - f.t[m], 1.0, 1.0, Representation::oracle);
    }
    const SnapshotOp op = [&](std::size_t m, const State& y) -> State {
        return m + 1 == snaps.size() ? y : snaps[m].apply(y);
    };
    return duhamel_convolve_at(Kernel{beta}, op, f, f.size() - 1);
}

}  // namespace detail

/// || int_0^inf e^{-lam t} E_alpha(-t^alpha A) x dt - lam^{alpha-1} (lam^alpha + A)^{-1} x || / ||x||.
/// The time integral uses 16-point Gauss-Legendre panels growing geometrically
/// from 1e-12/lam; the right-hand side uses the handle's representation.
inline double laplace_check(const PropagatorHandle& p, double lam, const State& x) {
    detail::require_continuity_regime(p, "laplace_check");
    if (!(lam > 0.0) || !std::isfinite(lam)) {
        throw domain_error("laplace_check: lambda must be positive");
    }
    p.model.check_state(x);
    if (x.norm() == 0.0) {
        return 0.0;
    }
    const double t0 = 1e-12 / lam;
    const double t_end = 45.0 / lam;
    const auto& gl = detail::gauss_legendre(16);
    State integral = t0 * x;  // E ~ I on [0, t0]
    double a = t0;
    while (a < t_end) {
        const double b = std::min(a * std::pow(2.0, 0.25), t_end);
        const double half = 0.5 * (b - a);
        for (std::size_t k = 0; k < gl.x.size(); ++k) {
            const double t = a + half * (1.0 + gl.x[k]);
            integral += half * gl.w[k] * std::exp(-lam * t) *
                        detail::ml_operator(p, t, 1.0, 1.0, Representation::oracle).apply(x);
        }
        a = b;
    }
    const double la = std::pow(lam, p.alpha);
    State rhs;
    if (p.representation == Representation::gamma_path) {
        rhs = resolvent_of_power_sum(p.model, lam, p.alpha, detail::contour_at(p, la), x).value;
    } else {
        rhs = -resolvent_apply(p.model, -la, x);
    }
    rhs *= std::pow(lam, p.alpha - 1.0);
    return (integral - rhs).norm() / x.norm();
}

/// || d/dt E_alpha(-t^alpha A) x + A (g_{alpha-1} * E_alpha)(t) x || / || d/dt E_alpha x ||.
inline double derivative_identity_check(const PropagatorHandle& p, double t, const State& x,
                                        const CheckGrid& g = {}) {
    p.model.check_state(x);
    detail::check_time(t);
    if (x.norm() == 0.0) {
        return 0.0;
    }
    PropagatorHandle e = p;
    e.delta = 1.0;
    const State lhs = prop_time_derivative(e, t, 1, x);
    const State conv = detail::convolved_propagator(p, p.alpha - 1.0, t, x, g);
    return (lhs + fracwave::apply(p.model, conv)).norm() / lhs.norm();
}

/// || A (g_alpha * E_alpha)(t) x - (x - E_alpha(-t^alpha A) x) || / ||x||.
/// By default the convolution is taken in closed form, t^alpha E_{alpha,alpha+1}(-t^alpha A),
/// under the handle's representation with the right side from the oracle. With a grid
/// the convolution is done by product integration instead; that is second order and
/// loses accuracy once t^alpha |A| is large.
inline double uno_identity_check(const PropagatorHandle& p, double t, const State& x,
                                 std::optional<CheckGrid> grid = std::nullopt) {
    detail::require_continuity_regime(p, "uno_identity_check");
    p.model.check_state(x);
    detail::check_time(t);
    if (x.norm() == 0.0) {
        return 0.0;
    }
    State conv;
    State e;
    if (grid) {
        conv = detail::convolved_propagator(p, p.alpha, t, x, *grid);
        e = detail::ml_operator(p, t, 1.0, 1.0, p.representation).apply(x);
    } else {
        conv = detail::ml_operator(p, t, p.alpha + 1.0, std::pow(t, p.alpha), p.representation).apply(x);
        e = detail::ml_operator(p, t, 1.0, 1.0, Representation::oracle).apply(x);
    }
    return (fracwave::apply(p.model, conv) - (x - e)).norm() / x.norm();
}

/// `t,norm,fitted_slope,C_empirical` rows.
inline void write_decay_csv(std::ostream& os, const DecayReport& r) {
    os << "t,norm,fitted_slope,C_empirical\n" << std::setprecision(17);
    for (std::size_t i = 0; i < r.t.size(); ++i) {
        os << r.t[i] << ',' << r.norm[i] << ',' << r.slope << ',' << r.c_empirical << '\n';
    }
}

}  // namespace fracwave
