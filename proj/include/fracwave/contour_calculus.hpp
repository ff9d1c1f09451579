#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "fracwave/errors.hpp"
#include "fracwave/operator_model.hpp"
#include "fracwave/special_functions.hpp"

namespace fracwave {

/// Quadrature description of Gamma_theta = {r e^{+-i theta}, r > 0}, traversed
/// from infinity e^{i theta} to 0 and back out along e^{-i theta}. A zero
/// r_min or r_max is filled in from the spectrum of the model.
struct ContourSpec {
    double theta = 0.0;
    double r_min = 0.0;
    double r_max = 0.0;
    int nodes_per_decade = 80;
};

/// Hankel path: rays r e^{+-i theta0} for r >= rho joined by the arc of radius
/// rho. Zero theta0 means the midpoint of (pi/2, (pi - theta)/alpha); zero rho
/// means 1/t.
struct HankelSpec {
    double theta0 = 0.0;
    double rho = 0.0;
    double r_max = 0.0;
    int nodes_per_decade = 256;
    int arc_nodes = 64;
};

/// One quadrature node of a contour integral, for diagnostics.
struct NodeSample {
    double r;
    double arg;
    double magnitude;
};

struct CalculusResult {
    State value;
    /// |value(N) - value(N/2)|, a two-grid difference rather than a bound.
    double error_estimate = 0.0;
    /// |f(z)|(1 + |z|) grew over the outermost decade of the contour.
    bool decay_warning = false;
    std::size_t nodes = 0;
    std::vector<NodeSample> diagnostics;
};

using ScalarFn = std::function<cplx(cplx)>;

namespace detail {

// acc += w (z - A)^{-1}, block by block.
inline void add_resolvent(BlockOperator& acc, const AlmostSectorialModel& m, cplx z, cplx w) {
    for (std::size_t j = 0; j < m.blocks.size(); ++j) {
        const cplx r = 1.0 / (z - m.blocks[j].lambda);
        const cplx wr = w * r;
        acc.diag[j] += wr;
        acc.upper[j] += wr * r * m.blocks[j].coupling;
    }
}

inline BlockOperator zero_operator(const AlmostSectorialModel& m) {
    return {std::vector<cplx>(m.blocks.size()), std::vector<cplx>(m.blocks.size())};
}

struct GaussRule {
    std::vector<double> x;
    std::vector<double> w;
};

// n-point Gauss-Legendre rule on [-1, 1].
inline const GaussRule& gauss_legendre(int n) {
    thread_local std::map<int, GaussRule> cache;
    auto it = cache.find(n);
    if (it != cache.end()) {
        return it->second;
    }
    GaussRule g;
    const auto zeros = boost::math::legendre_p_zeros<double>(n);  // non-negative half
    for (const double z : zeros) {
        const double dp = boost::math::legendre_p_prime(n, z);
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        g.x.push_back(z);
        g.w.push_back(w);
        if (z != 0.0) {
            g.x.push_back(-z);
            g.w.push_back(w);
        }
    }
    std::vector<std::size_t> idx(g.x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return g.x[a] < g.x[b]; });
    GaussRule sorted;
    for (const std::size_t i : idx) {
        sorted.x.push_back(g.x[i]);
        sorted.w.push_back(g.w[i]);
    }
    return cache.emplace(n, std::move(sorted)).first->second;
}

}  // namespace detail

/// Contour whose truncation [r_min, r_max] covers the spectrum of m and the
/// extra scale (e.g. t^-alpha) with a factor 10^6 on each side.
inline ContourSpec contour_for(const AlmostSectorialModel& m, double theta, double extra_scale = 0.0,
                               int nodes_per_decade = 80) {
    double lo = m.min_modulus();
    double hi = m.max_modulus();
    if (extra_scale > 0.0) {
        lo = std::min(lo, extra_scale);
        hi = std::max(hi, extra_scale);
    }
    return {theta, 1e-6 * lo, 1e6 * hi, nodes_per_decade};
}

namespace detail {

inline ContourSpec resolved(const AlmostSectorialModel& m, const ContourSpec& c) {
    ContourSpec r = c;
    const ContourSpec a = contour_for(m, c.theta, 0.0, c.nodes_per_decade);
    if (r.r_min <= 0.0) {
        r.r_min = a.r_min;
    }
    if (r.r_max <= 0.0) {
        r.r_max = a.r_max;
    }
    if (!(r.theta > m.profile.omega && r.theta < std::numbers::pi)) {
        throw domain_error("contour: theta must lie in (omega, pi)");
    }
    if (!(r.r_min > 0.0 && r.r_max > r.r_min) || !std::isfinite(r.r_max)) {
        throw domain_error("contour: need 0 < r_min < r_max");
    }
    if (r.nodes_per_decade < 4) {
        throw domain_error("contour: nodes_per_decade must be at least 4");
    }
    if (r.r_min > 1e-2 * m.min_modulus() || r.r_max < 1e2 * m.max_modulus()) {
        throw domain_error("contour: truncation must extend two decades beyond the spectrum on each side");
    }
    return r;
}

struct ContourOperators {
    BlockOperator fine;
    BlockOperator coarse;
    bool decay_warning = false;
    std::size_t nodes = 0;
};

// Trapezoid rule in log r on both rays, plus r_min F(r_min) for [0, r_min] and
// r_max F(r_max) for the r^-2 tail. The coarse operator uses every other node.
inline ContourOperators contour_operators(const AlmostSectorialModel& m, const ScalarFn& f, const ContourSpec& c,
                                          std::vector<NodeSample>* diag, const State* x) {
    const double h0 = std::log(10.0) / c.nodes_per_decade;
    auto n = static_cast<std::size_t>(std::ceil(std::log(c.r_max / c.r_min) / h0));
    n += n % 2;
    const double h = std::log(c.r_max / c.r_min) / static_cast<double>(n);

    ContourOperators out{zero_operator(m), zero_operator(m), false, 2 * (n + 1)};
    const cplx i2pi(0.0, 2.0 * std::numbers::pi);
    std::vector<double> growth(n + 1, 0.0);

    for (const int side : {+1, -1}) {
        const cplx dir = std::polar(1.0, side * c.theta);
        // upper ray runs inward, hence the sign
        const cplx orient = (side > 0 ? -1.0 : 1.0) * dir / i2pi;
        // node contributions are independent; the sums below run in node order
        std::vector<cplx> fz(n + 1);
        std::vector<cplx> zs(n + 1);
        for (std::size_t j = 0; j <= n; ++j) {
            const double r = c.r_min * std::exp(h * static_cast<double>(j));
            zs[j] = r * dir;
            detail::check_collision(m, zs[j]);
            fz[j] = f(zs[j]);
            growth[j] = std::max(growth[j], std::abs(fz[j]) * (1.0 + r));
        }
        for (std::size_t j = 0; j <= n; ++j) {
            const double r = std::abs(zs[j]);
            const bool end = j == 0 || j == n;
            double wf = h * r * (end ? 0.5 : 1.0);
            double wc = j % 2 == 0 ? 2.0 * h * r * (end ? 0.5 : 1.0) : 0.0;
            if (j == 0 || j == n) {
                wf += r;
                wc += r;
            }
            if (diag != nullptr && x != nullptr) {
                const double mag = fz[j] == cplx(0.0, 0.0) ? 0.0 : (fz[j] * resolvent(m, zs[j]).apply(*x)).norm();
                diag->push_back({r, principal_arg(zs[j]), mag});
            }
            if (fz[j] == cplx(0.0, 0.0)) {
                continue;
            }
            add_resolvent(out.fine, m, zs[j], wf * orient * fz[j]);
            if (wc != 0.0) {
                add_resolvent(out.coarse, m, zs[j], wc * orient * fz[j]);
            }
        }
    }
    // growth of |f|(1+|z|) over the last decade
    const auto back = static_cast<std::size_t>(std::min<double>(static_cast<double>(n),
                                                                std::round(std::log(10.0) / h)));
    out.decay_warning = growth[n] > 2.0 * growth[n - back] && growth[n] > 1e-300;
    return out;
}

}  // namespace detail

/// f(A) as a block operator via the Gamma_theta integral
/// (1/2 pi i) int f(z) (z - A)^{-1} dz, with the two-grid error operator.
inline detail::ContourOperators calculus_operator(const AlmostSectorialModel& m, const ScalarFn& f,
                                                  const ContourSpec& c) {
    return detail::contour_operators(m, f, detail::resolved(m, c), nullptr, nullptr);
}

/// f(A) x by quadrature along Gamma_theta. f must be holomorphic on S_mu with
/// |f(z)| <= C / (1 + |z|); growth along the contour sets decay_warning.
inline CalculusResult calculus_apply(const AlmostSectorialModel& m, const ScalarFn& f, const ContourSpec& c,
                                     const State& x, bool with_diagnostics = false) {
    m.check_state(x);
    CalculusResult res;
    const ContourSpec rc = detail::resolved(m, c);
    const auto ops = detail::contour_operators(m, f, rc, with_diagnostics ? &res.diagnostics : nullptr, &x);
    res.value = ops.fine.apply(x);
    res.error_estimate = (res.value - ops.coarse.apply(x)).norm();
    res.decay_warning = ops.decay_warning;
    res.nodes = ops.nodes;
    return res;
}

/// (lam^alpha + A)^{-1} x through the calculus applied to 1/(lam^alpha + z).
/// The node density grows when the pole -lam^alpha or the spectrum comes
/// closer to the contour than pi/24.
inline CalculusResult resolvent_of_power_sum(const AlmostSectorialModel& m, cplx lam, double alpha,
                                             const ContourSpec& c, const State& x) {
    if (!(alpha > 0.0)) {
        throw domain_error("resolvent_of_power_sum: alpha must be positive");
    }
    const cplx la = std::pow(lam, alpha);
    const double pole = std::abs(principal_arg(-la));
    if (pole <= c.theta) {
        throw domain_error("resolvent_of_power_sum: -lam^alpha lies inside the contour sector");
    }
    // the trapezoid error decays like exp(-2 pi margin / h); keep margin / h fixed
    const double margin = std::min(c.theta - m.profile.omega, pole - c.theta);
    ContourSpec fine = c;
    const double ref = std::numbers::pi / 24.0;
    if (margin > 0.0 && margin < ref) {
        fine.nodes_per_decade = static_cast<int>(std::ceil(c.nodes_per_decade * ref / margin));
    }
    return calculus_apply(m, [la](cplx z) { return 1.0 / (la + z); }, fine, x);
}

/// Hankel angle theta0 used when the spec leaves it at zero.
inline double default_theta0(double alpha, double theta) {
    return 0.5 * (0.5 * std::numbers::pi + (std::numbers::pi - theta) / alpha);
}

namespace detail {

struct HankelOperators {
    BlockOperator value;
    std::size_t nodes = 0;
};

// (1/2 pi i) int e^{lam t} lam^{alpha-1} (lam^alpha + A)^{-1} d lam over the
// Hankel path, with (lam^alpha + A)^{-1} = -(-lam^alpha - A)^{-1} taken from
// the exact block resolvent.
inline HankelOperators hankel_operators(const AlmostSectorialModel& m, double alpha, double t, const HankelSpec& h,
                                        double theta) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw domain_error("hankel_propagator: t must be positive");
    }
    if (!(alpha > 0.0 && alpha < 2.0)) {
        throw domain_error("hankel_propagator: alpha must lie in (0, 2)");
    }
    const double upper = (std::numbers::pi - theta) / alpha;
    const double th0 = h.theta0 > 0.0 ? h.theta0 : default_theta0(alpha, theta);
    if (!(th0 > 0.5 * std::numbers::pi && th0 < upper)) {
        throw domain_error("hankel_propagator: theta0 must lie in (pi/2, (pi - theta)/alpha)");
    }
    const double rho = h.rho > 0.0 ? h.rho : 1.0 / t;
    if (h.arc_nodes < 2 || h.nodes_per_decade < 16) {
        throw domain_error("hankel_propagator: too few quadrature nodes");
    }
    // |e^{lam t}| at the far end is 1e-18 of its value on the arc
    const double r_max =
        h.r_max > 0.0 ? h.r_max : rho + (41.5 + rho * t) / (t * std::abs(std::cos(th0)));

    HankelOperators out{zero_operator(m), 0};
    const cplx i2pi(0.0, 2.0 * std::numbers::pi);
    auto node = [&](cplx lam, cplx dlam) {
        const cplx la = std::pow(lam, alpha);
        const cplx w = std::exp(lam * t) * std::pow(lam, alpha - 1.0) * dlam / i2pi;
        check_collision(m, -la);
        add_resolvent(out.value, m, -la, -w);
        ++out.nodes;
    };

    const auto& arc = gauss_legendre(h.arc_nodes);
    for (std::size_t k = 0; k < arc.x.size(); ++k) {
        const double phi = th0 * arc.x[k];
        const cplx lam = std::polar(rho, phi);
        node(lam, cplx(0.0, 1.0) * lam * (th0 * arc.w[k]));
    }

    const auto& gl = gauss_legendre(16);
    const double q = std::pow(10.0, 16.0 / h.nodes_per_decade);
    const double cap = std::numbers::pi / t;
    double a = rho;
    while (a < r_max) {
        const double b = std::min({a * q, a + cap, r_max});
        const double half = 0.5 * (b - a);
        for (std::size_t k = 0; k < gl.x.size(); ++k) {
            const double r = a + half * (1.0 + gl.x[k]);
            const double w = half * gl.w[k];
            // lower ray runs inward, upper ray outward
            const cplx up = std::polar(1.0, th0);
            const cplx dn = std::conj(up);
            node(r * dn, -w * dn);
            node(r * up, w * up);
        }
        a = b;
    }
    return out;
}

}  // namespace detail

/// E_alpha(-t^alpha A) x through the Hankel-path Laplace inversion.
/// theta is the contour angle of the calculus and bounds theta0.
inline State hankel_propagator(const AlmostSectorialModel& m, double alpha, double t, const HankelSpec& h,
                               const State& x, double theta) {
    m.check_state(x);
    return detail::hankel_operators(m, alpha, t, h, theta).value.apply(x);
}

/// As above with theta taken from the model profile.
inline State hankel_propagator(const AlmostSectorialModel& m, double alpha, double t, const HankelSpec& h,
                               const State& x) {
    return hankel_propagator(m, alpha, t, h, x, m.profile.theta);
}

}  // namespace fracwave
