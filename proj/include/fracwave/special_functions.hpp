#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "fracwave/detail/double_double.hpp"
#include "fracwave/detail/fit.hpp"
#include "fracwave/errors.hpp"

namespace fracwave {

using cplx = std::complex<double>;

/// Parameters (alpha, delta) of the two-parameter Mittag-Leffler function
/// E_{alpha,delta}(z) = sum_k z^k / Gamma(alpha k + delta).
struct MLParams {
    double alpha = 1.0;
    double delta = 1.0;

    void validate() const {
        if (!(alpha > 0.0) || !std::isfinite(alpha) || !std::isfinite(delta)) {
            throw domain_error("Mittag-Leffler: alpha must be finite and positive");
        }
    }
};

/// Algorithm switches for the Mittag-Leffler evaluator.
struct MLOptions {
    /// The Taylor series is used while |z|^(1/alpha) <= taylor_radius. Beyond
    /// it the asymptotic expansion is accurate to about exp(-taylor_radius).
    double taylor_radius = 36.0;
    /// Explicit switching modulus |z|; overrides taylor_radius when positive.
    double z_switch = 0.0;
};

struct MLValue {
    cplx value;
    /// Set when the result may have lost accuracy: heavy cancellation in the
    /// series, or Gamma poles inside the truncated asymptotic tail.
    bool degraded = false;
};

/// Principal argument in (-pi, pi]; a negative real axis point with a signed
/// zero imaginary part maps to +pi.
inline double principal_arg(cplx z) {
    if (z.imag() == 0.0) {
        return z.real() < 0.0 ? std::numbers::pi : 0.0;
    }
    return std::arg(z);
}

namespace detail {

inline double sin_pi(double x) {
    // reduce to [-1, 1] so the argument of sin stays small
    const double r = x - 2.0 * std::nearbyint(0.5 * x);
    return std::sin(std::numbers::pi * r);
}

// 1/Gamma(x) for x >= 0.5; glibc tgamma is within about one ulp there.
inline double reciprocal_gamma_positive(double x) {
    if (x > 170.0) {
        return std::exp(-std::lgamma(x));
    }
    return 1.0 / std::tgamma(x);
}

}  // namespace detail

/// 1/Gamma(x); exactly zero at the poles x = 0, -1, -2, ...
inline double reciprocal_gamma(double x) {
    if (!std::isfinite(x)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (x <= 0.0 && x == std::nearbyint(x)) {
        return 0.0;
    }
    if (x >= 1.0 && x <= 23.0 && x == std::nearbyint(x)) {
        double f = 1.0;
        for (int k = 2; k < static_cast<int>(x); ++k) {
            f *= k;
        }
        return 1.0 / f;
    }
    if (x < 0.5) {
        // reflection: 1/Gamma(x) = Gamma(1-x) sin(pi x) / pi
        return detail::sin_pi(x) / (std::numbers::pi * detail::reciprocal_gamma_positive(1.0 - x));
    }
    return detail::reciprocal_gamma_positive(x);
}

namespace detail {

using quad = boost::multiprecision::cpp_bin_float_quad;

inline dd to_dd(const quad& q) {
    const double hi = static_cast<double>(q);
    const double lo = static_cast<double>(q - quad(hi));
    return {hi, lo};
}

// 1/Gamma(x) in 113-bit precision, zero at the poles.
inline quad reciprocal_gamma_quad(const quad& x) {
    if (x <= 0 && x == boost::multiprecision::round(x)) {
        return quad(0);
    }
    int sign = 1;
    const quad lg = boost::math::lgamma(x, &sign);
    return sign * boost::multiprecision::exp(-lg);
}

// Series coefficients for a fixed (alpha, delta). Terms are produced as
// T_k = z^k c_k directly for k <= start and by the ratio recursion
// T_k = T_{k-1} z r_k afterwards, so that |z|^k never overflows.
class TaylorTable {
public:
    TaylorTable(double alpha, double delta) : alpha_(alpha), delta_(delta) {
        start_ = 0;
        while (alpha * start_ + delta <= 0.0) {
            ++start_;
        }
        for (int k = 0; k <= start_; ++k) {
            head_.push_back(to_dd(reciprocal_gamma_quad(arg(k))));
        }
        ratio_.assign(static_cast<std::size_t>(start_) + 1, dd{});
        prev_lgamma_ = boost::math::lgamma(arg(start_));
    }

    [[nodiscard]] int start() const { return start_; }
    [[nodiscard]] const dd& head(int k) const { return head_[static_cast<std::size_t>(k)]; }

    const dd& ratio(int k) {
        while (static_cast<int>(ratio_.size()) <= k) {
            const int j = static_cast<int>(ratio_.size());
            const quad lg = boost::math::lgamma(arg(j));
            ratio_.push_back(to_dd(boost::multiprecision::exp(prev_lgamma_ - lg)));
            prev_lgamma_ = lg;
        }
        return ratio_[static_cast<std::size_t>(k)];
    }

private:
    [[nodiscard]] quad arg(int k) const { return quad(alpha_) * k + quad(delta_); }

    double alpha_;
    double delta_;
    int start_ = 0;
    std::vector<dd> head_;
    std::vector<dd> ratio_;
    quad prev_lgamma_;
};

inline TaylorTable& taylor_table(double alpha, double delta) {
    thread_local std::map<std::pair<double, double>, TaylorTable> cache;
    auto it = cache.find({alpha, delta});
    if (it == cache.end()) {
        it = cache.emplace(std::pair{alpha, delta}, TaylorTable(alpha, delta)).first;
    }
    return it->second;
}

inline cdd to_cdd(cplx z) { return {dd(z.real()), dd(z.imag())}; }

// n-th derivative of the series, sum_{k>=n} k!/(k-n)! z^(k-n) / Gamma(alpha k + delta).
inline MLValue ml_taylor(const MLParams& p, cplx z, int order) {
    TaylorTable& table = taylor_table(p.alpha, p.delta);
    auto falling = [order](int k) {
        double f = 1.0;
        for (int j = 0; j < order; ++j) {
            f *= static_cast<double>(k - j);
        }
        return f;
    };

    if (std::abs(z) < 1e-30) {
        // two leading terms; higher powers are below double resolution
        auto coef = [&](int k) {
            if (k <= table.start()) {
                return table.head(k).to_double();
            }
            double c = table.head(table.start()).to_double();
            for (int j = table.start() + 1; j <= k; ++j) {
                c *= table.ratio(j).to_double();
            }
            return c;
        };
        return {cplx(falling(order) * coef(order)) + falling(order + 1) * coef(order + 1) * z, false};
    }

    const cdd zz = to_cdd(z);
    cdd sum{};
    cdd term{dd(1.0), dd(0.0)};  // z^k c_k once scaled below
    cdd zpow{dd(1.0), dd(0.0)};
    double max_abs = 0.0;
    double prev_abs = 0.0;
    constexpr int max_terms = 20000;
    bool converged = false;
    for (int k = 0; k < max_terms; ++k) {
        if (k <= table.start()) {
            term = zpow * table.head(k);
            zpow = zpow * zz;
        } else {
            term = term * zz * table.ratio(k);
        }
        const double mag = term.abs_approx() * std::max(1.0, falling(k));
        if (k >= order) {
            sum = sum + term * falling(k);
            max_abs = std::max(max_abs, mag);
        }
        if (k > table.start() && k > order + 1) {
            const bool decreasing = mag <= prev_abs;
            if (decreasing && (mag <= 1e-34 * max_abs || mag == 0.0)) {
                converged = true;
                break;
            }
        }
        prev_abs = mag;
    }

    cplx value = sum.to_complex();
    if (order > 0) {
        value /= std::pow(z, order);
    }
    const double result_scale = std::abs(sum.to_complex());
    const bool lossy = max_abs * 1e-31 > 1e-13 * result_scale;
    return {value, !converged || lossy};
}

// Asymptotic expansion for large |z|: exponential contributions from every
// branch z^(1/alpha) e^(2 pi i m / alpha) on the dominant side of its Stokes
// line, plus the algebraic series truncated at its smallest term.
inline MLValue ml_asymptotic(const MLParams& p, cplx z) {
    const double a = p.alpha;
    const double d = p.delta;
    const double r = std::abs(z);
    const double phi = principal_arg(z);
    bool degraded = false;

    cplx expo{0.0, 0.0};
    const int m_max = static_cast<int>(std::ceil(a / 2.0)) + 1;
    for (int m = -m_max; m <= m_max; ++m) {
        const double ang = phi + 2.0 * std::numbers::pi * m;
        if (std::abs(ang) >= a * std::numbers::pi) {
            continue;
        }
        const cplx log_u{std::log(r) / a, ang / a};
        const cplx u = std::exp(log_u);
        expo += std::exp((1.0 - d) * log_u + u) / a;
    }

    cplx alg{0.0, 0.0};
    const cplx zinv = 1.0 / z;
    cplx zpow = zinv;
    double prev = std::numeric_limits<double>::infinity();
    const double log_r = std::log(r);
    for (int k = 1; k <= 400; ++k) {
        const double x = d - a * k;
        const double rg = reciprocal_gamma(x);
        const cplx term = zpow * rg;
        zpow *= zinv;
        // truncate on the envelope |1/Gamma(x)| <= Gamma(1-x)/pi so that
        // terms near a pole do not stop the sum early
        const double env = x > 0.0 ? std::abs(term)
                                   : std::exp(std::lgamma(1.0 - x) - k * log_r) / std::numbers::pi;
        if (env > prev) {
            break;
        }
        prev = env;
        if (rg == 0.0) {
            degraded = true;
            continue;
        }
        alg -= term;
        if (env <= 1e-18 * std::abs(alg)) {
            break;
        }
    }
    return {expo + alg, degraded};
}

inline bool use_taylor(const MLParams& p, cplx z, const MLOptions& opt) {
    const double r = std::abs(z);
    if (opt.z_switch > 0.0) {
        return r <= opt.z_switch;
    }
    return std::pow(r, 1.0 / p.alpha) <= opt.taylor_radius;
}

}  // namespace detail

/// E_{alpha,delta}(z) with an accuracy flag.
inline MLValue ml_eval_checked(const MLParams& p, cplx z, const MLOptions& opt = {}) {
    p.validate();
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
        throw domain_error("Mittag-Leffler: argument must be finite");
    }
    if (z == cplx(0.0, 0.0)) {
        return {cplx(reciprocal_gamma(p.delta)), false};
    }
    if (detail::use_taylor(p, z, opt)) {
        return detail::ml_taylor(p, z, 0);
    }
    return detail::ml_asymptotic(p, z);
}

/// E_{alpha,delta}(z).
inline cplx ml_eval(const MLParams& p, cplx z, const MLOptions& opt = {}) {
    return ml_eval_checked(p, z, opt).value;
}

/// d^n/dz^n E_{alpha,delta}(z) for n <= 4.
inline cplx ml_derivative(const MLParams& p, cplx z, int order, const MLOptions& opt = {}) {
    p.validate();
    if (order < 0 || order > 4) {
        throw domain_error("ml_derivative: order must be in [0, 4]");
    }
    if (order == 0) {
        return ml_eval(p, z, opt);
    }
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
        throw domain_error("Mittag-Leffler: argument must be finite");
    }
    if (detail::use_taylor(p, z, opt)) {
        return detail::ml_taylor(p, z, order).value;
    }
    // alpha z E'_{delta} = E_{delta-1} - (delta-1) E_{delta}, differentiated
    // repeatedly; table[j] holds derivatives of E_{alpha, delta-j}.
    std::vector<cplx> table(static_cast<std::size_t>(order) + 1);
    for (int j = 0; j <= order; ++j) {
        table[static_cast<std::size_t>(j)] = detail::ml_asymptotic({p.alpha, p.delta - j}, z).value;
    }
    for (int o = 1; o <= order; ++o) {
        for (int j = 0; j + o <= order; ++j) {
            const double shift = p.delta - j - 1.0 + p.alpha * (o - 1);
            table[static_cast<std::size_t>(j)] =
                (table[static_cast<std::size_t>(j) + 1] - shift * table[static_cast<std::size_t>(j)]) / (p.alpha * z);
        }
    }
    return table[0];
}

/// Empirical constant and decay slope of |E_{alpha,delta}| on a sector.
struct BoundReport {
    double c_empirical = 0.0;  ///< sup |value| * (1 + |z|) over the samples
    double slope = 0.0;        ///< log-log slope over the upper half of the modulus range
    std::size_t samples = 0;
    std::vector<double> magnitudes;  ///< sampled values or norms, in input order
};

inline BoundReport ml_sector_bound_check(const MLParams& p, double mu, std::span<const cplx> samples) {
    p.validate();
    if (samples.empty()) {
        throw domain_error("ml_sector_bound_check: empty sample list");
    }
    const double pi = std::numbers::pi;
    if (!(p.alpha < 2.0) || !(mu > pi * p.alpha / 2.0) || !(mu < std::min(pi, pi * p.alpha))) {
        throw domain_error("ml_sector_bound_check: need pi*alpha/2 < mu < min(pi, pi*alpha), alpha < 2");
    }
    BoundReport rep;
    rep.samples = samples.size();
    std::vector<double> logr, logv;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (cplx z : samples) {
        if (std::abs(principal_arg(z)) < mu * (1.0 - 1e-12) || z == cplx(0.0)) {
            throw domain_error("ml_sector_bound_check: sample outside mu <= |arg z| <= pi");
        }
        const double v = std::abs(ml_eval(p, z));
        rep.c_empirical = std::max(rep.c_empirical, v * (1.0 + std::abs(z)));
        logr.push_back(std::log(std::abs(z)));
        logv.push_back(std::log(v));
        lo = std::min(lo, logr.back());
        hi = std::max(hi, logr.back());
    }
    const double mid = 0.5 * (lo + hi);
    std::vector<double> fx, fy;
    for (std::size_t i = 0; i < logr.size(); ++i) {
        if (logr[i] >= mid) {
            fx.push_back(logr[i]);
            fy.push_back(logv[i]);
        }
    }
    rep.slope = fx.size() >= 2 ? detail::least_squares(fx, fy).slope : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

}  // namespace fracwave
