#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracwave/detail/fit.hpp"
#include "fracwave/errors.hpp"
#include "fracwave/fractional_time.hpp"
#include "fracwave/special_functions.hpp"

namespace fracwave {

/// Geometry of an almost sectorial operator: spectrum in S_omega and
/// ||(z-A)^{-1}|| <= c_mu |z|^gamma for z outside S_mu. theta is the ray
/// angle used by contour integrals.
struct SectorProfile {
    double omega = 0.0;
    double gamma = -0.5;
    double mu = 0.0;
    double theta = 0.0;
    double c_mu = 1.0;

    void validate() const {
        if (!(omega >= 0.0 && omega < std::numbers::pi)) {
            throw domain_error("SectorProfile: omega must lie in [0, pi)");
        }
        if (!(gamma > -1.0 && gamma < 0.0)) {
            throw domain_error("SectorProfile: gamma must lie in (-1, 0)");
        }
        if (!(omega < theta && theta < mu && mu < std::numbers::pi)) {
            throw domain_error("SectorProfile: need omega < theta < mu < pi");
        }
        if (!(c_mu > 0.0) || !std::isfinite(c_mu)) {
            throw domain_error("SectorProfile: c_mu must be positive");
        }
    }

    /// Upper limit pi - alpha pi / 2 for theta and mu.
    static double angle_limit(double alpha) { return std::numbers::pi * (1.0 - 0.5 * alpha); }

    /// Checks omega < theta < mu < pi - alpha pi / 2.
    [[nodiscard]] bool admissible(double alpha) const {
        return omega < theta && theta < mu && mu < angle_limit(alpha);
    }

    /// theta and mu placed at the midpoints of (omega, limit) and (theta, limit).
    [[nodiscard]] SectorProfile fitted_to(double alpha) const {
        const double lim = angle_limit(alpha);
        if (!(omega < lim)) {
            throw regime_violation("SectorProfile: omega >= pi - alpha pi / 2 leaves no admissible contour");
        }
        SectorProfile p = *this;
        p.theta = 0.5 * (omega + lim);
        p.mu = 0.5 * (p.theta + lim);
        return p;
    }

    /// Default angles spread evenly over (omega, pi).
    static SectorProfile spread(double omega, double gamma) {
        SectorProfile p;
        p.omega = omega;
        p.gamma = gamma;
        p.theta = omega + (std::numbers::pi - omega) / 3.0;
        p.mu = omega + 2.0 * (std::numbers::pi - omega) / 3.0;
        return p;
    }
};

/// Upper triangular block [[lambda, coupling], [0, lambda]].
struct JordanBlock2 {
    cplx lambda;
    cplx coupling{0.0, 0.0};
};

/// Block diagonal operator on C^{2k}; block j acts on coordinates 2j, 2j+1.
struct AlmostSectorialModel {
    std::vector<JordanBlock2> blocks;
    SectorProfile profile;

    [[nodiscard]] Eigen::Index dim() const { return 2 * static_cast<Eigen::Index>(blocks.size()); }

    void validate() const {
        if (blocks.empty()) {
            throw domain_error("model: no blocks");
        }
        profile.validate();
        for (const auto& b : blocks) {
            if (!std::isfinite(b.lambda.real()) || !std::isfinite(b.lambda.imag()) ||
                !std::isfinite(b.coupling.real()) || !std::isfinite(b.coupling.imag())) {
                throw domain_error("model: non-finite block entry");
            }
            if (b.lambda == cplx(0.0, 0.0)) {
                throw domain_error("model: zero eigenvalue, A must be injective");
            }
            if (std::abs(principal_arg(b.lambda)) > profile.omega * (1.0 + 1e-12) + 1e-15) {
                throw domain_error("model: eigenvalue outside the spectral sector");
            }
        }
    }

    void check_state(const State& x) const {
        if (x.size() != dim()) {
            throw domain_error("model: state vector has dimension " + std::to_string(x.size()) + ", expected " +
                               std::to_string(dim()));
        }
    }

    [[nodiscard]] double min_modulus() const {
        double r = std::numeric_limits<double>::infinity();
        for (const auto& b : blocks) {
            r = std::min(r, std::abs(b.lambda));
        }
        return r;
    }

    [[nodiscard]] double max_modulus() const {
        double r = 0.0;
        for (const auto& b : blocks) {
            r = std::max(r, std::abs(b.lambda));
        }
        return r;
    }
};

/// Ladder of Jordan blocks with moduli rho_k = rho_min 10^(k / blocks_per_decade)
/// on the rays arg = +omega, -omega (alternating) and coupling
/// kappa rho_k^(2+gamma).
///
/// The off-diagonal part of the block resolvent, kappa rho^(2+gamma)/|z-lambda|^2,
/// beats the diagonal part 1/|z-lambda| only where kappa rho^(1+gamma) >> 1.
/// The default kappa = 10 rho_min^-(1+gamma) makes the |z|^gamma growth visible
/// from the bottom of the ladder. Pass coupling_scale > 0 to fix kappa.
inline AlmostSectorialModel build_ladder_model(double gamma, double omega, double rho_min, double rho_max,
                                               int blocks_per_decade, double coupling_scale = 0.0) {
    if (!(gamma > -1.0 && gamma < 0.0)) {
        throw domain_error("build_ladder_model: gamma must lie in (-1, 0)");
    }
    if (!(omega >= 0.0 && omega < std::numbers::pi)) {
        throw domain_error("build_ladder_model: omega must lie in [0, pi)");
    }
    if (!(rho_min > 0.0 && rho_max > rho_min) || !std::isfinite(rho_max)) {
        throw domain_error("build_ladder_model: need 0 < rho_min < rho_max");
    }
    if (blocks_per_decade < 1) {
        throw domain_error("build_ladder_model: blocks_per_decade must be positive");
    }
    if (!(coupling_scale >= 0.0) || !std::isfinite(coupling_scale)) {
        throw domain_error("build_ladder_model: coupling_scale must be non-negative");
    }
    const double kappa = coupling_scale > 0.0 ? coupling_scale : 10.0 * std::pow(rho_min, -(1.0 + gamma));
    const double decades = std::log10(rho_max / rho_min);
    const int steps = static_cast<int>(std::lround(decades * blocks_per_decade));
    AlmostSectorialModel m;
    m.profile = SectorProfile::spread(omega, gamma);
    for (int k = 0; k <= steps; ++k) {
        const double rho = rho_min * std::pow(rho_max / rho_min, steps == 0 ? 0.0 : static_cast<double>(k) / steps);
        const double sign = k % 2 == 0 ? 1.0 : -1.0;
        m.blocks.push_back({std::polar(rho, sign * omega), cplx(kappa * std::pow(rho, 2.0 + gamma), 0.0)});
    }
    m.validate();
    return m;
}

/// Diagonal model with the given positive eigenvalues (one 2x2 block each,
/// coupling zero).
inline AlmostSectorialModel diagonal_model(const std::vector<cplx>& lambdas, double gamma = -0.5) {
    AlmostSectorialModel m;
    double omega = 0.0;
    for (const cplx l : lambdas) {
        omega = std::max(omega, std::abs(principal_arg(l)));
        m.blocks.push_back({l, cplx(0.0, 0.0)});
    }
    m.profile = SectorProfile::spread(omega, gamma);
    m.validate();
    return m;
}

/// One block [[a, 0], [0, a]] with a > 0.
inline AlmostSectorialModel scalar_model(double a, double gamma = -0.5) {
    if (!(a > 0.0) || !std::isfinite(a)) {
        throw domain_error("scalar_model: a must be positive");
    }
    return diagonal_model({cplx(a, 0.0)}, gamma);
}

/// Ax.
inline State apply(const AlmostSectorialModel& m, const State& x) {
    m.check_state(x);
    State y(x.size());
    for (std::size_t j = 0; j < m.blocks.size(); ++j) {
        const auto i = static_cast<Eigen::Index>(2 * j);
        const auto& b = m.blocks[j];
        y[i] = b.lambda * x[i] + b.coupling * x[i + 1];
        y[i + 1] = b.lambda * x[i + 1];
    }
    return y;
}

namespace detail {

inline void check_collision(const AlmostSectorialModel& m, cplx z) {
    for (const auto& b : m.blocks) {
        if (std::abs(z - b.lambda) < 1e-14 * std::abs(z) || z == b.lambda) {
            std::ostringstream msg;
            msg << std::setprecision(17) << "resolvent: z = " << z << " lies on the spectrum (lambda = " << b.lambda
                << ")";
            throw spectral_collision(msg.str());
        }
    }
}

}  // namespace detail

/// Largest singular value of [[a, b], [0, a]].
inline double block_norm(cplx a, cplx b) {
    const double nb = std::abs(b);
    const double na = std::abs(a);
    return 0.5 * (nb + std::sqrt(nb * nb + 4.0 * na * na));
}

/// Block diagonal operator given by one upper triangular 2x2 block per model
/// block, [[diag, upper], [0, diag]]. Functions of the model take this form.
struct BlockOperator {
    std::vector<cplx> diag;
    std::vector<cplx> upper;

    [[nodiscard]] State apply(const State& x) const {
        if (x.size() != 2 * static_cast<Eigen::Index>(diag.size())) {
            throw domain_error("BlockOperator: state vector has the wrong dimension");
        }
        State y(x.size());
        for (std::size_t j = 0; j < diag.size(); ++j) {
            const auto i = static_cast<Eigen::Index>(2 * j);
            y[i] = diag[j] * x[i] + upper[j] * x[i + 1];
            y[i + 1] = diag[j] * x[i + 1];
        }
        return y;
    }

    /// Spectral norm.
    [[nodiscard]] double norm() const {
        double r = 0.0;
        for (std::size_t j = 0; j < diag.size(); ++j) {
            r = std::max(r, block_norm(diag[j], upper[j]));
        }
        return r;
    }

    BlockOperator& operator*=(cplx c) {
        for (std::size_t j = 0; j < diag.size(); ++j) {
            diag[j] *= c;
            upper[j] *= c;
        }
        return *this;
    }
};

/// Value and first derivative of a scalar function at a point.
struct FnValue {
    cplx f;
    cplx df;
};

using SpectralFn = std::function<FnValue(cplx)>;

/// f(A) block by block: f(J) = [[f(lambda), s f'(lambda)], [0, f(lambda)]].
inline BlockOperator function_of(const AlmostSectorialModel& m, const SpectralFn& fn) {
    BlockOperator op;
    op.diag.reserve(m.blocks.size());
    op.upper.reserve(m.blocks.size());
    for (const auto& b : m.blocks) {
        const FnValue v = fn(b.lambda);
        op.diag.push_back(v.f);
        op.upper.push_back(b.coupling == cplx(0.0, 0.0) ? cplx(0.0, 0.0) : b.coupling * v.df);
    }
    return op;
}

/// Product of two block operators (they commute).
inline BlockOperator compose(const BlockOperator& p, const BlockOperator& q) {
    BlockOperator r;
    r.diag.resize(p.diag.size());
    r.upper.resize(p.diag.size());
    for (std::size_t j = 0; j < p.diag.size(); ++j) {
        r.diag[j] = p.diag[j] * q.diag[j];
        r.upper[j] = p.diag[j] * q.upper[j] + p.upper[j] * q.diag[j];
    }
    return r;
}

/// A as a block operator.
inline BlockOperator as_operator(const AlmostSectorialModel& m) {
    return function_of(m, [](cplx z) { return FnValue{z, 1.0}; });
}

/// (z - A)^{-1} as a block operator.
inline BlockOperator resolvent(const AlmostSectorialModel& m, cplx z) {
    detail::check_collision(m, z);
    return function_of(m, [z](cplx l) {
        const cplx r = 1.0 / (z - l);
        return FnValue{r, r * r};
    });
}

/// (z - A)^{-1} x.
inline State resolvent_apply(const AlmostSectorialModel& m, cplx z, const State& x) {
    m.check_state(x);
    return resolvent(m, z).apply(x);
}

/// ||(z - A)^{-1}||.
inline double resolvent_norm(const AlmostSectorialModel& m, cplx z) { return resolvent(m, z).norm(); }

/// ||x|| + ||Ax||.
inline double graph_norm(const AlmostSectorialModel& m, const State& x) { return x.norm() + fracwave::apply(m, x).norm(); }

/// Blockwise principal power A^beta; the profile becomes
/// (beta omega, -1 + (gamma + 1) / beta).
inline AlmostSectorialModel power(const AlmostSectorialModel& m, double beta) {
    const double g = m.profile.gamma;
    const double upper = m.profile.omega > 0.0 ? std::numbers::pi / m.profile.omega
                                               : std::numeric_limits<double>::infinity();
    if (!(beta > 1.0 + g && beta < upper)) {
        throw domain_error("power: beta must lie in (1 + gamma, pi / omega)");
    }
    AlmostSectorialModel r;
    for (const auto& b : m.blocks) {
        const cplx lb = std::pow(b.lambda, beta);
        r.blocks.push_back({lb, b.coupling * beta * lb / b.lambda});
    }
    r.profile = SectorProfile::spread(beta * m.profile.omega, -1.0 + (g + 1.0) / beta);
    r.validate();
    return r;
}

/// Samples ||(z - A)^{-1}|| along the ray arg z = arg_z at the given moduli,
/// fits the log-log slope and stores max ||R(z)|| |z|^{-gamma} as c_mu.
/// c_empirical here is that constant, not the (1 + |z|) form used for E.
inline BoundReport verify_resolvent_bound(AlmostSectorialModel& m, double arg_z, std::span<const double> moduli) {
    if (moduli.empty()) {
        throw domain_error("verify_resolvent_bound: no moduli given");
    }
    if (!(std::abs(arg_z) > m.profile.mu && std::abs(arg_z) <= std::numbers::pi)) {
        throw domain_error("verify_resolvent_bound: ray must lie outside the sector S_mu");
    }
    BoundReport rep;
    std::vector<double> lx, ly;
    for (const double r : moduli) {
        if (!(r > 0.0)) {
            throw domain_error("verify_resolvent_bound: moduli must be positive");
        }
        const double n = resolvent_norm(m, std::polar(r, arg_z));
        rep.magnitudes.push_back(n);
        lx.push_back(std::log(r));
        ly.push_back(std::log(n));
        rep.c_empirical = std::max(rep.c_empirical, n * std::pow(r, -m.profile.gamma));
    }
    rep.samples = rep.magnitudes.size();
    rep.slope = lx.size() >= 2 ? detail::least_squares(lx, ly).slope : std::numeric_limits<double>::quiet_NaN();
    m.profile.c_mu = rep.c_empirical;
    return rep;
}

/// Geometric sample of n moduli between lo and hi.
inline std::vector<double> log_space(double lo, double hi, int n) {
    std::vector<double> r(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        r[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, n == 1 ? 0.0 : static_cast<double>(i) / (n - 1));
    }
    return r;
}

/// Plain text model file: profile lines `omega v`, `gamma v`, `mu v`,
/// `theta v`, `c_mu v`, then one `block re im s_re [s_im]` line per block.
inline void write_model(std::ostream& os, const AlmostSectorialModel& m) {
    os << std::setprecision(17);
    os << "omega " << m.profile.omega << '\n'
       << "gamma " << m.profile.gamma << '\n'
       << "mu " << m.profile.mu << '\n'
       << "theta " << m.profile.theta << '\n'
       << "c_mu " << m.profile.c_mu << '\n';
    for (const auto& b : m.blocks) {
        os << "block " << b.lambda.real() << ' ' << b.lambda.imag() << ' ' << b.coupling.real() << ' '
           << b.coupling.imag() << '\n';
    }
}

inline AlmostSectorialModel read_model(std::istream& is) {
    AlmostSectorialModel m;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream in(line);
        std::string key;
        if (!(in >> key)) {
            continue;
        }
        std::vector<double> v;
        std::string tok;
        while (in >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tok, &used));
                if (used != tok.size()) {
                    throw std::invalid_argument(tok);
                }
            } catch (const std::exception&) {
                throw domain_error("model file line " + std::to_string(lineno) + ": bad number '" + tok + "'");
            }
        }
        auto want = [&](std::size_t n) {
            if (v.size() != n) {
                throw domain_error("model file line " + std::to_string(lineno) + ": '" + key + "' expects " +
                                   std::to_string(n) + " value(s)");
            }
        };
        if (key == "block") {
            if (v.size() != 3 && v.size() != 4) {
                throw domain_error("model file line " + std::to_string(lineno) + ": block expects re im s_re [s_im]");
            }
            m.blocks.push_back({cplx(v[0], v[1]), cplx(v[2], v.size() == 4 ? v[3] : 0.0)});
        } else if (key == "omega") {
            want(1);
            m.profile.omega = v[0];
        } else if (key == "gamma") {
            want(1);
            m.profile.gamma = v[0];
        } else if (key == "mu") {
            want(1);
            m.profile.mu = v[0];
        } else if (key == "theta") {
            want(1);
            m.profile.theta = v[0];
        } else if (key == "c_mu") {
            want(1);
            m.profile.c_mu = v[0];
        } else {
            throw domain_error("model file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    m.validate();
    return m;
}

}  // namespace fracwave
