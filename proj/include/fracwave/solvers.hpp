#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fracwave/detail/fit.hpp"
#include "fracwave/errors.hpp"
#include "fracwave/fractional_time.hpp"
#include "fracwave/operator_model.hpp"
#include "fracwave/propagators.hpp"

namespace fracwave {

/// Right-hand side of c d^alpha w + A w = f.
struct ForcingSpec {
    enum class Kind { none, time_only, semilinear };

    Kind kind = Kind::none;
    std::function<State(double)> f_time;
    std::function<State(double, const State&)> f_state;
    /// declared Holder exponent in t; estimated from samples when absent
    std::optional<double> nu;
    /// Lipschitz constant of f(t, .) into the graph norm
    double lipschitz = 0.0;

    static ForcingSpec none() { return {}; }

    static ForcingSpec time_only(std::function<State(double)> f, std::optional<double> nu = std::nullopt) {
        ForcingSpec s;
        s.kind = Kind::time_only;
        s.f_time = std::move(f);
        s.nu = nu;
        return s;
    }

    static ForcingSpec semilinear(std::function<State(double, const State&)> f, double lipschitz,
                                  std::optional<double> nu = std::nullopt) {
        ForcingSpec s;
        s.kind = Kind::semilinear;
        s.f_state = std::move(f);
        s.lipschitz = lipschitz;
        s.nu = nu;
        return s;
    }
};

/// c d^alpha w + A w = f(t, w) on grid, w(0) = w0, w'(0) = w1.
struct WaveProblem {
    AlmostSectorialModel model;
    double alpha = 1.5;
    State w0;
    State w1;
    ForcingSpec forcing;
    TimeGrid grid;

    void validate() const {
        model.validate();
        if (!(alpha > 1.0 && alpha < 2.0)) {
            throw domain_error("WaveProblem: alpha must lie in (1, 2)");
        }
        model.check_state(w0);
        model.check_state(w1);
        grid.validate();
        if (grid.n_steps < 3) {
            throw domain_error("WaveProblem: need at least three time steps");
        }
        switch (forcing.kind) {
            case ForcingSpec::Kind::none:
                break;
            case ForcingSpec::Kind::time_only:
                if (!forcing.f_time) {
                    throw domain_error("WaveProblem: time forcing has no callable");
                }
                break;
            case ForcingSpec::Kind::semilinear:
                if (!forcing.f_state) {
                    throw domain_error("WaveProblem: semilinear forcing has no callable");
                }
                if (!(forcing.lipschitz > 0.0) || !std::isfinite(forcing.lipschitz)) {
                    throw domain_error("WaveProblem: Lipschitz constant must be positive");
                }
                break;
        }
        if (forcing.nu && !(*forcing.nu > 0.0 && *forcing.nu <= 1.0)) {
            throw domain_error("WaveProblem: Holder exponent must lie in (0, 1]");
        }
    }
};

enum class Theorem { homogeneous, linear, semilinear_mild, semilinear_classical };

inline const char* to_string(Theorem t) {
    switch (t) {
        case Theorem::homogeneous:
            return "homogeneous";
        case Theorem::linear:
            return "linear";
        case Theorem::semilinear_mild:
            return "semilinear-mild";
        case Theorem::semilinear_classical:
            return "semilinear-classical";
    }
    return "?";
}

struct RegimeReport {
    /// alpha < 1 / (1 + gamma)
    bool cond_alpha_upper = false;
    /// alpha > 1 / (-gamma)
    bool cond_alpha_lower = false;
    /// nu > alpha (1 + gamma)
    bool cond_holder = false;
    bool classical_ok = false;
    double nu = std::numeric_limits<double>::quiet_NaN();
};

/// Empirical Holder exponent of a sampled function.
struct HolderEstimate {
    double nu = 1.0;
    /// set when the samples do not vary; nu is then reported as 1
    bool degenerate = false;
};

/// Fits log max ||f(t) - f(s)|| against log |t - s| over geometric lag bins.
/// Taking the maximum per bin estimates the modulus of continuity rather than a
/// typical increment, so a singular point like t^nu at 0 sets the exponent.
/// Lags below the smallest node spacing are never probed; `lags` overrides the bin edges.
inline HolderEstimate hoelder_modulus(const Trajectory& f, std::span<const double> lags = {}) {
    f.validate();
    if (f.size() < 8) {
        throw domain_error("hoelder_modulus: need at least eight samples");
    }
    const std::size_t n = f.size();
    double scale = 0.0;
    for (const auto& v : f.values) {
        scale = std::max(scale, v.norm());
    }
    std::vector<double> edges(lags.begin(), lags.end());
    if (edges.empty()) {
        double h_min = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h_min = std::min(h_min, f.t[i + 1] - f.t[i]);
        }
        edges = log_space(h_min, f.t.back() - f.t.front(), 13);
    }
    if (edges.size() < 3 || !std::is_sorted(edges.begin(), edges.end()) || !(edges.front() > 0.0)) {
        throw domain_error("hoelder_modulus: need at least three increasing positive lags");
    }
    std::vector<double> peak(edges.size() - 1, 0.0);
    double largest = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double lag = f.t[j] - f.t[i];
            if (lag < edges.front() || lag > edges.back()) {
                continue;
            }
            auto it = std::upper_bound(edges.begin(), edges.end(), lag);
            const auto b = std::min(static_cast<std::size_t>(it - edges.begin()), edges.size() - 1) - 1;
            const double d = (f.values[j] - f.values[i]).norm();
            peak[b] = std::max(peak[b], d);
            largest = std::max(largest, d);
        }
    }
    if (largest <= 1e-14 * std::max(scale, 1e-300)) {
        return {1.0, true};
    }
    std::vector<double> lx, ly;
    for (std::size_t b = 0; b < peak.size(); ++b) {
        if (peak[b] > 0.0) {
            lx.push_back(0.5 * (std::log(edges[b]) + std::log(edges[b + 1])));
            ly.push_back(std::log(peak[b]));
        }
    }
    if (lx.size() < 2) {
        return {1.0, true};
    }
    return {std::clamp(detail::least_squares(lx, ly).slope, 0.0, 1.0), false};
}

namespace detail {

inline Trajectory sample_forcing(const WaveProblem& p, const std::function<State(double)>& f) {
    return Trajectory::sample(p.grid, p.model.dim(), [&](double t) {
        State v = f(t);
        p.model.check_state(v);
        return v;
    });
}

inline bool is_zero(const State& x) { return x.norm() == 0.0; }

}  // namespace detail

/// Evaluates exactly the inequalities the selected theorem assumes. For the
/// homogeneous problem the lower bound on alpha is needed only when w1 != 0;
/// the linear problem needs the homogeneous conditions only for nonzero data.
inline RegimeReport validate_regime(const WaveProblem& p, Theorem th) {
    const double g = p.model.profile.gamma;
    const double a = p.alpha;
    RegimeReport r;
    r.cond_alpha_upper = a * (1.0 + g) < 1.0;
    r.cond_alpha_lower = a * (-g) > 1.0;
    if (p.forcing.nu) {
        r.nu = *p.forcing.nu;
    } else if (p.forcing.kind == ForcingSpec::Kind::time_only && p.forcing.f_time) {
        r.nu = hoelder_modulus(detail::sample_forcing(p, p.forcing.f_time)).nu;
    } else if (p.forcing.kind == ForcingSpec::Kind::semilinear && p.forcing.f_state) {
        r.nu = hoelder_modulus(detail::sample_forcing(p, [&](double t) { return p.forcing.f_state(t, p.w0); })).nu;
    } else {
        r.nu = 1.0;
    }
    r.cond_holder = r.nu > a * (1.0 + g);
    const bool data = !(detail::is_zero(p.w0) && detail::is_zero(p.w1));
    switch (th) {
        case Theorem::homogeneous:
            r.classical_ok = r.cond_alpha_upper && (detail::is_zero(p.w1) || r.cond_alpha_lower);
            break;
        case Theorem::linear:
            r.classical_ok = r.cond_holder && (!data || (r.cond_alpha_upper && r.cond_alpha_lower));
            break;
        case Theorem::semilinear_mild:
            r.classical_ok = r.cond_alpha_upper;
            break;
        case Theorem::semilinear_classical:
            r.classical_ok = r.cond_alpha_upper && r.cond_alpha_lower && r.cond_holder;
            break;
    }
    return r;
}

struct SolveOptions {
    /// the block oracle is exact and cheap; gamma-path costs a contour per node
    Representation representation = Representation::oracle;
    /// run outside the theorem's regime; the result is then marked experimental
    bool allow_experimental = false;
};

struct Solution {
    Trajectory w;
    RegimeReport regime;
    bool experimental = false;
};

namespace detail {

inline RegimeReport admit(const WaveProblem& p, Theorem th, const SolveOptions& o, bool& experimental) {
    p.validate();
    const RegimeReport r = validate_regime(p, th);
    experimental = !r.classical_ok;
    if (experimental && !o.allow_experimental) {
        throw regime_violation(std::string("solve: the ") + to_string(th) +
                               " regime does not hold (pass allow_experimental to run anyway)");
    }
    return r;
}

inline PropagatorHandle handle(const WaveProblem& p, const SolveOptions& o) {
    return make_propagator(p.model, p.alpha, 1.0, o.representation == Representation::hankel_path
                                                      ? Representation::hankel_path
                                                      : Representation::gamma_path);
}

// E_alpha(-t^alpha A) w0 + t E_{alpha,2}(-t^alpha A) w1 at every node.
inline Trajectory homogeneous_part(const WaveProblem& p, const SolveOptions& o) {
    const PropagatorHandle h = handle(p, o);
    Trajectory w(p.grid, p.model.dim());
    w.values[0] = p.w0;
    const bool has_w0 = !is_zero(p.w0), has_w1 = !is_zero(p.w1);
    const Representation rep2 =
        o.representation == Representation::hankel_path ? Representation::gamma_path : o.representation;
    for (std::size_t i = 1; i < w.size(); ++i) {
        const double t = w.t[i];
        if (has_w0) {
            w.values[i] += ml_operator(h, t, 1.0, 1.0, o.representation).apply(p.w0);
        }
        if (has_w1) {
            w.values[i] += ml_operator(h, t, 2.0, t, rep2).apply(p.w1);
        }
    }
    return w;
}

// Snapshots Gamma(alpha) E_{alpha,alpha}(-t_m^alpha A): with the kernel g_alpha they give
// g_{alpha-1} * E_alpha = t^{alpha-1} E_{alpha,alpha}.
struct DuhamelOperator {
    std::vector<BlockOperator> snaps;
    std::vector<PanelWeights> weights;
    double alpha = 1.5;

    DuhamelOperator(const WaveProblem& p, const SolveOptions& o) : alpha(p.alpha) {
        const PropagatorHandle h = handle(p, o);
        const Representation rep =
            o.representation == Representation::hankel_path ? Representation::gamma_path : o.representation;
        const auto t = p.grid.nodes();
        snaps.resize(t.size());
        const double ga = std::tgamma(alpha);
        snaps[0] = function_of(p.model, [](cplx) { return FnValue{1.0, 0.0}; });
        for (std::size_t m = 1; m < t.size(); ++m) {
            snaps[m] = ml_operator(h, t[m], alpha, ga, rep);
        }
        weights = convolution_weights(t, alpha);
    }

    [[nodiscard]] Trajectory operator()(const Trajectory& f) const {
        const SnapshotOp op = [this](std::size_t m, const State& y) { return snaps[m].apply(y); };
        Trajectory out = f;
        for (std::size_t i = 0; i < f.size(); ++i) {
            out.values[i] = convolve_at(weights, op, f, i);
        }
        return out;
    }
};

inline double graph_norm_sup(const AlmostSectorialModel& m, const Trajectory& a, const Trajectory& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s = std::max(s, graph_norm(m, a.values[i] - b.values[i]));
    }
    return s;
}

}  // namespace detail

/// w(t) = E_alpha(-t^alpha A) w0 + t E_{alpha,2}(-t^alpha A) w1; w(0) = w0 as the limit.
inline Solution solve_homogeneous(const WaveProblem& p, const SolveOptions& o = {}) {
    if (p.forcing.kind != ForcingSpec::Kind::none) {
        throw domain_error("solve_homogeneous: the problem has a forcing term");
    }
    Solution s;
    s.regime = detail::admit(p, Theorem::homogeneous, o, s.experimental);
    s.w = detail::homogeneous_part(p, o);
    return s;
}

/// Homogeneous part plus (g_{alpha-1} * E_alpha * f)(t) by product integration.
inline Solution solve_linear(const WaveProblem& p, const SolveOptions& o = {}) {
    if (p.forcing.kind == ForcingSpec::Kind::semilinear) {
        throw domain_error("solve_linear: the forcing depends on the state");
    }
    Solution s;
    s.regime = detail::admit(p, Theorem::linear, o, s.experimental);
    s.w = detail::homogeneous_part(p, o);
    if (p.forcing.kind == ForcingSpec::Kind::time_only) {
        const Trajectory f = detail::sample_forcing(p, p.forcing.f_time);
        const Trajectory d = detail::DuhamelOperator(p, o)(f);
        for (std::size_t i = 0; i < s.w.size(); ++i) {
            s.w.values[i] += d.values[i];
        }
    }
    return s;
}

struct PicardOptions {
    double tol = 1e-10;
    int max_iter = 50;
    enum class Init { initial_value, zero } init = Init::initial_value;
};

struct SemilinearResult {
    Solution solution;
    int iterations = 0;
    /// sup over nodes of the graph-norm increment, one entry per iteration
    std::vector<double> history;
};

/// Picard iteration w_{k+1} = H w_k of the mild formulation in the sup-node graph norm.
/// Throws nonconvergence carrying the increment history after max_iter sweeps.
inline SemilinearResult solve_semilinear(const WaveProblem& p, const PicardOptions& po = {},
                                         const SolveOptions& o = {}) {
    if (p.forcing.kind != ForcingSpec::Kind::semilinear) {
        throw domain_error("solve_semilinear: the problem needs a semilinear forcing");
    }
    if (!(po.tol > 0.0) || po.max_iter < 1) {
        throw domain_error("solve_semilinear: tol must be positive and max_iter at least 1");
    }
    SemilinearResult r;
    r.solution.regime = detail::admit(p, Theorem::semilinear_mild, o, r.solution.experimental);
    const Trajectory h = detail::homogeneous_part(p, o);
    const detail::DuhamelOperator duhamel(p, o);
    Trajectory w(p.grid, p.model.dim());
    if (po.init == PicardOptions::Init::initial_value) {
        for (auto& v : w.values) {
            v = p.w0;
        }
    }
    for (int k = 1; k <= po.max_iter; ++k) {
        Trajectory f = w;
        for (std::size_t i = 0; i < f.size(); ++i) {
            f.values[i] = p.forcing.f_state(f.t[i], w.values[i]);
            p.model.check_state(f.values[i]);
        }
        Trajectory next = duhamel(f);
        for (std::size_t i = 0; i < next.size(); ++i) {
            next.values[i] += h.values[i];
        }
        const double inc = detail::graph_norm_sup(p.model, next, w);
        if (!std::isfinite(inc)) {
            throw nonconvergence("solve_semilinear: Picard iterate is not finite", r.history);
        }
        r.history.push_back(inc);
        w = std::move(next);
        r.iterations = k;
        if (inc <= po.tol) {
            r.solution.w = std::move(w);
            return r;
        }
    }
    throw nonconvergence("solve_semilinear: no convergence in " + std::to_string(po.max_iter) + " iterations",
                         r.history);
}

/// L * int_0^T || Gamma(alpha) g_alpha(s) E_{alpha,alpha}(-s^alpha A) ||_{X -> D(A)} ds, the
/// one-sweep Lipschitz factor of the Picard map in the sup-node graph norm.
inline double picard_contraction_bound(const WaveProblem& p) {
    p.validate();
    if (p.forcing.kind != ForcingSpec::Kind::semilinear) {
        throw domain_error("picard_contraction_bound: the problem needs a semilinear forcing");
    }
    const PropagatorHandle h = make_propagator(p.model, p.alpha, p.alpha, Representation::oracle);
    const BlockOperator a = as_operator(p.model);
    const auto& gl = detail::gauss_legendre(16);
    const double T = p.grid.T;
    double total = 0.0;
    // graded panels resolve the s^{alpha-1} behaviour at 0
    double lo = 0.0;
    for (int k = 40; k >= 0; --k) {
        const double hi = T * std::pow(0.5, k);
        const double half = 0.5 * (hi - lo);
        for (std::size_t j = 0; j < gl.x.size(); ++j) {
            const double s = lo + half * (1.0 + gl.x[j]);
            const BlockOperator e = detail::ml_operator(h, s, p.alpha, std::pow(s, p.alpha - 1.0), Representation::oracle);
            total += half * gl.w[j] * (e.norm() + compose(a, e).norm());
        }
        lo = hi;
    }
    return p.forcing.lipschitz * total;
}

struct ResidualReport {
    std::vector<double> t;
    /// ||c d^alpha w + A w - f|| / (||A w|| + ||f|| + eps) per node; zero at unchecked nodes
    std::vector<double> residual;
    double max_interior = 0.0;
    double w0_error = 0.0;
    /// ||w'(0) - w1|| from a one-sided second-order difference on the first three nodes
    double w1_error = 0.0;
};

/// Residual of the equation at the interior nodes and the two initial conditions.
/// Interior means 2 <= i < n and t_i >= interior_from * T: on a graded grid the first
/// few nodes are self-similar, so their start-up error does not shrink under refinement.
inline ResidualReport verify_classical(const WaveProblem& p, const Trajectory& w, double interior_from = 1e-3) {
    p.validate();
    w.validate();
    const auto t = p.grid.nodes();
    if (w.size() != t.size() || w.dim() != p.model.dim()) {
        throw domain_error("verify_classical: trajectory does not live on the problem grid");
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (std::abs(w.t[i] - t[i]) > 1e-12 * p.grid.T) {
            throw domain_error("verify_classical: trajectory does not live on the problem grid");
        }
    }
    const Trajectory d = caputo_derivative(p.alpha, w, p.w1);
    ResidualReport r;
    r.t = w.t;
    r.residual.assign(w.size(), 0.0);
    constexpr double eps = 1e-14;
    for (std::size_t i = 2; i + 1 < w.size(); ++i) {
        if (t[i] < interior_from * p.grid.T) {
            continue;
        }
        State f = State::Zero(p.model.dim());
        if (p.forcing.kind == ForcingSpec::Kind::time_only) {
            f = p.forcing.f_time(t[i]);
        } else if (p.forcing.kind == ForcingSpec::Kind::semilinear) {
            f = p.forcing.f_state(t[i], w.values[i]);
        }
        const State aw = fracwave::apply(p.model, w.values[i]);
        r.residual[i] = (d.values[i] + aw - f).norm() / (aw.norm() + f.norm() + eps);
        r.max_interior = std::max(r.max_interior, r.residual[i]);
    }
    r.w0_error = (w.values[0] - p.w0).norm();
    const double h1 = t[1], h2 = t[2] - t[1];
    const State dw = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * w.values[0] + (h1 + h2) / (h1 * h2) * w.values[1] -
                     h1 / (h2 * (h1 + h2)) * w.values[2];
    r.w1_error = (dw - p.w1).norm();
    return r;
}

/// `t,residual` rows.
inline void write_residual_csv(std::ostream& os, const ResidualReport& r) {
    os << "t,residual\n" << std::setprecision(17);
    for (std::size_t i = 0; i < r.t.size(); ++i) {
        os << r.t[i] << ',' << r.residual[i] << '\n';
    }
}

}  // namespace fracwave
