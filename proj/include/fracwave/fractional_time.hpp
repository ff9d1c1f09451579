#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fracwave/errors.hpp"
#include "fracwave/special_functions.hpp"

namespace fracwave {

using State = Eigen::VectorXcd;

/// Graded grid t_i = T (i/n)^grading on [0, T].
struct TimeGrid {
    double T = 1.0;
    int n_steps = 64;
    double grading = 2.0;

    void validate() const {
        if (!(T > 0.0) || !std::isfinite(T)) {
            throw domain_error("TimeGrid: horizon must be positive");
        }
        if (n_steps < 1) {
            throw domain_error("TimeGrid: need at least one step");
        }
        if (!(grading >= 1.0) || !std::isfinite(grading)) {
            throw domain_error("TimeGrid: grading must be >= 1");
        }
    }

    [[nodiscard]] std::vector<double> nodes() const {
        validate();
        std::vector<double> t(static_cast<std::size_t>(n_steps) + 1);
        for (int i = 0; i <= n_steps; ++i) {
            t[static_cast<std::size_t>(i)] = T * std::pow(static_cast<double>(i) / n_steps, grading);
        }
        t.back() = T;
        return t;
    }
};

/// g_beta(t) = t^(beta-1) / Gamma(beta).
struct Kernel {
    double beta = 1.0;

    void validate() const {
        if (!(beta > 0.0) || !std::isfinite(beta)) {
            throw domain_error("Kernel: beta must be positive");
        }
    }

    [[nodiscard]] double operator()(double t) const { return std::pow(t, beta - 1.0) * reciprocal_gamma(beta); }
};

/// Node values of a vector-valued function of time.
struct Trajectory {
    TimeGrid grid;
    std::vector<double> t;
    std::vector<State> values;

    Trajectory() = default;

    Trajectory(const TimeGrid& g, Eigen::Index dim) : grid(g), t(g.nodes()) {
        values.assign(t.size(), State::Zero(dim));
    }

    template <class F>
    static Trajectory sample(const TimeGrid& g, Eigen::Index dim, F&& f) {
        Trajectory tr(g, dim);
        for (std::size_t i = 0; i < tr.t.size(); ++i) {
            tr.values[i] = f(tr.t[i]);
        }
        return tr;
    }

    [[nodiscard]] std::size_t size() const { return values.size(); }
    [[nodiscard]] Eigen::Index dim() const { return values.empty() ? 0 : values.front().size(); }

    void validate() const {
        if (values.empty() || values.size() != t.size()) {
            throw domain_error("Trajectory: node count does not match the grid");
        }
        for (const auto& v : values) {
            if (v.size() != values.front().size()) {
                throw domain_error("Trajectory: state dimension varies between nodes");
            }
        }
    }
};

namespace detail {

// (1+x)^c - 1 - c x without cancellation for small x.
inline double binomial_tail2(double c, double x) {
    if (x > 0.25) {
        return std::expm1(c * std::log1p(x)) - c * x;
    }
    double term = 0.5 * c * (c - 1.0) * x * x;
    double sum = term;
    for (int k = 3; k < 200 && term != 0.0; ++k) {
        term *= (c - k + 1.0) / k * x;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) {
            break;
        }
    }
    return sum;
}

struct PanelWeights {
    double at_a;
    double at_b;
};

// Weights of the endpoint values for the integral of g_beta(tau) times the
// linear interpolant over [a, a+h], a >= 0.
inline PanelWeights panel_weights(double a, double h, double beta) {
    const double rg = reciprocal_gamma(beta);
    const double bb = beta * (beta + 1.0);
    double i0 = 0.0;
    double p = 0.0;
    if (a == 0.0) {
        i0 = std::pow(h, beta) / beta;
        p = std::pow(h, beta + 1.0) / bb;
    } else {
        const double x = h / a;
        const double ab = std::pow(a, beta);
        i0 = ab * std::expm1(beta * std::log1p(x)) / beta;
        p = ab * a * binomial_tail2(beta + 1.0, x) / bb;
    }
    const double at_a = p / h;
    return {at_a * rg, (i0 - at_a) * rg};
}

}  // namespace detail

/// Weights w with (g_beta * u)(t_i) ~ sum_k w_k u(t_k), exact for u piecewise
/// linear on the nodes t_0..t_i.
inline std::vector<double> rl_weights(const std::vector<double>& t, std::size_t i, double beta) {
    std::vector<double> w(i + 1, 0.0);
    for (std::size_t j = 0; j < i; ++j) {
        const double a = t[i] - t[j + 1];
        const double h = t[j + 1] - t[j];
        const auto pw = detail::panel_weights(a, h, beta);
        w[j + 1] += pw.at_a;
        w[j] += pw.at_b;
    }
    return w;
}

/// Riemann-Liouville integral (g_beta * u)(t_i) at every node.
inline Trajectory rl_integral(const Kernel& k, const Trajectory& u) {
    k.validate();
    u.validate();
    Trajectory out = u;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const auto w = rl_weights(u.t, i, k.beta);
        State acc = State::Zero(u.dim());
        for (std::size_t j = 0; j <= i; ++j) {
            acc += w[j] * u.values[j];
        }
        out.values[i] = acc;
    }
    return out;
}

namespace detail {

// Fornberg's recursion: weights of the m-th derivative at x0 from the nodes x.
inline std::vector<double> fd_weights(double x0, const std::vector<double>& x, int m) {
    const int n = static_cast<int>(x.size());
    std::vector<std::vector<double>> c(static_cast<std::size_t>(n),
                                       std::vector<double>(static_cast<std::size_t>(m) + 1, 0.0));
    double c1 = 1.0;
    double c4 = x[0] - x0;
    c[0][0] = 1.0;
    for (int i = 1; i < n; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[static_cast<std::size_t>(i)] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)];
            c2 *= c3;
            auto& ci = c[static_cast<std::size_t>(i)];
            auto& cj = c[static_cast<std::size_t>(j)];
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) {
                    ci[static_cast<std::size_t>(k)] =
                        c1 * (k * c[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(k - 1)] -
                              c5 * c[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(k)]) /
                        c2;
                }
                ci[0] = -c1 * c5 * c[static_cast<std::size_t>(i - 1)][0] / c2;
            }
            for (int k = mn; k >= 1; --k) {
                cj[static_cast<std::size_t>(k)] =
                    (c4 * cj[static_cast<std::size_t>(k)] - k * cj[static_cast<std::size_t>(k - 1)]) / c3;
            }
            cj[0] = c4 * cj[0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        w[static_cast<std::size_t>(i)] = c[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
    }
    return w;
}

}  // namespace detail

/// Caputo derivative of order alpha in (1,2), in the regularized form
/// d^2/dt^2 [g_{2-alpha} * (w - w(0) - w1 t)]. Interior nodes use three-point
/// second differences; the two end nodes use one-sided four-point stencils and
/// are not meant for residual checks.
inline Trajectory caputo_derivative(double alpha, const Trajectory& w, const State& w1) {
    if (!(alpha > 1.0 && alpha < 2.0)) {
        throw domain_error("caputo_derivative: alpha must lie in (1, 2)");
    }
    w.validate();
    if (w.size() < 4) {
        throw domain_error("caputo_derivative: need at least four nodes");
    }
    if (w1.size() != w.dim()) {
        throw domain_error("caputo_derivative: initial velocity has the wrong dimension");
    }
    Trajectory shifted = w;
    for (std::size_t i = 0; i < w.size(); ++i) {
        shifted.values[i] = w.values[i] - w.values[0] - w.t[i] * w1;
    }
    const Trajectory v = rl_integral(Kernel{2.0 - alpha}, shifted);

    Trajectory out = w;
    const std::size_t n = w.size() - 1;
    auto stencil = [&](std::size_t at, std::size_t first, std::size_t count) {
        std::vector<double> x(w.t.begin() + static_cast<std::ptrdiff_t>(first),
                              w.t.begin() + static_cast<std::ptrdiff_t>(first + count));
        const auto c = detail::fd_weights(w.t[at], x, 2);
        State acc = State::Zero(w.dim());
        for (std::size_t k = 0; k < count; ++k) {
            acc += c[k] * v.values[first + k];
        }
        out.values[at] = acc;
    };
    stencil(0, 0, 4);
    for (std::size_t i = 1; i < n; ++i) {
        stencil(i, i - 1, 3);
    }
    stencil(n, n - 3, 4);
    return out;
}

/// Operator snapshot: op(m, y) applies the m-th snapshot phi(t_m) to y.
using SnapshotOp = std::function<State(std::size_t, const State&)>;

namespace detail {

inline State interpolate(const Trajectory& f, double s) {
    const auto& t = f.t;
    if (s <= t.front()) {
        return f.values.front();
    }
    if (s >= t.back()) {
        return f.values.back();
    }
    const auto it = std::upper_bound(t.begin(), t.end(), s);
    const auto j = static_cast<std::size_t>(it - t.begin()) - 1;
    const double c = (s - t[j]) / (t[j + 1] - t[j]);
    return (1.0 - c) * f.values[j] + c * f.values[j + 1];
}

inline std::vector<PanelWeights> convolution_weights(const std::vector<double>& t, double beta) {
    std::vector<PanelWeights> pw(t.size() > 0 ? t.size() - 1 : 0);
    for (std::size_t m = 0; m + 1 < t.size(); ++m) {
        pw[m] = panel_weights(t[m], t[m + 1] - t[m], beta);
    }
    return pw;
}

inline State convolve_at(const std::vector<PanelWeights>& pw, const SnapshotOp& op, const Trajectory& f,
                         std::size_t i) {
    const auto& t = f.t;
    State acc = State::Zero(f.dim());
    if (i == 0) {
        return acc;
    }
    State prev = op(0, f.values[i]);
    for (std::size_t m = 0; m < i; ++m) {
        State next = op(m + 1, interpolate(f, t[i] - t[m + 1]));
        acc += pw[m].at_a * prev + pw[m].at_b * next;
        prev = std::move(next);
    }
    return acc;
}

}  // namespace detail

/// Product-integration convolution
///   u(t_i) = int_0^{t_i} g_beta(tau) phi(tau) f(t_i - tau) d tau
/// where phi(tau) f(t_i - tau) is interpolated linearly on each panel of the
/// grid and the shifted samples f(t_i - t_m) are linear interpolants of f.
inline Trajectory duhamel_convolve(const Kernel& k, const SnapshotOp& op, const Trajectory& f) {
    k.validate();
    f.validate();
    const auto pw = detail::convolution_weights(f.t, k.beta);
    Trajectory out = f;
    for (std::size_t i = 0; i < f.size(); ++i) {
        out.values[i] = detail::convolve_at(pw, op, f, i);
    }
    return out;
}

/// duhamel_convolve at the single node t_i.
inline State duhamel_convolve_at(const Kernel& k, const SnapshotOp& op, const Trajectory& f, std::size_t i) {
    k.validate();
    f.validate();
    if (i >= f.size()) {
        throw domain_error("duhamel_convolve_at: node index out of range");
    }
    return detail::convolve_at(detail::convolution_weights(f.t, k.beta), op, f, i);
}

/// Writes `t,re_0,im_0,...` rows with 17 significant digits. Each line of
/// `comment` is emitted first with a leading '#'.
inline void write_csv(std::ostream& os, const Trajectory& tr, const std::string& comment = {}) {
    if (!comment.empty()) {
        std::istringstream lines(comment);
        std::string line;
        while (std::getline(lines, line)) {
            os << "# " << line << '\n';
        }
    }
    os << 't';
    for (Eigen::Index c = 0; c < tr.dim(); ++c) {
        os << ",re_" << c << ",im_" << c;
    }
    os << '\n';
    os << std::setprecision(17);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        os << tr.t[i];
        for (Eigen::Index c = 0; c < tr.dim(); ++c) {
            os << ',' << tr.values[i][c].real() << ',' << tr.values[i][c].imag();
        }
        os << '\n';
    }
}

/// Reads the node times and values written by write_csv. The grid fields are
/// recovered from the times (T and n); grading is left at its default.
inline Trajectory read_csv(std::istream& is) {
    Trajectory tr;
    std::string line;
    bool header = false;
    Eigen::Index dim = -1;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (!header) {
            if (line.rfind("t", 0) != 0) {
                throw domain_error("read_csv: missing header");
            }
            header = true;
            continue;
        }
        std::vector<double> fields;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            try {
                fields.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw domain_error("read_csv: malformed number '" + cell + "'");
            }
        }
        if (fields.empty() || fields.size() % 2 == 0) {
            throw domain_error("read_csv: row must hold t and re/im pairs");
        }
        const auto d = static_cast<Eigen::Index>((fields.size() - 1) / 2);
        if (dim >= 0 && d != dim) {
            throw domain_error("read_csv: ragged rows");
        }
        dim = d;
        State v(d);
        for (Eigen::Index c = 0; c < d; ++c) {
            v[c] = cplx(fields[static_cast<std::size_t>(1 + 2 * c)], fields[static_cast<std::size_t>(2 + 2 * c)]);
        }
        tr.t.push_back(fields[0]);
        tr.values.push_back(std::move(v));
    }
    if (tr.values.empty()) {
        throw domain_error("read_csv: no data rows");
    }
    tr.grid.T = tr.t.back();
    tr.grid.n_steps = static_cast<int>(tr.t.size()) - 1;
    return tr;
}

}  // namespace fracwave
