#pragma once

#include <yaml-cpp/yaml.h>

#include <CLI11.hpp>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fracwave/contour_calculus.hpp"
#include "fracwave/errors.hpp"
#include "fracwave/operator_model.hpp"
#include "fracwave/propagators.hpp"
#include "fracwave/solvers.hpp"
#include "fracwave/special_functions.hpp"
#include "fracwave/version.hpp"

namespace fracwave::cli {

enum ExitCode : int { ok = 0, check_failed = 1, usage = 2, config_error = 3, no_convergence = 4 };

/// Malformed invocation or empty config.
class usage_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or inconsistent config.
class config_error_t : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

/// Shortest round-trip decimal form.
inline std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

/// Flat key-value config. Every key read is recorded so unknown keys can be rejected.
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text, std::filesystem::path dir = {}) {
        Config c;
        c.text_ = text;
        c.dir_ = std::move(dir);
        YAML::Node root;
        try {
            root = YAML::Load(text);
        } catch (const YAML::Exception& e) {
            throw config_error_t(std::string("config: ") + e.what());
        }
        if (root.IsNull() || (root.IsMap() && root.size() == 0)) {
            throw usage_error("config is empty");
        }
        if (!root.IsMap()) {
            throw config_error_t("config: expected a flat key-value mapping");
        }
        for (const auto& kv : root) {
            if (kv.second.IsMap()) {
                throw config_error_t("config: nested mapping under '" + kv.first.as<std::string>() + "'");
            }
            c.nodes_[kv.first.as<std::string>()] = kv.second;
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw config_error_t("config: cannot open '" + path + "'");
        }
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), std::filesystem::path(path).parent_path());
    }

    [[nodiscard]] bool has(const std::string& k) const { return nodes_.count(k) != 0; }

    template <class T>
    T get(const std::string& k, T fallback) const {
        used_.insert(k);
        auto it = nodes_.find(k);
        if (it == nodes_.end()) {
            return fallback;
        }
        try {
            return it->second.as<T>();
        } catch (const YAML::Exception&) {
            throw config_error_t("config: bad value for '" + k + "'");
        }
    }

    template <class T>
    std::optional<T> maybe(const std::string& k) const {
        used_.insert(k);
        if (!has(k)) {
            return std::nullopt;
        }
        return get<T>(k, T{});
    }

    [[nodiscard]] std::vector<double> list(const std::string& k, std::vector<double> fallback) const {
        used_.insert(k);
        auto it = nodes_.find(k);
        if (it == nodes_.end()) {
            return fallback;
        }
        try {
            if (it->second.IsSequence()) {
                return it->second.as<std::vector<double>>();
            }
            return {it->second.as<double>()};
        } catch (const YAML::Exception&) {
            throw config_error_t("config: bad list for '" + k + "'");
        }
    }

    /// A number (constant vector), a list of reals, or a list of [re, im] pairs.
    [[nodiscard]] State state(const std::string& k, Eigen::Index dim, double fallback) const {
        used_.insert(k);
        auto it = nodes_.find(k);
        if (it == nodes_.end()) {
            return State::Constant(dim, cplx(fallback, 0.0));
        }
        const YAML::Node& n = it->second;
        try {
            if (n.IsScalar()) {
                return State::Constant(dim, cplx(n.as<double>(), 0.0));
            }
            if (!n.IsSequence() || static_cast<Eigen::Index>(n.size()) != dim) {
                throw config_error_t("config: '" + k + "' must be a number or a list of length " +
                                     std::to_string(dim));
            }
            State x(dim);
            for (Eigen::Index i = 0; i < dim; ++i) {
                const YAML::Node e = n[static_cast<std::size_t>(i)];
                if (e.IsSequence()) {
                    if (e.size() != 2) {
                        throw config_error_t("config: complex entries of '" + k + "' are [re, im]");
                    }
                    x[i] = cplx(e[0].as<double>(), e[1].as<double>());
                } else {
                    x[i] = cplx(e.as<double>(), 0.0);
                }
            }
            return x;
        } catch (const YAML::Exception&) {
            throw config_error_t("config: bad vector for '" + k + "'");
        }
    }

    [[nodiscard]] std::filesystem::path resolve(const std::string& p) const {
        const std::filesystem::path q(p);
        return q.is_absolute() || dir_.empty() ? q : dir_ / q;
    }

    void reject_unknown() const {
        for (const auto& kv : nodes_) {
            if (!used_.count(kv.first)) {
                throw config_error_t("config: unknown key '" + kv.first + "'");
            }
        }
    }

    [[nodiscard]] std::string hash() const { return hex(fnv1a(text_)); }

private:
    std::string text_;
    std::filesystem::path dir_;
    std::map<std::string, YAML::Node> nodes_;
    mutable std::set<std::string> used_;
};

/// Global flags shared by all subcommands.
struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    bool to_stdout = false;
};

struct Context {
    Config cfg;
    Flags flags;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    std::ostream* out = &std::cout;
    std::ostream* err = &std::cerr;

    [[nodiscard]] std::string header() const {
        return std::string("fracwave-version ") + version + ", config-hash " + cfg.hash() + ", seed " +
               std::to_string(seed);
    }

    /// Writes through `fn` to stdout in --stdout mode, else to out_dir/name.
    template <class F>
    void emit(const std::string& name, F&& fn) const {
        if (flags.to_stdout) {
            fn(*out);
            return;
        }
        std::filesystem::create_directories(out_dir);
        const auto path = out_dir / name;
        std::ofstream f(path);
        if (!f) {
            throw config_error_t("cannot write '" + path.string() + "'");
        }
        fn(f);
        *err << "wrote " << path.string() << '\n';
    }

    /// Side files are skipped in --stdout mode so stdout carries a single data set.
    template <class F>
    void emit_side(const std::string& name, F&& fn) const {
        if (!flags.to_stdout) {
            emit(name, std::forward<F>(fn));
        }
    }
};

inline Context make_context(const Flags& f, std::ostream& out, std::ostream& err, bool need_config = true) {
    Context c;
    c.flags = f;
    c.out = &out;
    c.err = &err;
    if (need_config) {
        if (f.config.empty()) {
            throw usage_error("--config is required");
        }
        c.cfg = Config::load(f.config);
    }
    c.seed = f.seed ? *f.seed : c.cfg.get<std::uint64_t>("seed", 0);
    c.out_dir = f.out.empty() ? std::filesystem::path(c.cfg.get<std::string>("out", "fracwave-out")) : std::filesystem::path(f.out);
    return c;
}

inline State random_state(Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    State x(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        x[i] = cplx(n(rng), n(rng));
    }
    return x;
}

/// Model from `model: ladder | scalar | diagonal | file` plus profile overrides.
inline AlmostSectorialModel model_from(const Config& c) {
    const auto kind = c.get<std::string>("model", "ladder");
    AlmostSectorialModel m;
    if (kind == "ladder") {
        m = build_ladder_model(c.get("gamma", -0.75), c.get("omega", std::numbers::pi / 6.0), c.get("rho_min", 1e-2),
                               c.get("rho_max", 1e8), c.get("blocks_per_decade", 4), c.get("coupling_scale", 0.0));
    } else if (kind == "scalar") {
        m = scalar_model(c.get("a", 1.0), c.get("gamma", -0.75));
    } else if (kind == "diagonal") {
        std::vector<cplx> l;
        const auto mods = c.list("eigenvalues", {});
        const double arg = c.get("omega", 0.0);
        for (const double r : mods) {
            l.push_back(std::polar(r, arg));
        }
        if (l.empty()) {
            throw config_error_t("config: diagonal model needs eigenvalues");
        }
        m = diagonal_model(l, c.get("gamma", -0.75));
    } else if (kind == "file") {
        const auto path = c.resolve(c.get<std::string>("model_file", ""));
        std::ifstream in(path);
        if (!in) {
            throw config_error_t("config: cannot open model file '" + path.string() + "'");
        }
        m = read_model(in);
    } else {
        throw config_error_t("config: unknown model kind '" + kind + "'");
    }
    if (auto v = c.maybe<double>("theta")) {
        m.profile.theta = *v;
    }
    if (auto v = c.maybe<double>("mu")) {
        m.profile.mu = *v;
    }
    if (auto v = c.maybe<double>("power")) {
        m = power(m, *v);
    }
    m.validate();
    return m;
}

/// Model with its profile fitted to alpha unless theta / mu were given explicitly;
/// explicit angles must satisfy omega < theta < mu < pi - alpha pi / 2.
inline AlmostSectorialModel fitted_model(const Config& c, double alpha) {
    AlmostSectorialModel m = model_from(c);
    if (!c.has("theta") && !c.has("mu")) {
        m.profile = m.profile.fitted_to(alpha);
    } else if (!m.profile.admissible(alpha)) {
        throw regime_violation("config: need omega < theta < mu < pi - alpha pi / 2");
    }
    return m;
}

inline double alpha_from(const Config& c) {
    const double a = c.get("alpha", 1.5);
    if (!(a > 1.0 && a < 2.0)) {
        throw domain_error("config: alpha must lie in (1, 2)");
    }
    return a;
}

inline PropagatorHandle handle_from(const Config& c, const AlmostSectorialModel& m, double alpha, double delta) {
    ContourSpec cs;
    cs.theta = m.profile.theta;
    cs.nodes_per_decade = c.get("nodes_per_decade", 80);
    HankelSpec hs;
    hs.nodes_per_decade = c.get("hankel_nodes_per_decade", 256);
    hs.arc_nodes = c.get("hankel_arc_nodes", 64);
    hs.theta0 = c.get("hankel_theta0", 0.0);
    return make_propagator(m, alpha, delta, representation_from_string(c.get<std::string>("representation", "gamma-path")),
                           cs, hs);
}

// ---------------------------------------------------------------- ml

inline cplx parse_complex(const std::string& s) {
    const auto comma = s.find(',');
    auto num = [&](const std::string& part) {
        double v = 0.0;
        const auto* b = part.data();
        const auto* e = b + part.size();
        const auto r = std::from_chars(b, e, v);
        if (part.empty() || r.ec != std::errc() || r.ptr != e) {
            throw usage_error("malformed complex number '" + s + "' (expected re[,im])");
        }
        return v;
    };
    if (comma == std::string::npos) {
        return {num(s), 0.0};
    }
    return {num(s.substr(0, comma)), num(s.substr(comma + 1))};
}

inline std::string format_complex(cplx v) {
    return v.imag() == 0.0 ? shortest(v.real()) : shortest(v.real()) + "," + shortest(v.imag());
}

/// Prints E_{alpha,delta}(z) or its k-th derivative, one line per z.
inline int cmd_ml(double alpha, double delta, const std::vector<std::string>& zs, int derivative, std::ostream& out) {
    if (zs.empty()) {
        throw usage_error("ml: need at least one --z");
    }
    if (derivative < 0) {
        throw usage_error("ml: --derivative must be non-negative");
    }
    const MLParams p{alpha, delta};
    p.validate();
    std::vector<cplx> z;
    for (const auto& s : zs) {
        z.push_back(parse_complex(s));
    }
    for (const cplx v : z) {
        out << format_complex(derivative == 0 ? ml_eval(p, v) : ml_derivative(p, v, derivative)) << '\n';
    }
    return ok;
}

// ---------------------------------------------------------------- regions

struct RegionPoint {
    double alpha, nu, gamma;
    int flag;
};

/// Linear problem with zero data: nu > alpha (1 + gamma).
inline bool region_linear(double a, double nu, double g) { return nu > a * (1.0 + g); }

/// Homogeneous problem: 1 / (1 + gamma) > alpha > 1 / (-gamma).
inline bool region_homogeneous(double a, double g) { return a * (1.0 + g) < 1.0 && a * (-g) > 1.0; }

/// General problem: both.
inline bool region_general(double a, double nu, double g) { return region_linear(a, nu, g) && region_homogeneous(a, g); }

/// Cell-centre raster: alpha in (1, 2) against nu in (0, 1] (linear, general) or gamma in (-1, 0) (homogeneous).
inline std::vector<RegionPoint> region_raster(const std::string& diagram, int n, double gamma, double nu) {
    if (n < 1) {
        throw domain_error("regions: grid size must be positive");
    }
    std::vector<RegionPoint> pts;
    pts.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double a = 1.0 + (i + 0.5) / n;
        for (int j = 0; j < n; ++j) {
            const double s = (j + 0.5) / n;
            if (diagram == "linear") {
                pts.push_back({a, s, gamma, region_linear(a, s, gamma) ? 1 : 0});
            } else if (diagram == "general") {
                pts.push_back({a, s, gamma, region_general(a, s, gamma) ? 1 : 0});
            } else if (diagram == "homogeneous") {
                const double g = -1.0 + s;
                pts.push_back({a, nu, g, region_homogeneous(a, g) ? 1 : 0});
            } else {
                throw config_error_t("regions: unknown diagram '" + diagram + "'");
            }
        }
    }
    return pts;
}

inline void write_regions_csv(std::ostream& os, const std::vector<RegionPoint>& pts, const std::string& header) {
    os << "# " << header << '\n' << "alpha,nu,gamma,flag\n" << std::setprecision(17);
    for (const auto& p : pts) {
        os << p.alpha << ',' << p.nu << ',' << p.gamma << ',' << p.flag << '\n';
    }
}

inline int cmd_regions(const Context& ctx) {
    const Config& c = ctx.cfg;
    const int n = c.get("regions_n", 200);
    const double gamma = c.get("regions_gamma", -0.75);
    const double nu = c.get("regions_nu", 1.0);
    if (!(gamma > -1.0 && gamma < 0.0) || !(nu > 0.0 && nu <= 1.0)) {
        throw domain_error("regions: need gamma in (-1, 0) and nu in (0, 1]");
    }
    auto diagram = c.get<std::string>("diagram", ctx.flags.to_stdout ? "general" : "all");
    c.reject_unknown();
    std::vector<std::string> which;
    if (diagram == "all") {
        if (ctx.flags.to_stdout) {
            throw usage_error("regions: --stdout takes a single diagram");
        }
        which = {"linear", "general", "homogeneous"};
    } else {
        which = {diagram};
    }
    for (const auto& d : which) {
        const auto pts = region_raster(d, n, gamma, nu);
        ctx.emit("regions_" + d + ".csv", [&](std::ostream& os) { write_regions_csv(os, pts, ctx.header()); });
    }
    return ok;
}

// ---------------------------------------------------------------- model

inline int cmd_model_build(const Context& ctx) {
    const auto m = model_from(ctx.cfg);
    ctx.cfg.reject_unknown();
    ctx.emit("model.txt", [&](std::ostream& os) {
        os << "# " << ctx.header() << '\n';
        write_model(os, m);
    });
    *ctx.err << "model: " << m.blocks.size() << " blocks, |lambda| in [" << m.min_modulus() << ", "
             << m.max_modulus() << "]\n";
    return ok;
}

/// Validates the model and fits the resolvent growth along arg z = pi.
inline int cmd_model_check(const Context& ctx) {
    const Config& c = ctx.cfg;
    auto m = model_from(c);
    const double tol = ctx.flags.tol ? *ctx.flags.tol : c.get("tol", 0.1);
    const double lo = c.get("check_r_min", 10.0 * m.min_modulus());
    const double hi = c.get("check_r_max", 0.1 * m.max_modulus());
    c.reject_unknown();
    if (!(hi > lo)) {
        throw domain_error("model check: the spectrum spans less than two decades");
    }
    const auto rep = verify_resolvent_bound(m, std::numbers::pi, log_space(lo, hi, 41));
    const bool pass = std::abs(rep.slope - m.profile.gamma) <= tol;
    ctx.emit("model_check.csv", [&](std::ostream& os) {
        os << "# " << ctx.header() << '\n'
           << "blocks,gamma,fitted_slope,c_mu,tolerance,status\n"
           << std::setprecision(17) << m.blocks.size() << ',' << m.profile.gamma << ',' << rep.slope << ','
           << rep.c_empirical << ',' << tol << ',' << (pass ? "PASS" : "FAIL") << '\n';
    });
    *ctx.err << "model check: resolvent slope " << rep.slope << " vs gamma " << m.profile.gamma << " -> "
             << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? ok : check_failed;
}

// ---------------------------------------------------------------- verify

struct CheckRow {
    std::string name;
    double value;
    double target;
    double tolerance;
    /// true: |value - target| <= tolerance; false: value <= tolerance
    bool two_sided;

    [[nodiscard]] bool pass() const {
        return std::isfinite(value) && (two_sided ? std::abs(value - target) <= tolerance : value <= tolerance);
    }
};

inline void write_checks_csv(std::ostream& os, const std::vector<CheckRow>& rows, const std::string& header) {
    os << "# " << header << '\n' << "check,value,target,tolerance,status\n" << std::setprecision(17);
    for (const auto& r : rows) {
        os << r.name << ',' << r.value << ',' << r.target << ',' << r.tolerance << ',' << (r.pass() ? "PASS" : "FAIL")
           << '\n';
    }
}

inline void write_diagnostics_csv(std::ostream& os, const std::vector<NodeSample>& d, const std::string& header) {
    os << "# " << header << '\n' << "r,arg,|integrand|\n" << std::setprecision(17);
    for (const auto& s : d) {
        os << s.r << ',' << s.arg << ',' << s.magnitude << '\n';
    }
}

/// Blocks of m with |lambda| <= rho_max.
inline AlmostSectorialModel truncated(const AlmostSectorialModel& m, double rho_max) {
    AlmostSectorialModel t = m;
    t.blocks.clear();
    for (const auto& b : m.blocks) {
        if (std::abs(b.lambda) <= rho_max) {
            t.blocks.push_back(b);
        }
    }
    if (t.blocks.empty()) {
        throw domain_error("verify: no block below identity_rho_max");
    }
    return t;
}

/// Runs the invariant battery on the configured model.
inline int cmd_verify(const Context& ctx) {
    const Config& c = ctx.cfg;
    const double alpha = alpha_from(c);
    const auto m = fitted_model(c, alpha);
    const double g = m.profile.gamma;
    const double slope_tol = ctx.flags.tol ? *ctx.flags.tol : c.get("tol", 0.15);
    const double rep_tol = c.get("representation_tol", 1e-8);
    const auto decay_t = log_space(c.get("decay_t_min", 0.1), c.get("decay_t_max", 10.0), c.get("decay_t_count", 12));
    const auto sc_t = log_space(c.get("sc_t_min", 1e-4), c.get("sc_t_max", 1e-1), c.get("sc_t_count", 13));
    const double r_lo = c.get("check_r_min", 10.0 * m.min_modulus());
    const double r_hi = c.get("check_r_max", 0.1 * m.max_modulus());
    const auto lambdas = c.list("laplace_lambdas", {0.5, 2.0, 10.0});
    const double identity_t = c.get("identity_t", 1.0);
    const double identity_rho = c.get("identity_rho_max", 1e2);
    const int identity_nodes = c.get("identity_nodes", 2048);
    const auto rep_times = c.list("representation_times", {0.1, 1.0, 10.0});
    const auto p = handle_from(c, m, alpha, 1.0);
    c.reject_unknown();

    const State x = random_state(m.dim(), ctx.seed);
    std::vector<CheckRow> rows;
    auto m_check = m;
    rows.push_back({"resolvent_slope", verify_resolvent_bound(m_check, std::numbers::pi, log_space(r_lo, r_hi, 41)).slope,
                    g, 0.1, true});

    const auto e = prop_norm_decay(p, decay_t);
    DecayOptions t1;
    t1.t_power = 1.0;
    auto p2 = p;
    p2.delta = 2.0;
    const auto e2 = prop_norm_decay(p2, decay_t, t1);
    const auto conv = convolution_norm_decay(p, decay_t);
    DecayOptions times_a;
    times_a.times_A = true;
    auto pa = p;
    pa.delta = alpha;
    const auto ae = prop_norm_decay(pa, decay_t, times_a);
    rows.push_back({"decay_E_alpha", e.slope, -alpha * (1 + g), slope_tol, true});
    rows.push_back({"decay_tE_alpha2", e2.slope, 1 - alpha * (1 + g), slope_tol, true});
    rows.push_back({"decay_g_conv_E", conv.slope, -1 - alpha * (1 + g), slope_tol, true});
    rows.push_back({"decay_A_E_alpha_alpha", ae.slope, -2 * alpha - alpha * g, slope_tol, true});

    const auto sc = strong_continuity_sweep(p, sc_t);
    rows.push_back({"strong_continuity_slope", sc.slope, -alpha * g, 0.1, true});
    if (alpha * (-g) > 1.0) {
        rows.push_back({"derivative_at_zero_slope", derivative_at_zero_sweep(p, sc_t).slope, -1 - alpha * g, 0.1, true});
    }

    if (alpha * (1 + g) < 1.0) {
        rows.push_back({"uno_identity", uno_identity_check(p, identity_t, x), 0.0, 1e-5, false});
        for (const double lam : lambdas) {
            rows.push_back({"laplace_lambda_" + shortest(lam), laplace_check(p, lam, x), 0.0, 1e-4, false});
        }
    }
    {
        const auto small = truncated(m, identity_rho);
        auto ps = p;
        ps.model = small;
        const State xs = random_state(small.dim(), ctx.seed);
        rows.push_back({"derivative_identity", derivative_identity_check(ps, identity_t, xs, {identity_nodes, 2.0}), 0.0,
                        1e-4, false});
    }
    for (const double t : rep_times) {
        const State o = prop_apply(p, t, x, Representation::oracle);
        const double gp = (prop_apply(p, t, x, Representation::gamma_path) - o).norm() / o.norm();
        const double hp = (prop_apply(p, t, x, Representation::hankel_path) - o).norm() / o.norm();
        rows.push_back({"gamma_vs_oracle_t_" + shortest(t), gp, 0.0, rep_tol, false});
        rows.push_back({"hankel_vs_oracle_t_" + shortest(t), hp, 0.0, rep_tol, false});
    }

    const auto hdr = ctx.header();
    ctx.emit("verify_summary.csv", [&](std::ostream& os) { write_checks_csv(os, rows, hdr); });
    ctx.emit_side("decay_E_alpha.csv", [&](std::ostream& os) { os << "# " << hdr << '\n'; write_decay_csv(os, e); });
    ctx.emit_side("decay_tE_alpha2.csv", [&](std::ostream& os) { os << "# " << hdr << '\n'; write_decay_csv(os, e2); });
    ctx.emit_side("decay_g_conv_E.csv", [&](std::ostream& os) { os << "# " << hdr << '\n'; write_decay_csv(os, conv); });
    ctx.emit_side("decay_A_E_alpha_alpha.csv", [&](std::ostream& os) { os << "# " << hdr << '\n'; write_decay_csv(os, ae); });
    ctx.emit_side("strong_continuity.csv", [&](std::ostream& os) { os << "# " << hdr << '\n'; write_decay_csv(os, sc); });
    ctx.emit_side("contour_diagnostics.csv", [&](std::ostream& os) {
        const double s = std::pow(identity_t, alpha);
        const auto r = calculus_apply(
            m, [&](cplx z) { return ml_eval({alpha, 1.0}, -s * z); }, detail::contour_at(p, 1.0 / s), x, true);
        write_diagnostics_csv(os, r.diagnostics, hdr);
    });

    bool all = true;
    for (const auto& r : rows) {
        *ctx.err << std::left << std::setw(28) << r.name << ' ' << std::setw(14) << r.value << ' '
                 << (r.pass() ? "PASS" : "FAIL") << '\n';
        all = all && r.pass();
    }
    return all ? ok : check_failed;
}

// ---------------------------------------------------------------- solve

inline ForcingSpec forcing_from(const Config& c, const AlmostSectorialModel& m, const std::string& problem) {
    const auto nu = c.maybe<double>("nu");
    const Eigen::Index d = m.dim();
    if (problem == "homogeneous") {
        return {};
    }
    if (problem == "linear") {
        const auto kind = c.get<std::string>("forcing", "constant");
        const double amp = c.get("forcing_amplitude", 1.0);
        const double freq = c.get("forcing_frequency", 1.0);
        std::function<State(double)> f;
        if (kind == "none") {
            f = [d](double) { return State::Zero(d).eval(); };
        } else if (kind == "constant") {
            f = [d, amp](double) { return State::Constant(d, cplx(amp, 0.0)).eval(); };
        } else if (kind == "sin") {
            f = [d, amp, freq](double t) { return State::Constant(d, cplx(amp * std::sin(freq * t), 0.0)).eval(); };
        } else if (kind == "cos") {
            f = [d, amp, freq](double t) { return State::Constant(d, cplx(amp * std::cos(freq * t), 0.0)).eval(); };
        } else {
            throw config_error_t("config: unknown forcing '" + kind + "'");
        }
        return ForcingSpec::time_only(f, nu);
    }
    if (problem == "semilinear") {
        const auto kind = c.get<std::string>("nonlinearity", "sin");
        const double k = c.get("nonlinearity_scale", 1.0);
        double norm_a = 0.0;
        for (const auto& b : m.blocks) {
            norm_a = std::max(norm_a, block_norm(b.lambda, b.coupling));
        }
        // componentwise maps with slope <= |k| are Lipschitz into D(A) with (1 + ||A||) |k|
        const double lip = c.get("lipschitz", std::max(std::abs(k), 1e-300) * (1.0 + norm_a));
        std::function<State(double, const State&)> f;
        if (kind == "sin") {
            f = [k](double, const State& w) {
                State v = w;
                for (auto& z : v) {
                    z = k * std::sin(z);
                }
                return v;
            };
        } else if (kind == "linear") {
            f = [k](double, const State& w) { return State(k * w); };
        } else if (kind == "zero") {
            f = [](double, const State& w) { return State::Zero(w.size()).eval(); };
        } else {
            throw config_error_t("config: unknown nonlinearity '" + kind + "'");
        }
        return ForcingSpec::semilinear(f, lip, nu);
    }
    throw config_error_t("config: unknown problem '" + problem + "'");
}

inline int cmd_solve(const Context& ctx) {
    const Config& c = ctx.cfg;
    const double alpha = alpha_from(c);
    const auto m = fitted_model(c, alpha);
    const auto problem = c.get<std::string>("problem", "homogeneous");
    WaveProblem p;
    p.model = m;
    p.alpha = alpha;
    p.w0 = c.state("w0", m.dim(), 1.0);
    p.w1 = c.state("w1", m.dim(), 0.0);
    p.grid = TimeGrid{c.get("T", 1.0), c.get("n_steps", 2048), c.get("grading", 2.0)};
    p.forcing = forcing_from(c, m, problem);
    SolveOptions so;
    so.representation = representation_from_string(c.get<std::string>("solver_representation", "oracle"));
    so.allow_experimental = c.get("allow_experimental", false);
    PicardOptions po;
    po.tol = ctx.flags.tol ? *ctx.flags.tol : c.get("tol", 1e-10);
    po.max_iter = c.get("max_iter", 50);
    const auto init = c.get<std::string>("init", "initial-value");
    if (init == "zero") {
        po.init = PicardOptions::Init::zero;
    } else if (init != "initial-value") {
        throw config_error_t("config: init must be initial-value or zero");
    }
    c.reject_unknown();
    p.validate();

    Solution s;
    std::vector<double> history;
    if (problem == "homogeneous") {
        s = solve_homogeneous(p, so);
    } else if (problem == "linear") {
        s = solve_linear(p, so);
    } else {
        try {
            auto r = solve_semilinear(p, po, so);
            s = std::move(r.solution);
            history = std::move(r.history);
        } catch (const nonconvergence& e) {
            *ctx.err << "solve: " << e.what() << "\nincrement history:";
            for (const double h : e.history()) {
                *ctx.err << ' ' << h;
            }
            *ctx.err << '\n';
            ctx.emit_side("picard_history.csv", [&](std::ostream& os) {
                os << "# " << ctx.header() << '\n' << "iteration,increment\n" << std::setprecision(17);
                for (std::size_t k = 0; k < e.history().size(); ++k) {
                    os << k + 1 << ',' << e.history()[k] << '\n';
                }
            });
            return no_convergence;
        }
    }
    const auto res = verify_classical(p, s.w);
    const auto hdr = ctx.header() + (s.experimental ? ", experimental" : "");
    ctx.emit("trajectory.csv", [&](std::ostream& os) { write_csv(os, s.w, hdr); });
    ctx.emit_side("residual.csv", [&](std::ostream& os) {
        os << "# " << hdr << '\n';
        write_residual_csv(os, res);
    });
    if (!history.empty()) {
        ctx.emit_side("picard_history.csv", [&](std::ostream& os) {
            os << "# " << hdr << '\n' << "iteration,increment\n" << std::setprecision(17);
            for (std::size_t k = 0; k < history.size(); ++k) {
                os << k + 1 << ',' << history[k] << '\n';
            }
        });
    }
    *ctx.err << "solve: " << problem << ", " << s.w.size() << " nodes, max interior residual " << res.max_interior
             << ", |w(0)-w0| " << res.w0_error << ", |w'(0)-w1| " << res.w1_error
             << (s.experimental ? " (experimental: regime not satisfied)" : "") << '\n';
    return ok;
}

// ---------------------------------------------------------------- entry

/// Parses argv and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"fracwave: fractional wave-type propagators and solvers"};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);
    Flags flags;
    auto add_common = [&](CLI::App* s, bool config) {
        if (config) {
            s->add_option("--config", flags.config, "config file (flat YAML key: value)");
        }
        s->add_option("--out", flags.out, "output directory");
        s->add_option("--seed", flags.seed, "seed for random test vectors");
        s->add_option("--tol", flags.tol, "tolerance override");
        s->add_flag("--stdout", flags.to_stdout, "write data to stdout instead of files");
    };

    double ml_alpha = 1.0, ml_delta = 1.0;
    int ml_derivative = 0;
    std::vector<std::string> ml_z;
    auto* ml = app.add_subcommand("ml", "evaluate E_{alpha,delta}(z)");
    ml->add_option("--alpha", ml_alpha, "alpha > 0")->required();
    ml->add_option("--delta", ml_delta, "delta")->required();
    ml->add_option("--z", ml_z, "argument re[,im]; repeatable")->required()->allow_extra_args(false);
    ml->add_option("--derivative", ml_derivative, "derivative order");
    add_common(ml, false);

    auto* verify = app.add_subcommand("verify", "run the invariant battery");
    add_common(verify, true);
    auto* solve = app.add_subcommand("solve", "solve a wave problem");
    add_common(solve, true);
    auto* regions = app.add_subcommand("regions", "rasterize the admissibility regions");
    add_common(regions, true);
    auto* model = app.add_subcommand("model", "build or check a model");
    model->require_subcommand(1);
    auto* build = model->add_subcommand("build", "write a model file");
    add_common(build, true);
    auto* check = model->add_subcommand("check", "validate a model and its resolvent growth");
    add_common(check, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return ok;
    } catch (const CLI::CallForVersion& e) {
        out << version << '\n';
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "fracwave: " << e.what() << '\n';
        return usage;
    }

    try {
        if (ml->parsed()) {
            return cmd_ml(ml_alpha, ml_delta, ml_z, ml_derivative, out);
        }
        const Context ctx = make_context(flags, out, err);
        if (verify->parsed()) {
            return cmd_verify(ctx);
        }
        if (solve->parsed()) {
            return cmd_solve(ctx);
        }
        if (regions->parsed()) {
            return cmd_regions(ctx);
        }
        if (build->parsed()) {
            return cmd_model_build(ctx);
        }
        if (check->parsed()) {
            return cmd_model_check(ctx);
        }
        return usage;
    } catch (const usage_error& e) {
        err << "fracwave: " << e.what() << '\n';
        return usage;
    } catch (const nonconvergence& e) {
        err << "fracwave: " << e.what() << '\n';
        return no_convergence;
    } catch (const config_error_t& e) {
        err << "fracwave: " << e.what() << '\n';
        return config_error;
    } catch (const domain_error& e) {
        err << "fracwave: " << e.what() << '\n';
        return config_error;
    } catch (const regime_violation& e) {
        err << "fracwave: " << e.what() << '\n';
        return config_error;
    } catch (const spectral_collision& e) {
        err << "fracwave: " << e.what() << '\n';
        return config_error;
    } catch (const std::exception& e) {
        err << "fracwave: " << e.what() << '\n';
        return config_error;
    }
}

}  // namespace fracwave::cli
