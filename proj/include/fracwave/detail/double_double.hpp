#pragma once

#include <cmath>
#include <complex>

// Minimal double-double arithmetic (about 32 significant digits) used by the
// Mittag-Leffler Taylor evaluator, where cancellation in the alternating
// series would otherwise eat most of a double's mantissa.
namespace fracwave::detail {

struct dd {
    double hi = 0.0;
    double lo = 0.0;

    constexpr dd() = default;
    constexpr dd(double h) : hi(h) {}  // NOLINT(google-explicit-constructor)
    constexpr dd(double h, double l) : hi(h), lo(l) {}

    [[nodiscard]] double to_double() const { return hi + lo; }
};

inline dd two_sum(double a, double b) {
    const double s = a + b;
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    return {s, err};
}

inline dd quick_two_sum(double a, double b) {
    const double s = a + b;
    return {s, b - (s - a)};
}

inline dd two_prod(double a, double b) {
    const double p = a * b;
    return {p, std::fma(a, b, -p)};
}

inline dd operator+(const dd& a, const dd& b) {
    dd s = two_sum(a.hi, b.hi);
    dd t = two_sum(a.lo, b.lo);
    s.lo += t.hi;
    s = quick_two_sum(s.hi, s.lo);
    s.lo += t.lo;
    return quick_two_sum(s.hi, s.lo);
}

inline dd operator-(const dd& a) { return {-a.hi, -a.lo}; }
inline dd operator-(const dd& a, const dd& b) { return a + (-b); }

inline dd operator*(const dd& a, const dd& b) {
    dd p = two_prod(a.hi, b.hi);
    p.lo += a.hi * b.lo + a.lo * b.hi;
    return quick_two_sum(p.hi, p.lo);
}

inline dd operator*(const dd& a, double b) {
    dd p = two_prod(a.hi, b);
    p.lo += a.lo * b;
    return quick_two_sum(p.hi, p.lo);
}

struct cdd {
    dd re;
    dd im;

    [[nodiscard]] std::complex<double> to_complex() const { return {re.to_double(), im.to_double()}; }
    [[nodiscard]] double abs_approx() const { return std::hypot(re.hi, im.hi); }
};

inline cdd operator+(const cdd& a, const cdd& b) { return {a.re + b.re, a.im + b.im}; }

inline cdd operator*(const cdd& a, const cdd& b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}

inline cdd operator*(const cdd& a, const dd& s) { return {a.re * s, a.im * s}; }
inline cdd operator*(const cdd& a, double s) { return {a.re * s, a.im * s}; }

}  // namespace fracwave::detail
