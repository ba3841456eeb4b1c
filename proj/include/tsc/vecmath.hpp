#ifndef TSC_VECMATH_HPP
#define TSC_VECMATH_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "tsc/errors.hpp"

namespace tsc {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>; // list of rows

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double distance(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline void normalize_in_place(Vec& a, double min_norm = 1e-12) {
    double n = norm(a);
    if (n < min_norm) throw OptimizationError("cannot normalize a near-zero vector");
    for (auto& x : a) x /= n;
}

inline Vec normalized(Vec a, double min_norm = 1e-12) {
    normalize_in_place(a, min_norm);
    return a;
}

inline bool is_unit(const Vec& a, double tol) { return std::fabs(norm(a) - 1.0) <= tol; }

// d(u/|u|)/du applied to g: (g - (g.v) v) / |u|, with v = u/|u|.
inline Vec through_normalization(const Vec& g, const Vec& v, double pre_norm_len) {
    Vec out(g.size());
    double gv = dot(g, v);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = (g[i] - gv * v[i]) / pre_norm_len;
    return out;
}

inline void axpy(double a, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double log_sum_exp(const Vec& s) {
    double m = s[0];
    for (double x : s) m = std::max(m, x);
    double acc = 0.0;
    for (double x : s) acc += std::exp(x - m);
    return m + std::log(acc);
}

inline bool all_finite(const Vec& a) {
    for (double x : a) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

} // namespace tsc

#endif
