#ifndef TSC_TESTS_HELPERS_HPP
#define TSC_TESTS_HELPERS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tsc/rng.hpp"
#include "tsc/vecmath.hpp"

namespace tsc::testing {

// Regular simplex with C vertices embedded in d >= C dimensions: center the
// standard basis vectors and normalize. Pairwise inner products -1/(C-1).
inline Mat exact_simplex(int c, int d) {
    Mat pts(c, Vec(d, 0.0));
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) pts[i][j] = (i == j ? 1.0 : 0.0) - 1.0 / c;
        normalize_in_place(pts[i]);
    }
    return pts;
}

inline Mat unit_circle_points(int c, double phase = 0.0) {
    Mat pts(c, Vec(2, 0.0));
    for (int i = 0; i < c; ++i) {
        double a = phase + 2.0 * M_PI * i / c;
        pts[i] = {std::cos(a), std::sin(a)};
    }
    return pts;
}

inline Mat regular_tetrahedron() {
    Mat pts = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    for (auto& p : pts) normalize_in_place(p);
    return pts;
}

// Gram-Schmidt on gaussian columns.
inline Mat random_orthogonal(int d, Rng& rng) {
    Mat q(d);
    for (int i = 0; i < d; ++i) {
        Vec v = rng.normal_vector(d);
        for (int j = 0; j < i; ++j) axpy(-dot(v, q[j]), q[j], v);
        normalize_in_place(v);
        q[i] = v;
    }
    return q;
}

inline Vec apply_matrix(const Mat& q, const Vec& x) {
    Vec out(q.size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = dot(q[i], x);
    return out;
}

inline Mat apply_matrix_rows(const Mat& q, const Mat& rows) {
    Mat out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(apply_matrix(q, r));
    return out;
}

inline Mat random_unit_rows(int c, int d, Rng& rng) {
    Mat pts(c);
    for (int i = 0; i < c; ++i) pts[i] = normalized(rng.normal_vector(d));
    return pts;
}

// Central difference of a scalar function with respect to one slot.
template <typename F>
double central_diff(F&& f, double& slot, double h = 1e-5) {
    const double orig = slot;
    slot = orig + h;
    const double fp = f();
    slot = orig - h;
    const double fm = f();
    slot = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
    return std::fabs(analytic - numeric) /
           std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

// Worst per-coordinate relative error between an analytic gradient and
// central differences of f over every entry of x.
template <typename F>
double max_grad_rel_err(F&& f, Mat& x, const Mat& analytic, double h = 1e-5,
                        double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < x[i].size(); ++j) {
            double fd = central_diff(f, x[i][j], h);
            worst = std::max(worst, rel_err(analytic[i][j], fd, floor));
        }
    }
    return worst;
}

} // namespace tsc::testing

#endif
