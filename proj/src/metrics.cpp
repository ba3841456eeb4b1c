#include "tsc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <utility>

#include "tsc/errors.hpp"

namespace tsc {

namespace {

constexpr double kUnitTol = 1e-9;

void check_rows(const Mat& rows, const char* what) {
    if (rows.empty()) throw ValidationError(std::string(what) + ": no rows");
    const std::size_t dim = rows.front().size();
    if (dim == 0) throw ValidationError(std::string(what) + ": zero-dimensional rows");
    for (const Vec& r : rows) {
        if (r.size() != dim) throw ValidationError(std::string(what) + ": ragged rows");
        if (!is_unit(r, kUnitTol))
            throw ValidationError(std::string(what) + ": rows must be unit-norm");
    }
}

Vec per_class_alignment(const std::vector<Mat>& classes) {
    if (classes.empty()) throw ValidationError("alignment: no classes");
    Vec out;
    out.reserve(classes.size());
    for (const Mat& group : classes) {
        if (group.empty()) throw ValidationError("alignment: class has no features");
        check_rows(group, "alignment");
        double total = 0.0;
        for (const Vec& a : group)
            for (const Vec& b : group) total += distance(a, b);
        const double n = static_cast<double>(group.size());
        out.push_back(total / (n * n));
    }
    return out;
}

Vec per_class_neighborhood(const Mat& centers, int k);

// Spread over all other centers == neighborhood with k = C-1; sharing the
// sorted summation keeps the two bitwise identical.
Vec per_class_center_spread(const Mat& centers) {
    check_rows(centers, "uniformity");
    const int c = static_cast<int>(centers.size());
    if (c < 2) throw ValidationError("uniformity: need at least two centers");
    return per_class_neighborhood(centers, c - 1);
}

// Ascending distances from center i to every other center, ties by index.
std::vector<std::pair<double, int>> sorted_neighbors(const Mat& centers, int i) {
    std::vector<std::pair<double, int>> cand;
    cand.reserve(centers.size() - 1);
    for (int j = 0; j < static_cast<int>(centers.size()); ++j)
        if (j != i) cand.emplace_back(distance(centers[i], centers[j]), j);
    std::sort(cand.begin(), cand.end());
    return cand;
}

void check_neighborhood_k(int k, int c) {
    if (k < 1 || k > c - 1)
        throw ValidationError("neighborhood size must be between 1 and C-1");
}

Vec per_class_neighborhood(const Mat& centers, int k) {
    check_rows(centers, "neighborhood uniformity");
    const int c = static_cast<int>(centers.size());
    check_neighborhood_k(k, c);
    Vec out(c, 0.0);
    for (int i = 0; i < c; ++i) {
        const auto cand = sorted_neighbors(centers, i);
        double total = 0.0;
        for (int l = 0; l < k; ++l) total += cand[l].first;
        out[i] = total / static_cast<double>(k);
    }
    return out;
}

Vec per_class_reasonability(const Mat& centers, const HierarchyTree& tree, int k) {
    check_rows(centers, "reasonability");
    const int c = static_cast<int>(centers.size());
    check_neighborhood_k(k, c);
    if (tree.num_classes != c)
        throw ValidationError("reasonability: hierarchy does not cover the classes");
    Vec out(c, 0.0);
    for (int i = 0; i < c; ++i) {
        const auto cand = sorted_neighbors(centers, i);
        double total = 0.0;
        for (int l = 0; l < k; ++l) total += hierarchy_distance(tree, i, cand[l].second);
        out[i] = total / static_cast<double>(k);
    }
    return out;
}

double mean(const Vec& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void append_value(std::string& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

} // namespace

Mat class_centers(const Mat& features, const std::vector<int>& labels, int num_classes) {
    check_rows(features, "class centers");
    if (labels.size() != features.size())
        throw ValidationError("class centers: label count does not match features");
    if (num_classes < 1) throw ValidationError("class centers: need at least one class");
    const std::size_t dim = features.front().size();
    Mat centers(num_classes, Vec(dim, 0.0));
    std::vector<int> tally(num_classes, 0);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= num_classes)
            throw ValidationError("class centers: label out of range");
        axpy(1.0, features[i], centers[y]);
        ++tally[y];
    }
    for (int c = 0; c < num_classes; ++c) {
        if (tally[c] == 0) throw ValidationError("class centers: class has no features");
        const double len = norm(centers[c]);
        if (len < 1e-12)
            throw OptimizationError("class centers: center collapsed to zero");
        for (double& x : centers[c]) x /= len;
    }
    return centers;
}

double alignment(const std::vector<Mat>& classes) { return mean(per_class_alignment(classes)); }

double uniformity(const Mat& centers) { return mean(per_class_center_spread(centers)); }

double neighborhood_uniformity(const Mat& centers, int k) {
    return mean(per_class_neighborhood(centers, k));
}

double reasonability(const Mat& centers, const HierarchyTree& tree, int k) {
    return mean(per_class_reasonability(centers, tree, k));
}

std::vector<int> frequency_group_of_class(const std::vector<int>& counts) {
    const int c = static_cast<int>(counts.size());
    if (c < 1) throw ValidationError("frequency groups: no classes");
    for (int n : counts)
        if (n < 1) throw ValidationError("frequency groups: counts must be positive");
    std::vector<int> order(counts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return counts[a] > counts[b]; });
    const int b1 = c / 3;
    const int b2 = 2 * c / 3;
    std::vector<int> group(counts.size(), 2);
    for (int rank = 0; rank < c; ++rank)
        group[order[rank]] = rank < b1 ? 0 : rank < b2 ? 1 : 2;
    return group;
}

MetricsReport compute_report(const Mat& features, const std::vector<int>& labels,
                             const std::vector<int>& counts, const HierarchyTree& tree, int k,
                             const std::vector<double>& per_class_accuracy) {
    const int c = static_cast<int>(counts.size());
    if (c < 2) throw ValidationError("metrics report: need at least two classes");
    if (tree.num_classes != c)
        throw ValidationError("metrics report: hierarchy does not cover the classes");
    if (!per_class_accuracy.empty() && static_cast<int>(per_class_accuracy.size()) != c)
        throw ValidationError("metrics report: accuracy vector has wrong length");

    std::vector<Mat> classes(c);
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (labels.size() != features.size())
            throw ValidationError("metrics report: label count does not match features");
        const int y = labels[i];
        if (y < 0 || y >= c) throw ValidationError("metrics report: label out of range");
        classes[y].push_back(features[i]);
    }

    const Mat centers = class_centers(features, labels, c);
    const Vec align = per_class_alignment(classes);
    const Vec spread = per_class_center_spread(centers);
    const Vec neigh = per_class_neighborhood(centers, k);
    const Vec reason = per_class_reasonability(centers, tree, k);
    const std::vector<int> group = frequency_group_of_class(counts);

    MetricsReport report;
    report.neighborhood_k = k;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    GroupMetrics* rows[4] = {&report.many, &report.medium, &report.few, &report.all};
    for (int g = 0; g < 4; ++g) {
        double a = 0.0, u = 0.0, uk = 0.0, r = 0.0, acc = 0.0;
        int members = 0;
        for (int i = 0; i < c; ++i) {
            if (g < 3 && group[i] != g) continue;
            a += align[i];
            u += spread[i];
            uk += neigh[i];
            r += reason[i];
            if (!per_class_accuracy.empty()) acc += per_class_accuracy[i];
            ++members;
        }
        if (members == 0) {
            *rows[g] = GroupMetrics{nan, nan, nan, nan, nan};
            continue;
        }
        const double m = static_cast<double>(members);
        rows[g]->alignment = a / m;
        rows[g]->uniformity = u / m;
        rows[g]->neighborhood = uk / m;
        rows[g]->reasonability = r / m;
        rows[g]->accuracy = per_class_accuracy.empty() ? nan : acc / m;
    }
    return report;
}

std::string MetricsReport::to_text() const {
    static const char* names[4] = {"many", "medium", "few", "all"};
    const GroupMetrics* rows[4] = {&many, &medium, &few, &all};
    std::string out = "k " + std::to_string(neighborhood_k) + "\n";
    for (int g = 0; g < 4; ++g) {
        const auto emit = [&](const char* metric, double v) {
            out += names[g];
            out += '.';
            out += metric;
            out += ' ';
            append_value(out, v);
            out += '\n';
        };
        emit("A", rows[g]->alignment);
        emit("U", rows[g]->uniformity);
        emit("Uk", rows[g]->neighborhood);
        emit("R", rows[g]->reasonability);
        emit("acc", rows[g]->accuracy);
    }
    return out;
}

std::string MetricsReport::to_csv() const {
    static const char* names[4] = {"many", "medium", "few", "all"};
    const GroupMetrics* rows[4] = {&many, &medium, &few, &all};
    std::string out = "group,A,U,Uk,R,acc\n";
    for (int g = 0; g < 4; ++g) {
        out += names[g];
        for (double v : {rows[g]->alignment, rows[g]->uniformity, rows[g]->neighborhood,
                         rows[g]->reasonability, rows[g]->accuracy}) {
            out += ',';
            append_value(out, v);
        }
        out += '\n';
    }
    return out;
}

} // namespace tsc
