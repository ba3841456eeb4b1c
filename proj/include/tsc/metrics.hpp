#pragma once

#include <string>
#include <vector>

#include "tsc/datagen.hpp"
#include "tsc/vecmath.hpp"

namespace tsc {

// Representation-quality metrics over a labeled set of unit features.
//
// All four metrics decompose into one value per class; the report averages
// those values over frequency groups so that the "all" row of each metric
// equals the plain scalar operation below.

struct GroupMetrics {
    double alignment = 0.0;      // mean intra-class pairwise distance (lower = tighter)
    double uniformity = 0.0;     // mean distance to the other class centers
    double neighborhood = 0.0;   // mean distance to the k nearest other centers
    double reasonability = 0.0;  // mean tree distance of the k nearest classes (lower = better)
    double accuracy = 0.0;
};

struct MetricsReport {
    int neighborhood_k = 0;
    GroupMetrics many;    // top third of classes by training count
    GroupMetrics medium;  // middle third
    GroupMetrics few;     // bottom third
    GroupMetrics all;

    std::string to_text() const;  // flat "group.metric value" lines
    std::string to_csv() const;   // header + one row per group
};

// Normalized per-class feature means. Throws if a class has no features or
// its mean collapses to zero.
Mat class_centers(const Mat& features, const std::vector<int>& labels, int num_classes);

// A: for each class, the mean over all ordered feature pairs (self pairs
// included) of their distance; averaged over classes.
double alignment(const std::vector<Mat>& classes);

// U: mean distance over all ordered pairs of distinct centers.
double uniformity(const Mat& centers);

// U_k: for each center, the mean of the k smallest distances to the other
// centers; averaged over centers. U_{C-1} equals U.
double neighborhood_uniformity(const Mat& centers, int k);

// R: for each class, the mean hierarchy distance to the k classes whose
// centers lie nearest (ties broken by ascending class index).
double reasonability(const Mat& centers, const HierarchyTree& tree, int k);

inline int default_metrics_k(int num_classes) {
    return num_classes - 1 < 10 ? num_classes - 1 : 10;
}

// Group id per class: 0 = many, 1 = medium, 2 = few. Classes rank by
// descending training count (ties by index); boundaries at C/3 and 2C/3.
std::vector<int> frequency_group_of_class(const std::vector<int>& counts);

// Full report on a labeled feature set. `per_class_accuracy` may be empty,
// in which case the accuracy columns are NaN.
MetricsReport compute_report(const Mat& features, const std::vector<int>& labels,
                             const std::vector<int>& counts, const HierarchyTree& tree, int k,
                             const std::vector<double>& per_class_accuracy = {});

} // namespace tsc
