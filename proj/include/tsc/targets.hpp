#ifndef TSC_TARGETS_HPP
#define TSC_TARGETS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tsc/vecmath.hpp"

namespace tsc {

struct TargetGenConfig {
    double tau = 0.07;
    double learning_rate = 0.1; // initial step; backtracking adapts it per iteration
    int iterations = 10000;     // accepted descent steps per restart
    int restarts = 8;           // independent starts, best final energy wins
    std::uint64_t seed = 0;
};

struct TargetSet {
    Mat points; // C unit vectors of dimension d
    double tau = 0.07;
    std::uint64_t seed = 0;
    double initial_energy = 0.0; // at the random start, for descent diagnostics
    double final_energy = 0.0;

    int num_classes() const { return static_cast<int>(points.size()); }
    int dim() const { return points.empty() ? 0 : static_cast<int>(points[0].size()); }
};

struct SimplexReport {
    bool applicable = false;  // false when C > d + 1
    bool certified = false;
    double expected_inner = 0.0;    // -1/(C-1)
    double max_inner_deviation = 0.0;
    double sum_norm = 0.0;          // | sum_i t_i |
};

// Mean log-sum-exp similarity over all ordered pairs, self pairs included.
// One point alone therefore scores exactly 1/tau.
double uniformity_energy(const Mat& points, double tau);

// Raw formula without input validation, usable off the sphere (finite
// differences need that). include_self toggles the j == i term in each row.
double pairwise_energy(const Mat& points, double tau, bool include_self);

// Ambient-space analytic gradient of pairwise_energy, one row per point.
Mat pairwise_energy_grad(const Mat& points, double tau, bool include_self);

// Spreads C points on the unit sphere in R^d by projected gradient descent
// on the pairwise energy; deterministic for a fixed config.
TargetSet generate_targets(int num_classes, int dim, const TargetGenConfig& cfg);

// Checks equal pairwise inner products (-1/(C-1)) and zero center of mass.
SimplexReport certify_simplex(const TargetSet& targets, double tol);

void save_targets(const TargetSet& targets, const std::string& path);
TargetSet load_targets(const std::string& path);

} // namespace tsc

#endif
