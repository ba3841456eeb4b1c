#ifndef TSC_ASSIGNMENT_HPP
#define TSC_ASSIGNMENT_HPP

#include <map>
#include <string>
#include <vector>

#include "tsc/targets.hpp"
#include "tsc/vecmath.hpp"

namespace tsc {

// Running per-class feature centers on the unit sphere. New observations are
// blended in with weight 1 - keep; the first observation for a class is taken
// as-is. Blended centers are pulled back onto the sphere unless renormalize
// is turned off, in which case this is a plain exponential moving average.
class CenterTracker {
public:
    CenterTracker(int num_classes, int dim, double keep = 0.9, bool renormalize = true);

    void update(const std::map<int, Vec>& batch_centers);

    const Vec& center(int cls) const;
    bool initialized(int cls) const;
    bool all_initialized() const;
    int num_classes() const { return static_cast<int>(centers_.size()); }
    int dim() const { return dim_; }
    double keep() const { return keep_; }

private:
    Mat centers_;
    std::vector<char> init_;
    int dim_;
    double keep_;
    bool renormalize_;
};

struct Assignment {
    std::vector<int> sigma; // sigma[class] = target index, a permutation
    double cost = 0.0;      // mean center-to-assigned-target distance
};

struct HungarianResult {
    std::vector<int> assignment; // row -> column
    double total_cost = 0.0;
};

// Per-class normalized feature means for one batch, keyed by label.
std::map<int, Vec> batch_class_centers(const Mat& features, const std::vector<int>& labels);

// Minimum-cost perfect matching on a square cost matrix. Among all optimal
// matchings, returns the lexicographically smallest row-to-column map.
HungarianResult hungarian(const Mat& cost);

// Matches every class center to a distinct target, minimizing the mean
// Euclidean distance.
Assignment assign_targets(const CenterTracker& tracker, const TargetSet& targets);

void save_assignment(const Assignment& a, const std::string& path);
Assignment load_assignment(const std::string& path);

} // namespace tsc

#endif
