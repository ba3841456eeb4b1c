#ifndef TSC_DATAGEN_HPP
#define TSC_DATAGEN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tsc/rng.hpp"
#include "tsc/vecmath.hpp"

namespace tsc {

// Rooted tree over node ids 0..size-1. Ids 0..num_classes-1 are the class
// leaves, higher ids are internal, parent -1 marks the single root.
struct HierarchyTree {
    std::vector<int> parent;
    int num_classes = 0;

    int size() const { return static_cast<int>(parent.size()); }
};

// Validates the links: one root, acyclic, classes childless, no childless
// internal node.
HierarchyTree make_hierarchy(std::vector<int> parent, int num_classes);

// Roughly balanced tree with the given branching factor; the seed shuffles
// which classes end up siblings.
HierarchyTree generate_hierarchy(int num_classes, int branching, std::uint64_t seed);

// Edges on the unique leaf-to-leaf path.
int hierarchy_distance(const HierarchyTree& tree, int a, int b);

// n_i = round(n_max * rho^(-i/(C-1))): exponential decay from n_max down to
// n_max/rho.
std::vector<int> longtail_counts(int n_max, double rho, int num_classes);

struct LongTailDataset {
    Mat samples; // unit-norm raw inputs, grouped by class
    std::vector<int> labels;
    std::vector<int> counts;
    double rho = 1.0;
    std::uint64_t seed = 0;
    Mat prototypes; // one unit vector per class
    HierarchyTree hierarchy;
    Mat test_samples; // balanced split: test_per_class each, grouped by class
    std::vector<int> test_labels;

    int num_classes() const { return static_cast<int>(counts.size()); }
    int input_dim() const { return samples.empty() ? 0 : static_cast<int>(samples[0].size()); }
};

// Class prototypes follow a random walk down the hierarchy (perturbation
// magnitude halves per level), samples are normalized prototype + noise.
LongTailDataset generate_dataset(int num_classes, int d_in, const std::vector<int>& counts,
                                 const HierarchyTree& hierarchy, double noise_sigma,
                                 std::uint64_t seed, int test_per_class = 50);

// Two-view augmentation for raw inputs: additive Gaussian noise.
Mat augment_inputs(const Mat& inputs, double sigma, Rng& rng);

// One line per sample "label v1 ... v_din" under a small header.
void save_dataset(const LongTailDataset& ds, const std::string& path);
LongTailDataset load_dataset(const std::string& path);

// One line per node "id parent_id", root's parent is -1.
void save_hierarchy(const HierarchyTree& tree, const std::string& path);
HierarchyTree load_hierarchy(const std::string& path);

} // namespace tsc

#endif
