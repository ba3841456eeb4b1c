#include "tsc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tsc/errors.hpp"

namespace tsc {

namespace {

// Depth of every node, throwing on cycles or broken links.
std::vector<int> node_depths(const std::vector<int>& parent, int root) {
    const int m = static_cast<int>(parent.size());
    std::vector<int> depth(m, -1);
    depth[root] = 0;
    for (int i = 0; i < m; ++i) {
        if (depth[i] >= 0) continue;
        // Walk up until a node with known depth, then unwind.
        std::vector<int> chain;
        int cur = i;
        while (depth[cur] < 0) {
            chain.push_back(cur);
            cur = parent[cur];
            if (cur < 0 || cur >= m)
                throw ValidationError("hierarchy: broken parent link");
            if (static_cast<int>(chain.size()) > m)
                throw ValidationError("hierarchy: parent links contain a cycle");
        }
        int d = depth[cur];
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) depth[*it] = ++d;
    }
    return depth;
}

} // namespace

HierarchyTree make_hierarchy(std::vector<int> parent, int num_classes) {
    const int m = static_cast<int>(parent.size());
    if (num_classes < 1) throw ValidationError("hierarchy: need at least one class");
    if (m < num_classes) throw ValidationError("hierarchy: fewer nodes than classes");

    int root = -1;
    std::vector<bool> has_child(m, false);
    for (int i = 0; i < m; ++i) {
        if (parent[i] == -1) {
            if (root >= 0) throw ValidationError("hierarchy: more than one root");
            root = i;
            continue;
        }
        if (parent[i] < 0 || parent[i] >= m || parent[i] == i)
            throw ValidationError("hierarchy: broken parent link");
        has_child[parent[i]] = true;
    }
    if (root < 0) throw ValidationError("hierarchy: no root");
    node_depths(parent, root); // cycle check
    for (int c = 0; c < num_classes; ++c)
        if (has_child[c])
            throw ValidationError("hierarchy: class node has children");
    for (int i = num_classes; i < m; ++i)
        if (!has_child[i])
            throw ValidationError("hierarchy: childless internal node");

    HierarchyTree tree;
    tree.parent = std::move(parent);
    tree.num_classes = num_classes;
    return tree;
}

HierarchyTree generate_hierarchy(int num_classes, int branching, std::uint64_t seed) {
    if (num_classes < 2) throw ValidationError("hierarchy: need at least two classes");
    if (branching < 2) throw ValidationError("hierarchy: branching factor must be at least 2");

    std::vector<int> level(num_classes);
    std::iota(level.begin(), level.end(), 0);
    Rng rng(Rng::mix2(seed, 0x74726565ULL));
    rng.shuffle(level);

    std::vector<int> parent(num_classes, -1);
    while (level.size() > 1) {
        const int n = static_cast<int>(level.size());
        const int groups = (n + branching - 1) / branching;
        std::vector<int> next;
        int taken = 0;
        for (int g = 0; g < groups; ++g) {
            // Spread sizes evenly so no group is left with a single orphan.
            const int size = n / groups + (g < n % groups ? 1 : 0);
            const int node = static_cast<int>(parent.size());
            parent.push_back(-1);
            for (int j = 0; j < size; ++j) parent[level[taken++]] = node;
            next.push_back(node);
        }
        level = std::move(next);
    }
    return make_hierarchy(std::move(parent), num_classes);
}

int hierarchy_distance(const HierarchyTree& tree, int a, int b) {
    if (a < 0 || a >= tree.num_classes || b < 0 || b >= tree.num_classes)
        throw ValidationError("hierarchy_distance: unknown class id");
    if (a == b) return 0;
    int root = -1;
    for (int i = 0; i < tree.size(); ++i)
        if (tree.parent[i] == -1) root = i;
    const std::vector<int> depth = node_depths(tree.parent, root);
    int dist = 0;
    while (depth[a] > depth[b]) {
        a = tree.parent[a];
        ++dist;
    }
    while (depth[b] > depth[a]) {
        b = tree.parent[b];
        ++dist;
    }
    while (a != b) {
        a = tree.parent[a];
        b = tree.parent[b];
        dist += 2;
    }
    return dist;
}

std::vector<int> longtail_counts(int n_max, double rho, int num_classes) {
    if (n_max < 1) throw ValidationError("longtail_counts: n_max must be at least 1");
    if (num_classes < 2) throw ValidationError("longtail_counts: need at least two classes");
    if (rho < 1.0) throw ValidationError("longtail_counts: imbalance ratio must be >= 1");
    std::vector<int> counts(num_classes);
    for (int i = 0; i < num_classes; ++i) {
        const double frac = static_cast<double>(i) / (num_classes - 1);
        counts[i] = static_cast<int>(std::llround(n_max * std::pow(rho, -frac)));
        if (counts[i] < 1)
            throw ValidationError("longtail_counts: tail class rounds to zero samples");
    }
    return counts;
}

LongTailDataset generate_dataset(int num_classes, int d_in, const std::vector<int>& counts,
                                 const HierarchyTree& hierarchy, double noise_sigma,
                                 std::uint64_t seed, int test_per_class) {
    if (num_classes != static_cast<int>(counts.size()))
        throw ValidationError("generate_dataset: counts length does not match class count");
    if (hierarchy.num_classes != num_classes)
        throw ValidationError("generate_dataset: hierarchy does not match class count");
    if (d_in < 2) throw ValidationError("generate_dataset: input dimension too small");
    if (noise_sigma < 0.0) throw ValidationError("generate_dataset: negative noise");
    if (test_per_class < 0) throw ValidationError("generate_dataset: negative test size");
    for (int c : counts)
        if (c < 1) throw ValidationError("generate_dataset: empty class");

    LongTailDataset ds;
    ds.counts = counts;
    ds.seed = seed;
    ds.hierarchy = hierarchy;
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    ds.rho = static_cast<double>(*hi) / *lo;

    // Walk prototypes down the tree: each node perturbs its parent by a step
    // whose size halves per level, so sibling leaves stay geometrically close.
    Rng rng(Rng::mix2(seed, 0x64617461ULL));
    int root = -1;
    for (int i = 0; i < hierarchy.size(); ++i)
        if (hierarchy.parent[i] == -1) root = i;
    const std::vector<int> depth = node_depths(hierarchy.parent, root);
    const int max_depth = *std::max_element(depth.begin(), depth.end());
    Mat node_proto(hierarchy.size());
    node_proto[root] = normalized(rng.normal_vector(d_in));
    for (int lvl = 1; lvl <= max_depth; ++lvl) {
        for (int i = 0; i < hierarchy.size(); ++i) {
            if (depth[i] != lvl) continue;
            Vec step = normalized(rng.normal_vector(d_in));
            Vec p = node_proto[hierarchy.parent[i]];
            axpy(std::pow(0.5, lvl), step, p);
            node_proto[i] = normalized(p);
        }
    }
    ds.prototypes.assign(node_proto.begin(), node_proto.begin() + num_classes);

    auto draw_sample = [&](int cls) {
        if (noise_sigma == 0.0) return ds.prototypes[cls];
        Vec x = ds.prototypes[cls];
        axpy(noise_sigma, rng.normal_vector(d_in), x);
        return normalized(x);
    };
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < counts[c]; ++i) {
            ds.samples.push_back(draw_sample(c));
            ds.labels.push_back(c);
        }
    }
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < test_per_class; ++i) {
            ds.test_samples.push_back(draw_sample(c));
            ds.test_labels.push_back(c);
        }
    }
    return ds;
}

Mat augment_inputs(const Mat& inputs, double sigma, Rng& rng) {
    if (sigma < 0.0) throw ValidationError("augment_inputs: negative noise");
    Mat out = inputs;
    for (Vec& row : out) axpy(sigma, rng.normal_vector(row.size()), row);
    return out;
}

void save_dataset(const LongTailDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open dataset file for writing: " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", ds.rho);
    out << "C " << ds.num_classes() << " d_in " << ds.input_dim() << " rho " << buf
        << " seed " << ds.seed << "\n";
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        out << ds.labels[i];
        for (double v : ds.samples[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ' ' << buf;
        }
        out << '\n';
    }
    if (!out) throw ValidationError("failed while writing dataset: " + path);
}

LongTailDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("dataset: missing header");
    std::istringstream header(line);
    std::string c_tag, d_tag, rho_tag, seed_tag;
    int num_classes = 0, d_in = 0;
    LongTailDataset ds;
    header >> c_tag >> num_classes >> d_tag >> d_in >> rho_tag >> ds.rho >> seed_tag >>
        ds.seed;
    if (header.fail() || c_tag != "C" || d_tag != "d_in" || rho_tag != "rho" ||
        seed_tag != "seed" || num_classes < 1 || d_in < 1)
        throw ValidationError("dataset: malformed header");

    ds.counts.assign(num_classes, 0);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        int label;
        if (!(row >> label) || label < 0 || label >= num_classes)
            throw ValidationError("dataset: bad label");
        Vec x(d_in);
        for (int j = 0; j < d_in; ++j)
            if (!(row >> x[j])) throw ValidationError("dataset: short sample row");
        double extra;
        if (row >> extra) throw ValidationError("dataset: oversized sample row");
        ds.samples.push_back(std::move(x));
        ds.labels.push_back(label);
        ++ds.counts[label];
    }
    for (int c : ds.counts)
        if (c == 0) throw ValidationError("dataset: class with no samples");
    return ds;
}

void save_hierarchy(const HierarchyTree& tree, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open hierarchy file for writing: " + path);
    out << "classes " << tree.num_classes << "\n";
    for (int i = 0; i < tree.size(); ++i) out << i << ' ' << tree.parent[i] << '\n';
    if (!out) throw ValidationError("failed while writing hierarchy: " + path);
}

HierarchyTree load_hierarchy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open hierarchy file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("hierarchy file: missing header");
    std::istringstream header(line);
    std::string tag;
    int num_classes = 0;
    header >> tag >> num_classes;
    if (header.fail() || tag != "classes")
        throw ValidationError("hierarchy file: malformed header");
    std::vector<int> parent;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        int id, par;
        if (!(row >> id >> par) || id != static_cast<int>(parent.size()))
            throw ValidationError("hierarchy file: malformed node line");
        parent.push_back(par);
    }
    return make_hierarchy(std::move(parent), num_classes);
}

} // namespace tsc
