#include "tsc/assignment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "tsc/errors.hpp"

namespace tsc {

CenterTracker::CenterTracker(int num_classes, int dim, double keep, bool renormalize)
    : centers_(num_classes, Vec(dim, 0.0)),
      init_(num_classes, 0),
      dim_(dim),
      keep_(keep),
      renormalize_(renormalize) {
    if (num_classes < 1) throw ValidationError("CenterTracker: need at least one class");
    if (dim < 1) throw ValidationError("CenterTracker: need dimension >= 1");
    if (!(keep > 0.0 && keep < 1.0)) {
        throw ValidationError("CenterTracker: keep weight must lie in (0, 1)");
    }
}

void CenterTracker::update(const std::map<int, Vec>& batch_centers) {
    for (const auto& [cls, c] : batch_centers) {
        if (cls < 0 || cls >= num_classes()) {
            throw ValidationError("CenterTracker: class " + std::to_string(cls) +
                                  " out of range");
        }
        if (static_cast<int>(c.size()) != dim_) {
            throw ValidationError("CenterTracker: center for class " + std::to_string(cls) +
                                  " has wrong dimension");
        }
        if (!is_unit(c, 1e-9)) {
            throw ValidationError("CenterTracker: center for class " + std::to_string(cls) +
                                  " is not unit norm");
        }
    }
    for (const auto& [cls, c] : batch_centers) {
        if (!init_[cls]) {
            centers_[cls] = c;
            init_[cls] = 1;
            continue;
        }
        Vec& cur = centers_[cls];
        for (int x = 0; x < dim_; ++x) cur[x] = keep_ * cur[x] + (1.0 - keep_) * c[x];
        if (renormalize_) normalize_in_place(cur);
    }
}

const Vec& CenterTracker::center(int cls) const {
    if (cls < 0 || cls >= num_classes()) {
        throw ValidationError("CenterTracker: class " + std::to_string(cls) + " out of range");
    }
    if (!init_[cls]) {
        throw ContractError("CenterTracker: class " + std::to_string(cls) +
                            " has no observed center yet");
    }
    return centers_[cls];
}

bool CenterTracker::initialized(int cls) const {
    if (cls < 0 || cls >= num_classes()) {
        throw ValidationError("CenterTracker: class " + std::to_string(cls) + " out of range");
    }
    return init_[cls] != 0;
}

bool CenterTracker::all_initialized() const {
    for (char f : init_) {
        if (!f) return false;
    }
    return true;
}

std::map<int, Vec> batch_class_centers(const Mat& features, const std::vector<int>& labels) {
    if (features.size() != labels.size()) {
        throw ValidationError("batch_class_centers: feature/label count mismatch");
    }
    if (features.empty()) throw ValidationError("batch_class_centers: empty batch");

    std::map<int, Vec> sums;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (labels[i] < 0) throw ValidationError("batch_class_centers: negative label");
        if (features[i].size() != features[0].size()) {
            throw ValidationError("batch_class_centers: mixed feature dimensions");
        }
        auto it = sums.try_emplace(labels[i], Vec(features[i].size(), 0.0)).first;
        axpy(1.0, features[i], it->second);
    }
    for (auto& [cls, sum] : sums) {
        if (norm(sum) < 1e-12) {
            throw OptimizationError("batch_class_centers: features of class " +
                                    std::to_string(cls) + " cancel to zero");
        }
        normalize_in_place(sum);
    }
    return sums;
}

namespace {

// Shortest augmenting path assignment (O(n^3)) with dual potentials.
// Returns row->col matching plus feasible optimal duals u, v.
void solve_lap(const Mat& a, std::vector<int>& row_to_col, std::vector<double>& u,
               std::vector<double>& v) {
    const int n = static_cast<int>(a.size());
    const double inf = std::numeric_limits<double>::infinity();
    u.assign(n + 1, 0.0);
    v.assign(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0); // p[j] = row matched to col j (1-based)

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    row_to_col.assign(n, -1);
    for (int j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
}

bool kuhn_match(int row, const std::vector<std::vector<int>>& adj, std::vector<char>& seen,
                std::vector<int>& col_owner) {
    for (int col : adj[row]) {
        if (seen[col]) continue;
        seen[col] = 1;
        if (col_owner[col] < 0 || kuhn_match(col_owner[col], adj, seen, col_owner)) {
            col_owner[col] = row;
            return true;
        }
    }
    return false;
}

// Can rows [from, n) be perfectly matched into the still-free columns?
bool completable(int from, int n, const std::vector<std::vector<int>>& adj,
                 const std::vector<char>& col_taken) {
    std::vector<int> col_owner(n, -1);
    for (int r = from; r < n; ++r) {
        // taken columns start out marked as seen so the search never enters them
        std::vector<char> seen(col_taken.begin(), col_taken.end());
        if (!kuhn_match(r, adj, seen, col_owner)) return false;
    }
    return true;
}

} // namespace

HungarianResult hungarian(const Mat& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) throw ValidationError("hungarian: empty cost matrix");
    double max_abs = 0.0;
    for (const auto& row : cost) {
        if (static_cast<int>(row.size()) != n) {
            throw ValidationError("hungarian: cost matrix is not square");
        }
        for (double x : row) {
            if (!std::isfinite(x)) throw ValidationError("hungarian: non-finite cost entry");
            max_abs = std::max(max_abs, std::fabs(x));
        }
    }

    std::vector<int> row_to_col;
    std::vector<double> u, v;
    solve_lap(cost, row_to_col, u, v);

    // Every optimal matching lives on the tight edges of the optimal duals
    // (complementary slackness), so the lexicographically smallest optimum
    // can be picked greedily: fix the smallest tight column per row that
    // still leaves the remaining rows completable.
    const double eps = 1e-9 * (1.0 + max_abs);
    std::vector<std::vector<int>> tight(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (cost[i][j] - u[i + 1] - v[j + 1] <= eps) tight[i].push_back(j);
        }
    }

    HungarianResult res;
    res.assignment.assign(n, -1);
    std::vector<char> col_taken(n, 0);
    for (int i = 0; i < n; ++i) {
        bool placed = false;
        for (int j : tight[i]) {
            if (col_taken[j]) continue;
            col_taken[j] = 1;
            if (completable(i + 1, n, tight, col_taken)) {
                res.assignment[i] = j;
                placed = true;
                break;
            }
            col_taken[j] = 0;
        }
        if (!placed) {
            // cannot happen: the LAP solution itself is a tight perfect matching
            res.assignment[i] = row_to_col[i];
            col_taken[row_to_col[i]] = 1;
        }
    }

    for (int i = 0; i < n; ++i) res.total_cost += cost[i][res.assignment[i]];
    return res;
}

Assignment assign_targets(const CenterTracker& tracker, const TargetSet& targets) {
    const int c = tracker.num_classes();
    if (targets.num_classes() != c) {
        throw ValidationError("assign_targets: class count mismatch between tracker and targets");
    }
    if (targets.dim() != tracker.dim()) {
        throw ValidationError("assign_targets: dimension mismatch between tracker and targets");
    }
    for (int i = 0; i < c; ++i) {
        if (!tracker.initialized(i)) {
            throw ContractError("assign_targets: class " + std::to_string(i) +
                                " has no center yet; train longer before matching");
        }
    }

    Mat cost(c, Vec(c, 0.0));
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) cost[i][j] = distance(tracker.center(i), targets.points[j]);
    }
    HungarianResult h = hungarian(cost);

    Assignment out;
    out.sigma = std::move(h.assignment);
    out.cost = h.total_cost / static_cast<double>(c);
    return out;
}

void save_assignment(const Assignment& a, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("save_assignment: cannot open " + path);
    for (std::size_t i = 0; i < a.sigma.size(); ++i) {
        f << "class=" << i << " target=" << a.sigma[i] << "\n";
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "cost=%.17g\n", a.cost);
    f << buf;
    if (!f) throw ValidationError("save_assignment: write failed for " + path);
}

Assignment load_assignment(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("load_assignment: cannot open " + path);
    Assignment out;
    std::string line;
    bool saw_cost = false;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        int cls = 0, tgt = 0;
        double cost = 0.0;
        if (std::sscanf(line.c_str(), "class=%d target=%d", &cls, &tgt) == 2) {
            if (cls != static_cast<int>(out.sigma.size())) {
                throw ValidationError("load_assignment: classes out of order");
            }
            out.sigma.push_back(tgt);
        } else if (std::sscanf(line.c_str(), "cost=%lf", &cost) == 1) {
            out.cost = cost;
            saw_cost = true;
        } else {
            throw ValidationError("load_assignment: malformed line: " + line);
        }
    }
    if (!saw_cost || out.sigma.empty()) {
        throw ValidationError("load_assignment: incomplete file " + path);
    }
    std::vector<char> seen(out.sigma.size(), 0);
    for (int t : out.sigma) {
        if (t < 0 || t >= static_cast<int>(out.sigma.size()) || seen[t]) {
            throw ValidationError("load_assignment: sigma is not a permutation");
        }
        seen[t] = 1;
    }
    return out;
}

} // namespace tsc
