#include "tsc/targets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tsc/errors.hpp"
#include "tsc/rng.hpp"

namespace tsc {

namespace {

void check_unit_rows(const Mat& points, double tol, const char* who) {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != points[0].size()) {
            throw ValidationError(std::string(who) + ": rows have mixed dimensions");
        }
        if (!is_unit(points[i], tol)) {
            throw ValidationError(std::string(who) + ": row " + std::to_string(i) +
                                  " is not unit norm");
        }
    }
}

} // namespace

double uniformity_energy(const Mat& points, double tau) {
    if (points.empty()) throw ValidationError("uniformity_energy: empty point list");
    if (!(tau > 0.0)) throw ValidationError("uniformity_energy: tau must be positive");
    check_unit_rows(points, 1e-6, "uniformity_energy");
    return pairwise_energy(points, tau, true);
}

double pairwise_energy(const Mat& points, double tau, bool include_self) {
    const std::size_t c = points.size();
    double total = 0.0;
    Vec sims;
    sims.reserve(c);
    for (std::size_t i = 0; i < c; ++i) {
        sims.clear();
        for (std::size_t j = 0; j < c; ++j) {
            if (!include_self && j == i) continue;
            sims.push_back(dot(points[i], points[j]) / tau);
        }
        total += log_sum_exp(sims);
    }
    return total / static_cast<double>(c);
}

Mat pairwise_energy_grad(const Mat& points, double tau, bool include_self) {
    const int c = static_cast<int>(points.size());
    const int d = static_cast<int>(points[0].size());
    Mat s(c, Vec(c, 0.0));
    Mat q(c, Vec(c, 0.0));
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j <= i; ++j) {
            double v = dot(points[i], points[j]) / tau;
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    // q[i][j] = softmax over row i of the admitted similarities
    for (int i = 0; i < c; ++i) {
        double m = -1e300;
        for (int j = 0; j < c; ++j) {
            if (include_self || j != i) m = std::max(m, s[i][j]);
        }
        double acc = 0.0;
        for (int j = 0; j < c; ++j) {
            if (include_self || j != i) acc += std::exp(s[i][j] - m);
        }
        double lse = m + std::log(acc);
        for (int j = 0; j < c; ++j) {
            q[i][j] = (include_self || j != i) ? std::exp(s[i][j] - lse) : 0.0;
        }
    }

    const double inv_ctau = 1.0 / (static_cast<double>(c) * tau);
    Mat grad(c, Vec(d, 0.0));
    for (int a = 0; a < c; ++a) {
        Vec& g = grad[a];
        for (int j = 0; j < c; ++j) {
            // d s_aj / d t_a contributes q[a][j] t_j, d s_ja / d t_a contributes
            // q[j][a] t_j; for j == a both collapse onto 2 q[a][a] t_a.
            double w = q[a][j] + q[j][a];
            if (w != 0.0) axpy(inv_ctau * w, points[j], g);
        }
    }
    return grad;
}

namespace {

struct DescentResult {
    Mat points;
    double initial_energy = 0.0; // self term included, as reported
    double final_energy = 0.0;
};

// Projected gradient descent with a backtracking step. The descent direction
// comes from the rows without their self term: that term adds a constant
// exp(1/tau) inside every log, which leaves the minimizer alone but shrinks
// all softmax weights by the same factor, freezing the iteration at small
// tau. Reported energies always include it.
DescentResult descend_once(int c, int d, const TargetGenConfig& cfg, std::uint64_t stream) {
    Rng rng(stream);
    Mat t(c);
    for (int i = 0; i < c; ++i) t[i] = normalized(rng.normal_vector(d));

    // Coincident starting points repel each other only radially, which the
    // projection cancels, so split them apart before descending.
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < i; ++j) {
            if (dot(t[i], t[j]) > 1.0 - 1e-12) {
                for (int a = 0; a < d; ++a) t[i][a] += 1e-6 * rng.normal();
                normalize_in_place(t[i]);
            }
        }
    }

    DescentResult res;
    res.initial_energy = pairwise_energy(t, cfg.tau, true);

    const bool simplex_possible = c <= d + 1;
    const double expected_inner = -1.0 / static_cast<double>(c - 1);
    double step = cfg.learning_rate;
    double energy = pairwise_energy(t, cfg.tau, false);
    int evals = 0;
    const int max_evals = 4 * cfg.iterations;

    for (int iter = 0; iter < cfg.iterations && evals < max_evals; ++iter) {
        Mat grad = pairwise_energy_grad(t, cfg.tau, false);

        double max_tangential = 0.0;
        double tangential_sq = 0.0;
        for (int a = 0; a < c; ++a) {
            double radial = dot(grad[a], t[a]);
            for (int x = 0; x < d; ++x) {
                double g = grad[a][x] - radial * t[a][x];
                tangential_sq += g * g;
                max_tangential = std::max(max_tangential, std::fabs(g));
            }
        }
        if (max_tangential < 1e-13) break; // stationary on the sphere

        // Every few steps, stop early once the points already form the known
        // optimum for this shape (possible only when c <= d + 1).
        if (simplex_possible && iter % 16 == 0) {
            double dev = 0.0;
            for (int i = 0; i < c && dev <= 1e-7; ++i) {
                for (int j = 0; j < i; ++j) {
                    dev = std::max(dev, std::fabs(dot(t[i], t[j]) - expected_inner));
                }
            }
            if (dev <= 1e-7) break;
        }

        bool accepted = false;
        while (evals < max_evals && step > 1e-14) {
            Mat cand(c);
            for (int a = 0; a < c; ++a) {
                cand[a] = t[a];
                axpy(-step, grad[a], cand[a]);
                if (!all_finite(cand[a])) {
                    throw OptimizationError("generate_targets: diverged at iteration " +
                                            std::to_string(iter));
                }
                normalize_in_place(cand[a]);
            }
            double cand_energy = pairwise_energy(cand, cfg.tau, false);
            ++evals;
            if (cand_energy <= energy - 1e-4 * step * tangential_sq) {
                t = std::move(cand);
                energy = cand_energy;
                step = std::min(step * 1.3, 1e3);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break; // step underflow: cannot descend further
    }

    res.final_energy = pairwise_energy(t, cfg.tau, true);
    res.points = std::move(t);
    return res;
}

} // namespace

TargetSet generate_targets(int num_classes, int dim, const TargetGenConfig& cfg) {
    if (num_classes < 2) throw ValidationError("generate_targets: need at least 2 classes");
    if (dim < 2) throw ValidationError("generate_targets: need dimension >= 2");
    if (!(cfg.tau > 0.0)) throw ValidationError("generate_targets: tau must be positive");
    if (!(cfg.learning_rate > 0.0)) throw ValidationError("generate_targets: learning rate must be positive");
    if (cfg.iterations < 1) throw ValidationError("generate_targets: iterations must be positive");
    if (cfg.restarts < 1) throw ValidationError("generate_targets: restarts must be positive");

    // Deterministic restarts guard against the rare descent run that settles
    // in a locally stable cluster (e.g. antipodal pairs) instead of spreading.
    DescentResult best;
    bool have_best = false;
    for (int r = 0; r < cfg.restarts; ++r) {
        DescentResult res =
            descend_once(num_classes, dim, cfg, Rng::mix2(cfg.seed, 0x7a26e7ULL + r));
        if (!have_best || res.final_energy < best.final_energy) {
            best = std::move(res);
            have_best = true;
        }
        if (num_classes <= dim + 1) {
            TargetSet probe;
            probe.points = best.points;
            if (certify_simplex(probe, 1e-6).certified) break;
        }
    }

    TargetSet out;
    out.points = std::move(best.points);
    out.tau = cfg.tau;
    out.seed = cfg.seed;
    out.initial_energy = best.initial_energy;
    out.final_energy = best.final_energy;
    if (!std::isfinite(out.final_energy)) {
        throw OptimizationError("generate_targets: non-finite final energy");
    }
    return out;
}

SimplexReport certify_simplex(const TargetSet& targets, double tol) {
    const int c = targets.num_classes();
    const int d = targets.dim();
    if (c < 2) throw ValidationError("certify_simplex: need at least 2 targets");

    SimplexReport rep;
    rep.expected_inner = -1.0 / static_cast<double>(c - 1);
    if (c > d + 1) return rep; // no regular simplex fits, report stays not-applicable
    rep.applicable = true;

    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < i; ++j) {
            double dev = std::fabs(dot(targets.points[i], targets.points[j]) - rep.expected_inner);
            rep.max_inner_deviation = std::max(rep.max_inner_deviation, dev);
        }
    }
    Vec sum(d, 0.0);
    for (const auto& p : targets.points) axpy(1.0, p, sum);
    rep.sum_norm = norm(sum);
    rep.certified = rep.max_inner_deviation <= tol && rep.sum_norm <= c * tol;
    return rep;
}

void save_targets(const TargetSet& targets, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("save_targets: cannot open " + path);
    char head[160];
    std::snprintf(head, sizeof(head), "C=%d d=%d tau=%.17g seed=%llu energy=%.17g\n",
                  targets.num_classes(), targets.dim(), targets.tau,
                  static_cast<unsigned long long>(targets.seed), targets.final_energy);
    f << head;
    char num[32];
    for (const auto& row : targets.points) {
        for (std::size_t x = 0; x < row.size(); ++x) {
            std::snprintf(num, sizeof(num), "%.17g", row[x]);
            f << (x ? " " : "") << num;
        }
        f << "\n";
    }
    if (!f) throw ValidationError("save_targets: write failed for " + path);
}

TargetSet load_targets(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("load_targets: cannot open " + path);
    std::string header;
    if (!std::getline(f, header)) throw ValidationError("load_targets: missing header");

    int c = 0, d = 0;
    double tau = 0.0, energy = 0.0;
    unsigned long long seed = 0;
    if (std::sscanf(header.c_str(), "C=%d d=%d tau=%lf seed=%llu energy=%lf",
                    &c, &d, &tau, &seed, &energy) != 5) {
        throw ValidationError("load_targets: malformed header: " + header);
    }
    if (c < 2 || d < 2 || !(tau > 0.0)) {
        throw ValidationError("load_targets: header values out of range");
    }

    TargetSet out;
    out.tau = tau;
    out.seed = seed;
    out.final_energy = energy;
    out.points.assign(c, Vec(d, 0.0));
    for (int i = 0; i < c; ++i) {
        std::string line;
        if (!std::getline(f, line)) {
            throw ValidationError("load_targets: expected " + std::to_string(c) + " rows");
        }
        std::istringstream ss(line);
        for (int x = 0; x < d; ++x) {
            if (!(ss >> out.points[i][x])) {
                throw ValidationError("load_targets: row " + std::to_string(i) + " is short");
            }
        }
        double extra;
        if (ss >> extra) throw ValidationError("load_targets: row " + std::to_string(i) + " is long");
        if (!is_unit(out.points[i], 1e-9)) {
            throw ValidationError("load_targets: row " + std::to_string(i) + " is not unit norm");
        }
    }

    double recomputed = uniformity_energy(out.points, out.tau);
    if (std::fabs(recomputed - out.final_energy) > 1e-9) {
        throw ValidationError("load_targets: stored energy does not match the points");
    }
    return out;
}

} // namespace tsc
