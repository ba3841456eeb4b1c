#include "tsc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tsc/errors.hpp"
#include "tsc/rng.hpp"

namespace tsc {

namespace {

constexpr std::uint64_t kOrderTag = 0x6f726472ULL;   // per-epoch batch shuffling
constexpr std::uint64_t kAugmentTag = 0x61756764ULL; // second-view noise
constexpr std::uint64_t kSigmaTag = 0x7369676dULL;   // frozen random assignment
constexpr std::uint64_t kPositiveTag = 0x706f7369ULL;

Mat encode_all(const Mlp& net, const Mat& inputs, int chunk) {
    Mat out;
    out.reserve(inputs.size());
    for (std::size_t start = 0; start < inputs.size();
         start += static_cast<std::size_t>(chunk)) {
        const std::size_t stop =
            std::min(inputs.size(), start + static_cast<std::size_t>(chunk));
        Mat part(inputs.begin() + start, inputs.begin() + stop);
        ForwardCache cache = forward(net, part);
        for (Vec& f : cache.features) out.push_back(std::move(f));
    }
    return out;
}

double fixed_assignment_cost(const CenterTracker& tracker, const TargetSet& targets,
                             const std::vector<int>& sigma) {
    double total = 0.0;
    for (int c = 0; c < tracker.num_classes(); ++c)
        total += distance(tracker.center(c), targets.points[sigma[c]]);
    return total / static_cast<double>(tracker.num_classes());
}

MetricSnapshot take_snapshot(int epoch, const Mlp& net, const LongTailDataset& ds) {
    Mat feats = encode_all(net, ds.samples, 256);
    const int c = ds.num_classes();
    std::vector<Mat> classes(c);
    for (std::size_t i = 0; i < feats.size(); ++i) classes[ds.labels[i]].push_back(feats[i]);
    const Mat centers = class_centers(feats, ds.labels, c);
    const int k = default_metrics_k(c);
    MetricSnapshot snap;
    snap.epoch = epoch;
    snap.alignment = alignment(classes);
    snap.uniformity = uniformity(centers);
    snap.neighborhood = neighborhood_uniformity(centers, k);
    snap.reasonability = reasonability(centers, ds.hierarchy, k);
    return snap;
}

void validate_train_inputs(const LongTailDataset& ds, const TrainConfig& cfg,
                           const TargetSet* targets) {
    if (ds.samples.empty()) throw ValidationError("training: dataset is empty");
    if (ds.num_classes() < 2) throw ValidationError("training: need at least two classes");
    if (cfg.widths.size() < 2)
        throw ValidationError("training: need at least input and output widths");
    if (cfg.widths.front() != ds.input_dim())
        throw ValidationError("training: first width must match the input dimension");
    if (cfg.epochs < 1) throw ValidationError("training: epochs must be at least 1");
    if (cfg.warmup_fraction < 0.0 || cfg.warmup_fraction > 1.0)
        throw ValidationError("training: warmup fraction must lie in [0, 1]");
    if (cfg.batch_size < 2) throw ValidationError("training: batch size must be at least 2");
    if (cfg.log_interval < 0) throw ValidationError("training: log interval must be >= 0");
    if (cfg.method == Method::kcl) {
        if (targets != nullptr) throw ValidationError("training: kcl takes no target set");
    } else {
        if (targets == nullptr) throw ValidationError("training: this method needs targets");
        if (targets->num_classes() != ds.num_classes())
            throw ValidationError("training: need exactly one target per class");
        if (targets->dim() != cfg.widths.back())
            throw ValidationError("training: target dimension must match the embedding");
    }
    if (cfg.log_interval > 0 && ds.hierarchy.num_classes != ds.num_classes())
        throw ValidationError("training: metric snapshots need the class hierarchy");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << content;
    if (!out) throw ValidationError("failed writing " + path);
}

} // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::kcl: return "kcl";
        case Method::tsc: return "tsc";
        case Method::tsc_random: return "tsc-random";
    }
    throw ValidationError("unknown method");
}

Method parse_method(const std::string& name) {
    if (name == "kcl") return Method::kcl;
    if (name == "tsc") return Method::tsc;
    if (name == "tsc-random") return Method::tsc_random;
    throw ValidationError("unknown method: " + name);
}

LongTailDataset build_dataset(const DataConfig& dc) {
    const std::vector<int> counts = longtail_counts(dc.n_max, dc.rho, dc.num_classes);
    HierarchyTree tree = generate_hierarchy(dc.num_classes, dc.branching, dc.seed);
    return generate_dataset(dc.num_classes, dc.input_dim, counts, tree, dc.noise_sigma,
                            dc.seed, dc.test_per_class);
}

TrainResult train_representation(const LongTailDataset& ds, const TrainConfig& cfg,
                                 const TargetSet* targets) {
    validate_train_inputs(ds, cfg, targets);
    const int n = static_cast<int>(ds.samples.size());
    const int num_classes = ds.num_classes();
    const int iters_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int warmup_epochs =
        cfg.method == Method::kcl
            ? cfg.epochs
            : std::min<int>(cfg.epochs,
                            static_cast<int>(std::llround(cfg.warmup_fraction * cfg.epochs)));

    TrainResult result;
    result.net = make_mlp(cfg.widths, cfg.seed);
    result.record.warmup_epochs = warmup_epochs;
    SgdState opt = make_sgd_state(result.net);
    SgdConfig opt_cfg;
    opt_cfg.learning_rate = cfg.learning_rate;
    opt_cfg.momentum = cfg.momentum;
    opt_cfg.total_steps = cfg.epochs * iters_per_epoch;

    Rng order_rng(Rng::mix2(cfg.seed, kOrderTag));
    Rng augment_rng(Rng::mix2(cfg.seed, kAugmentTag));
    const std::uint64_t positive_base =
        Rng::mix2(Rng::mix2(cfg.seed, kPositiveTag), cfg.loss.positive_sampling_seed);

    CenterTracker tracker(num_classes, cfg.widths.back(), cfg.center_keep);
    Assignment assignment;
    bool assigned = false;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    int global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Targets come online once the warm-up share of the epochs has run:
        // centers start from a full pass, then the first matching is made.
        if (!assigned && cfg.method != Method::kcl && epoch == warmup_epochs) {
            Mat feats = encode_all(result.net, ds.samples, cfg.batch_size);
            tracker.update(batch_class_centers(feats, ds.labels));
            if (!tracker.all_initialized())
                throw OptimizationError(
                    "training: a class center is still uninitialized at warm-up end; "
                    "use a longer warm-up");
            if (cfg.method == Method::tsc) {
                assignment = assign_targets(tracker, *targets);
            } else {
                Rng sigma_rng(Rng::mix2(cfg.seed, kSigmaTag));
                assignment.sigma.resize(num_classes);
                std::iota(assignment.sigma.begin(), assignment.sigma.end(), 0);
                for (int i = num_classes - 1; i > 0; --i) {
                    const int j = static_cast<int>(sigma_rng.next_below(i + 1));
                    std::swap(assignment.sigma[i], assignment.sigma[j]);
                }
                assignment.cost = fixed_assignment_cost(tracker, *targets, assignment.sigma);
            }
            assigned = true;
        }

        // Uniform instance sampling: fresh shuffle, consecutive batches.
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(order_rng.next_below(i + 1));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        for (int iter = 0; iter < iters_per_epoch; ++iter, ++global_step) {
            const int start = iter * cfg.batch_size;
            const int stop = std::min(n, start + cfg.batch_size);
            FeatureBatch batch;
            Mat inputs;
            for (int i = start; i < stop; ++i) {
                inputs.push_back(ds.samples[order[i]]);
                batch.labels.push_back(ds.labels[order[i]]);
                batch.ids.push_back(static_cast<std::uint64_t>(order[i]));
            }
            const Mat aug_inputs = augment_inputs(inputs, cfg.augment_sigma, augment_rng);
            ForwardCache cache = forward(result.net, inputs);
            ForwardCache aug_cache = forward(result.net, aug_inputs);
            batch.features = cache.features;
            batch.aug_features = aug_cache.features;

            LossConfig loss_cfg = cfg.loss;
            loss_cfg.positive_sampling_seed = Rng::mix2(positive_base, global_step);
            LossResult loss;
            if (assigned)
                loss = tsc_loss(batch, *targets, assignment, loss_cfg);
            else
                loss = kcl_loss(batch, loss_cfg);
            loss_sum += loss.value;

            Gradients grads = backward(result.net, cache, loss.grad_features);
            add_gradients(grads, backward(result.net, aug_cache, loss.grad_aug_features));
            sgd_step(result.net, opt, grads, opt_cfg);

            if (assigned) {
                tracker.update(batch_class_centers(batch.features, batch.labels));
                if (cfg.method == Method::tsc)
                    assignment = assign_targets(tracker, *targets);
                else
                    assignment.cost =
                        fixed_assignment_cost(tracker, *targets, assignment.sigma);
            }
        }
        result.record.epoch_loss.push_back(loss_sum / iters_per_epoch);
        if (assigned) {
            result.record.assignment_cost.push_back(assignment.cost);
            result.record.assignment_history.push_back(assignment.sigma);
        }
        if (cfg.log_interval > 0 &&
            ((epoch + 1) % cfg.log_interval == 0 || epoch + 1 == cfg.epochs))
            result.record.snapshots.push_back(take_snapshot(epoch + 1, result.net, ds));
    }
    result.assignment = assignment;
    return result;
}

EvalResult evaluate_encoder(const Mlp& net, const LongTailDataset& ds, int metrics_k,
                            const ClassifierConfig& probe) {
    if (ds.test_samples.empty())
        throw ValidationError("evaluation: dataset has no test split");
    if (ds.hierarchy.num_classes != ds.num_classes())
        throw ValidationError("evaluation: dataset lacks a class hierarchy");
    const int c = ds.num_classes();
    const Mat train_feats = encode_all(net, ds.samples, 256);
    const Mat test_feats = encode_all(net, ds.test_samples, 256);
    const LinearClassifier clf = train_classifier(train_feats, ds.labels, c, probe);
    const std::vector<int> pred = classify(clf, test_feats);

    std::vector<double> correct(c, 0.0), totals(c, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        totals[ds.test_labels[i]] += 1.0;
        if (pred[i] == ds.test_labels[i]) correct[ds.test_labels[i]] += 1.0;
    }
    EvalResult out;
    out.per_class_accuracy.resize(c);
    double acc_sum = 0.0;
    for (int y = 0; y < c; ++y) {
        if (totals[y] == 0.0)
            throw ValidationError("evaluation: test split misses a class");
        out.per_class_accuracy[y] = correct[y] / totals[y];
        acc_sum += out.per_class_accuracy[y];
    }
    out.accuracy = acc_sum / static_cast<double>(c);
    out.report = compute_report(test_feats, ds.test_labels, ds.counts, ds.hierarchy,
                                metrics_k, out.per_class_accuracy);
    return out;
}

void save_run(const std::string& dir, const TrainConfig& tc, const DataConfig& dc,
              const TrainResult& result, const TargetSet* targets) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ostringstream cfg;
    cfg << "method " << method_name(tc.method) << "\n";
    cfg << "widths";
    for (int w : tc.widths) cfg << ' ' << w;
    cfg << "\n";
    cfg << "epochs " << tc.epochs << "\n";
    cfg << "warmup_fraction " << format_double(tc.warmup_fraction) << "\n";
    cfg << "batch_size " << tc.batch_size << "\n";
    cfg << "k " << tc.loss.k << "\n";
    cfg << "lambda " << format_double(tc.loss.lambda) << "\n";
    cfg << "tau " << format_double(tc.loss.tau) << "\n";
    cfg << "positive_sampling_seed " << tc.loss.positive_sampling_seed << "\n";
    cfg << "divide_by_k_plus_one " << int(tc.loss.divide_by_k_plus_one) << "\n";
    cfg << "targets_in_denominator " << int(tc.loss.targets_in_denominator) << "\n";
    cfg << "learning_rate " << format_double(tc.learning_rate) << "\n";
    cfg << "momentum " << format_double(tc.momentum) << "\n";
    cfg << "center_keep " << format_double(tc.center_keep) << "\n";
    cfg << "augment_sigma " << format_double(tc.augment_sigma) << "\n";
    cfg << "log_interval " << tc.log_interval << "\n";
    cfg << "seed " << tc.seed << "\n";
    cfg << "data_classes " << dc.num_classes << "\n";
    cfg << "data_input_dim " << dc.input_dim << "\n";
    cfg << "data_n_max " << dc.n_max << "\n";
    cfg << "data_rho " << format_double(dc.rho) << "\n";
    cfg << "data_branching " << dc.branching << "\n";
    cfg << "data_noise_sigma " << format_double(dc.noise_sigma) << "\n";
    cfg << "data_test_per_class " << dc.test_per_class << "\n";
    cfg << "data_seed " << dc.seed << "\n";
    write_text(dir + "/config.txt", cfg.str());

    save_mlp(result.net, dir + "/checkpoint.txt");
    if (targets != nullptr) {
        save_targets(*targets, dir + "/targets.txt");
        if (!result.assignment.sigma.empty())
            save_assignment(result.assignment, dir + "/assignment.txt");
    }

    const RunRecord& rec = result.record;
    std::ostringstream hist;
    hist << "epoch,loss,assignment_cost\n";
    for (std::size_t e = 0; e < rec.epoch_loss.size(); ++e) {
        hist << (e + 1) << ',' << format_double(rec.epoch_loss[e]) << ',';
        const std::size_t w = static_cast<std::size_t>(rec.warmup_epochs);
        if (e >= w && e - w < rec.assignment_cost.size())
            hist << format_double(rec.assignment_cost[e - w]);
        else
            hist << "nan";
        hist << "\n";
    }
    write_text(dir + "/history.csv", hist.str());

    if (!rec.snapshots.empty()) {
        std::ostringstream snap;
        snap << "epoch,A,U,Uk,R\n";
        for (const MetricSnapshot& s : rec.snapshots)
            snap << s.epoch << ',' << format_double(s.alignment) << ','
                 << format_double(s.uniformity) << ',' << format_double(s.neighborhood)
                 << ',' << format_double(s.reasonability) << "\n";
        write_text(dir + "/snapshots.csv", snap.str());
    }
}

LoadedRun load_run(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(dir + "/config.txt");
    if (!in) throw ValidationError("run directory: missing config.txt");

    LoadedRun run;
    static const char* required[] = {
        "method",        "widths",        "epochs",
        "warmup_fraction", "batch_size",  "k",
        "lambda",        "tau",           "positive_sampling_seed",
        "divide_by_k_plus_one", "targets_in_denominator", "learning_rate",
        "momentum",      "center_keep",   "augment_sigma",
        "log_interval",  "seed",          "data_classes",
        "data_input_dim", "data_n_max",   "data_rho",
        "data_branching", "data_noise_sigma", "data_test_per_class",
        "data_seed"};
    std::vector<std::string> seen;

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        const auto bad = [&]() {
            return ValidationError("run config: bad value for " + key);
        };
        if (key == "method") {
            std::string v;
            if (!(ls >> v)) throw bad();
            run.train.method = parse_method(v);
        } else if (key == "widths") {
            run.train.widths.clear();
            int w;
            while (ls >> w) run.train.widths.push_back(w);
            if (run.train.widths.size() < 2) throw bad();
        } else if (key == "epochs") {
            if (!(ls >> run.train.epochs)) throw bad();
        } else if (key == "warmup_fraction") {
            if (!(ls >> run.train.warmup_fraction)) throw bad();
        } else if (key == "batch_size") {
            if (!(ls >> run.train.batch_size)) throw bad();
        } else if (key == "k") {
            if (!(ls >> run.train.loss.k)) throw bad();
        } else if (key == "lambda") {
            if (!(ls >> run.train.loss.lambda)) throw bad();
        } else if (key == "tau") {
            if (!(ls >> run.train.loss.tau)) throw bad();
        } else if (key == "positive_sampling_seed") {
            if (!(ls >> run.train.loss.positive_sampling_seed)) throw bad();
        } else if (key == "divide_by_k_plus_one") {
            int v;
            if (!(ls >> v)) throw bad();
            run.train.loss.divide_by_k_plus_one = v != 0;
        } else if (key == "targets_in_denominator") {
            int v;
            if (!(ls >> v)) throw bad();
            run.train.loss.targets_in_denominator = v != 0;
        } else if (key == "learning_rate") {
            if (!(ls >> run.train.learning_rate)) throw bad();
        } else if (key == "momentum") {
            if (!(ls >> run.train.momentum)) throw bad();
        } else if (key == "center_keep") {
            if (!(ls >> run.train.center_keep)) throw bad();
        } else if (key == "augment_sigma") {
            if (!(ls >> run.train.augment_sigma)) throw bad();
        } else if (key == "log_interval") {
            if (!(ls >> run.train.log_interval)) throw bad();
        } else if (key == "seed") {
            if (!(ls >> run.train.seed)) throw bad();
        } else if (key == "data_classes") {
            if (!(ls >> run.data.num_classes)) throw bad();
        } else if (key == "data_input_dim") {
            if (!(ls >> run.data.input_dim)) throw bad();
        } else if (key == "data_n_max") {
            if (!(ls >> run.data.n_max)) throw bad();
        } else if (key == "data_rho") {
            if (!(ls >> run.data.rho)) throw bad();
        } else if (key == "data_branching") {
            if (!(ls >> run.data.branching)) throw bad();
        } else if (key == "data_noise_sigma") {
            if (!(ls >> run.data.noise_sigma)) throw bad();
        } else if (key == "data_test_per_class") {
            if (!(ls >> run.data.test_per_class)) throw bad();
        } else if (key == "data_seed") {
            if (!(ls >> run.data.seed)) throw bad();
        } else {
            throw ValidationError("run config: unknown key " + key);
        }
        seen.push_back(key);
    }
    for (const char* key : required)
        if (std::find(seen.begin(), seen.end(), key) == seen.end())
            throw ValidationError(std::string("run config: missing key ") + key);

    run.net = load_mlp(dir + "/checkpoint.txt");
    if (run.net.widths != run.train.widths)
        throw ValidationError("run directory: checkpoint widths do not match the config");

    const std::string targets_path = dir + "/targets.txt";
    if (fs::exists(targets_path)) run.targets = load_targets(targets_path);
    if (run.train.method != Method::kcl && run.targets.points.empty())
        throw ValidationError("run directory: this method requires targets.txt");
    const std::string assignment_path = dir + "/assignment.txt";
    if (fs::exists(assignment_path)) run.assignment = load_assignment(assignment_path);
    return run;
}

} // namespace tsc
