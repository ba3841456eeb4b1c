#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsc/errors.hpp"
#include "tsc/trainer.hpp"

using namespace tsc;

namespace {

constexpr std::uint64_t kTargetSeedTag = 0x74617267ULL;
constexpr std::uint64_t kProbeSeedTag = 0x70726f62ULL;

struct CommonTrainArgs {
    // data
    int classes = 10;
    int d_in = 16;
    int n_max = 500;
    double rho = 100.0;
    int branching = 2;
    double noise = 0.1;
    int test_per_class = 50;
    // model
    int dim = 2;
    std::vector<int> hidden = {64, 64};
    // loss
    double lambda = 0.2;
    int k = 6;
    double tau = 0.07;
    bool no_target_negatives = false;
    bool fixed_divisor = false;
    // optimization
    int epochs = 200;
    double warmup_frac = 0.5;
    int batch = 128;
    double lr = 0.03;
    double momentum = 0.9;
    double center_keep = 0.9;
    double augment_sigma = 0.1;
    int log_interval = 0;
    std::uint64_t seed = 0;
};

void add_train_options(CLI::App* cmd, CommonTrainArgs& a) {
    cmd->add_option("--classes", a.classes, "number of classes");
    cmd->add_option("--d-in", a.d_in, "input dimension");
    cmd->add_option("--n-max", a.n_max, "largest class size");
    cmd->add_option("--rho", a.rho, "imbalance ratio (largest/smallest class)");
    cmd->add_option("--branching", a.branching, "hierarchy branching factor");
    cmd->add_option("--noise", a.noise, "sample noise around class prototypes");
    cmd->add_option("--test-per-class", a.test_per_class, "balanced test samples per class");
    cmd->add_option("--dim", a.dim, "embedding dimension");
    cmd->add_option("--hidden", a.hidden, "hidden layer widths")->delimiter(',');
    cmd->add_option("--lambda", a.lambda, "target pull weight");
    cmd->add_option("--k", a.k, "positives per anchor");
    cmd->add_option("--tau", a.tau, "temperature");
    cmd->add_flag("--no-target-negatives", a.no_target_negatives,
                  "keep targets out of the denominators");
    cmd->add_flag("--fixed-divisor", a.fixed_divisor,
                  "divide by k+1 even when fewer positives exist");
    cmd->add_option("--epochs", a.epochs, "training epochs");
    cmd->add_option("--warmup-frac", a.warmup_frac, "share of epochs before assignment");
    cmd->add_option("--batch", a.batch, "batch size");
    cmd->add_option("--lr", a.lr, "peak learning rate (cosine decayed)");
    cmd->add_option("--momentum", a.momentum, "SGD momentum");
    cmd->add_option("--center-keep", a.center_keep, "retained weight in running centers");
    cmd->add_option("--augment-sigma", a.augment_sigma, "second-view input noise");
    cmd->add_option("--log-interval", a.log_interval, "epochs between metric snapshots");
    cmd->add_option("--seed", a.seed, "master seed");
}

DataConfig data_config(const CommonTrainArgs& a) {
    DataConfig dc;
    dc.num_classes = a.classes;
    dc.input_dim = a.d_in;
    dc.n_max = a.n_max;
    dc.rho = a.rho;
    dc.branching = a.branching;
    dc.noise_sigma = a.noise;
    dc.test_per_class = a.test_per_class;
    dc.seed = a.seed;
    return dc;
}

TrainConfig train_config(const CommonTrainArgs& a, Method method) {
    TrainConfig tc;
    tc.method = method;
    tc.widths.clear();
    tc.widths.push_back(a.d_in);
    for (int h : a.hidden) tc.widths.push_back(h);
    tc.widths.push_back(a.dim);
    tc.epochs = a.epochs;
    tc.warmup_fraction = a.warmup_frac;
    tc.batch_size = a.batch;
    tc.loss.k = a.k;
    tc.loss.lambda = a.lambda;
    tc.loss.tau = a.tau;
    tc.loss.targets_in_denominator = !a.no_target_negatives;
    tc.loss.divide_by_k_plus_one = a.fixed_divisor;
    tc.learning_rate = a.lr;
    tc.momentum = a.momentum;
    tc.center_keep = a.center_keep;
    tc.augment_sigma = a.augment_sigma;
    tc.log_interval = a.log_interval;
    tc.seed = a.seed;
    return tc;
}

TargetSet make_targets(const CommonTrainArgs& a) {
    TargetGenConfig gc;
    gc.tau = a.tau;
    gc.seed = Rng::mix2(a.seed, kTargetSeedTag);
    return generate_targets(a.classes, a.dim, gc);
}

EvalResult run_eval(const Mlp& net, const LongTailDataset& ds, int metrics_k,
                    std::uint64_t seed, int probe_steps) {
    ClassifierConfig probe;
    probe.steps = probe_steps;
    probe.seed = Rng::mix2(seed, kProbeSeedTag);
    if (metrics_k <= 0) metrics_k = default_metrics_k(ds.num_classes());
    return evaluate_encoder(net, ds, metrics_k, probe);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << content;
}

int do_gen_targets(int classes, int dim, double tau, std::uint64_t seed, int iterations,
                   int restarts, const std::string& out_path) {
    TargetGenConfig gc;
    gc.tau = tau;
    gc.seed = seed;
    gc.iterations = iterations;
    gc.restarts = restarts;
    TargetSet ts = generate_targets(classes, dim, gc);
    save_targets(ts, out_path);
    std::printf("targets: C=%d d=%d tau=%g\n", classes, dim, tau);
    std::printf("energy: start %.6f final %.6f\n", ts.initial_energy, ts.final_energy);
    if (dim >= classes - 1) {
        SimplexReport rep = certify_simplex(ts, 1e-3);
        std::printf("simplex: expected inner %.6f, max deviation %.3g, center norm %.3g\n",
                    rep.expected_inner, rep.max_inner_deviation, rep.sum_norm);
    }
    std::printf("saved %s\n", out_path.c_str());
    return 0;
}

int do_train(const CommonTrainArgs& args, const std::string& method_str,
             const std::string& out_dir) {
    const Method method = parse_method(method_str);
    const DataConfig dc = data_config(args);
    const TrainConfig tc = train_config(args, method);
    LongTailDataset ds = build_dataset(dc);

    TargetSet targets;
    const bool with_targets = method != Method::kcl;
    if (with_targets) {
        targets = make_targets(args);
        std::printf("targets ready: final energy %.6f\n", targets.final_energy);
    }
    TrainResult result =
        train_representation(ds, tc, with_targets ? &targets : nullptr);
    save_run(out_dir, tc, dc, result, with_targets ? &targets : nullptr);

    std::printf("trained %s for %d epochs (warmup %d), final loss %.6f\n",
                method_str.c_str(), tc.epochs, result.record.warmup_epochs,
                result.record.epoch_loss.back());
    if (!result.record.assignment_cost.empty())
        std::printf("assignment cost: first %.6f final %.6f\n",
                    result.record.assignment_cost.front(),
                    result.record.assignment_cost.back());
    std::printf("run saved to %s\n", out_dir.c_str());
    return 0;
}

int do_eval(const std::string& run_dir, int metrics_k, int probe_steps) {
    LoadedRun run = load_run(run_dir);
    LongTailDataset ds = build_dataset(run.data);
    EvalResult ev = run_eval(run.net, ds, metrics_k, run.train.seed, probe_steps);
    write_file(run_dir + "/metrics.csv", ev.report.to_csv());
    std::fputs(ev.report.to_text().c_str(), stdout);
    std::printf("balanced accuracy %.6f\n", ev.accuracy);
    std::printf("wrote %s/metrics.csv\n", run_dir.c_str());
    return 0;
}

int do_ablate(const CommonTrainArgs& base, const std::string& param,
              const std::vector<double>& values, const std::string& out_path,
              int metrics_k, int probe_steps) {
    if (values.empty()) throw ValidationError("ablate: need at least one value");
    std::string csv = "param,value,A,U,Uk,R,acc\n";
    for (double v : values) {
        CommonTrainArgs args = base;
        if (param == "lambda") {
            args.lambda = v;
        } else if (param == "dim") {
            if (v < 2.0 || v != static_cast<int>(v))
                throw ValidationError("ablate: dim values must be integers >= 2");
            args.dim = static_cast<int>(v);
        } else if (param == "warmup") {
            args.warmup_frac = v;
        } else {
            throw ValidationError("ablate: param must be lambda, dim, or warmup");
        }
        const DataConfig dc = data_config(args);
        const TrainConfig tc = train_config(args, Method::tsc);
        LongTailDataset ds = build_dataset(dc);
        TargetSet targets = make_targets(args);
        TrainResult result = train_representation(ds, tc, &targets);
        EvalResult ev = run_eval(result.net, ds, metrics_k, tc.seed, probe_steps);
        char row[256];
        std::snprintf(row, sizeof(row), "%s,%g,%.6f,%.6f,%.6f,%.6f,%.6f\n", param.c_str(),
                      v, ev.report.all.alignment, ev.report.all.uniformity,
                      ev.report.all.neighborhood, ev.report.all.reasonability, ev.accuracy);
        csv += row;
        std::printf("%s=%g: U=%.4f Uk=%.4f R=%.4f acc=%.4f\n", param.c_str(), v,
                    ev.report.all.uniformity, ev.report.all.neighborhood,
                    ev.report.all.reasonability, ev.accuracy);
    }
    write_file(out_path, csv);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int do_plot_data(const std::string& run_dir) {
    LoadedRun run = load_run(run_dir);
    if (run.net.output_dim() != 2)
        throw ValidationError("plot-data: the run's embedding must be 2-d");
    LongTailDataset ds = build_dataset(run.data);

    ForwardCache cache = forward(run.net, ds.samples);
    std::string points;
    char line[128];
    for (std::size_t i = 0; i < cache.features.size(); ++i) {
        std::snprintf(line, sizeof(line), "%.10g %.10g %d\n", cache.features[i][0],
                      cache.features[i][1], ds.labels[i]);
        points += line;
    }
    write_file(run_dir + "/plot_points.txt", points);
    std::printf("wrote %s/plot_points.txt (%zu samples)\n", run_dir.c_str(),
                cache.features.size());

    if (!run.targets.points.empty()) {
        std::string centers;
        for (int c = 0; c < run.targets.num_classes(); ++c) {
            const int t = run.assignment.sigma.empty() ? c : run.assignment.sigma[c];
            std::snprintf(line, sizeof(line), "%d %.10g %.10g\n", c,
                          run.targets.points[t][0], run.targets.points[t][1]);
            centers += line;
        }
        write_file(run_dir + "/plot_targets.txt", centers);
        std::printf("wrote %s/plot_targets.txt\n", run_dir.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"targeted contrastive training on synthetic long-tailed data"};
    app.require_subcommand(1);

    // gen-targets
    CLI::App* gen = app.add_subcommand("gen-targets", "spread class targets on the sphere");
    int gen_classes = 10, gen_dim = 128, gen_iterations = 10000, gen_restarts = 8;
    double gen_tau = 0.07;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "targets.txt";
    gen->add_option("--classes", gen_classes, "number of targets")->required();
    gen->add_option("--dim", gen_dim, "sphere dimension")->required();
    gen->add_option("--tau", gen_tau, "energy temperature");
    gen->add_option("--seed", gen_seed, "seed");
    gen->add_option("--iterations", gen_iterations, "descent steps per restart");
    gen->add_option("--restarts", gen_restarts, "independent restarts");
    gen->add_option("--out", gen_out, "output file");

    // train
    CLI::App* train = app.add_subcommand("train", "two-stage contrastive training");
    CommonTrainArgs train_args;
    std::string train_method = "tsc";
    std::string train_out_dir;
    train->add_option("--method", train_method, "kcl, tsc, or tsc-random")->required();
    add_train_options(train, train_args);
    train->add_option("--out-dir", train_out_dir, "run directory")->required();

    // eval
    CLI::App* eval = app.add_subcommand("eval", "probe + metrics for a saved run");
    std::string eval_run;
    int eval_metrics_k = 0, eval_probe_steps = 200;
    eval->add_option("--run", eval_run, "run directory")->required();
    eval->add_option("--metrics-k", eval_metrics_k, "neighborhood size (0 = min(10, C-1))");
    eval->add_option("--probe-steps", eval_probe_steps, "linear probe steps");

    // ablate
    CLI::App* ablate = app.add_subcommand("ablate", "sweep one parameter, one run each");
    CommonTrainArgs ablate_args;
    std::string ablate_param;
    std::vector<double> ablate_values;
    std::string ablate_out = "ablate.csv";
    int ablate_metrics_k = 0, ablate_probe_steps = 200;
    ablate->add_option("--param", ablate_param, "lambda, dim, or warmup")->required();
    ablate->add_option("--values", ablate_values, "comma-separated values")
        ->required()
        ->delimiter(',');
    add_train_options(ablate, ablate_args);
    ablate->add_option("--out", ablate_out, "aggregated csv path");
    ablate->add_option("--metrics-k", ablate_metrics_k, "neighborhood size (0 = auto)");
    ablate->add_option("--probe-steps", ablate_probe_steps, "linear probe steps");

    // plot-data
    CLI::App* plot = app.add_subcommand("plot-data", "dump 2-d features and targets");
    std::string plot_run;
    plot->add_option("--run", plot_run, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed())
            return do_gen_targets(gen_classes, gen_dim, gen_tau, gen_seed, gen_iterations,
                                  gen_restarts, gen_out);
        if (train->parsed()) return do_train(train_args, train_method, train_out_dir);
        if (eval->parsed()) return do_eval(eval_run, eval_metrics_k, eval_probe_steps);
        if (ablate->parsed())
            return do_ablate(ablate_args, ablate_param, ablate_values, ablate_out,
                             ablate_metrics_k, ablate_probe_steps);
        if (plot->parsed()) return do_plot_data(plot_run);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const OptimizationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
