#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "tsc/errors.hpp"
#include "tsc/trainer.hpp"

using namespace tsc;
using namespace tsc::testing;

namespace {

DataConfig small_data() {
    DataConfig dc;
    dc.num_classes = 4;
    dc.input_dim = 6;
    dc.n_max = 40;
    dc.rho = 4.0;
    dc.branching = 2;
    dc.noise_sigma = 0.1;
    dc.test_per_class = 8;
    dc.seed = 3;
    return dc;
}

TrainConfig small_train(Method m) {
    TrainConfig tc;
    tc.method = m;
    tc.widths = {6, 16, 2};
    tc.epochs = 6;
    tc.warmup_fraction = 0.5;
    tc.batch_size = 32;
    tc.loss.k = 3;
    tc.loss.tau = 0.2;
    tc.learning_rate = 0.05;
    tc.seed = 11;
    return tc;
}

TargetSet circle_targets(int c) {
    TargetSet ts;
    ts.points = unit_circle_points(c);
    ts.tau = 0.07;
    ts.initial_energy = uniformity_energy(ts.points, ts.tau);
    ts.final_energy = ts.initial_energy;
    return ts;
}

bool same_net(const Mlp& a, const Mlp& b) {
    return a.widths == b.widths && a.weights == b.weights && a.biases == b.biases;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("kcl never assigns and ignores lambda") {
    LongTailDataset ds = build_dataset(small_data());
    TrainConfig tc = small_train(Method::kcl);
    tc.loss.lambda = 0.2;
    TrainResult a = train_representation(ds, tc, nullptr);
    CHECK(a.record.epoch_loss.size() == 6);
    CHECK(a.record.assignment_cost.empty());
    CHECK(a.record.assignment_history.empty());
    CHECK(a.assignment.sigma.empty());
    CHECK(a.record.warmup_epochs == 6);
    for (double l : a.record.epoch_loss) CHECK(std::isfinite(l));

    tc.loss.lambda = 0.9;
    TrainResult b = train_representation(ds, tc, nullptr);
    CHECK(same_net(a.net, b.net));
    CHECK(a.record.epoch_loss == b.record.epoch_loss);
}

TEST_CASE("training is bit-reproducible") {
    LongTailDataset ds = build_dataset(small_data());
    TargetSet targets = circle_targets(4);
    TrainConfig tc = small_train(Method::tsc);
    TrainResult a = train_representation(ds, tc, &targets);
    TrainResult b = train_representation(ds, tc, &targets);
    CHECK(same_net(a.net, b.net));
    CHECK(a.record.epoch_loss == b.record.epoch_loss);
    CHECK(a.record.assignment_cost == b.record.assignment_cost);
    CHECK(a.record.assignment_history == b.record.assignment_history);

    TrainConfig other = tc;
    other.seed = 12;
    TrainResult c = train_representation(ds, other, &targets);
    CHECK_FALSE(same_net(a.net, c.net));
}

TEST_CASE("a full warmup never activates the targets") {
    LongTailDataset ds = build_dataset(small_data());
    TargetSet targets = circle_targets(4);
    TrainConfig tc = small_train(Method::tsc);
    tc.warmup_fraction = 1.0;
    TrainResult tsc_run = train_representation(ds, tc, &targets);

    TrainConfig kc = tc;
    kc.method = Method::kcl;
    TrainResult kcl_run = train_representation(ds, kc, nullptr);

    CHECK(same_net(tsc_run.net, kcl_run.net));
    CHECK(tsc_run.record.epoch_loss == kcl_run.record.epoch_loss);
    CHECK(tsc_run.record.assignment_cost.empty());
    CHECK(tsc_run.assignment.sigma.empty());
}

TEST_CASE("zero lambda with bare denominators reduces to kcl bit-exactly") {
    LongTailDataset ds = build_dataset(small_data());
    TargetSet targets = circle_targets(4);
    TrainConfig tc = small_train(Method::tsc);
    tc.loss.lambda = 0.0;
    tc.loss.targets_in_denominator = false;
    TrainResult reduced = train_representation(ds, tc, &targets);

    TrainConfig kc = tc;
    kc.method = Method::kcl;
    TrainResult plain = train_representation(ds, kc, nullptr);

    CHECK(same_net(reduced.net, plain.net));
    CHECK(reduced.record.epoch_loss == plain.record.epoch_loss);
    // The reduced run still tracks its (inert) assignment.
    CHECK(reduced.record.assignment_cost.size() == 3);
}

TEST_CASE("random assignment is a frozen seeded permutation") {
    LongTailDataset ds = build_dataset(small_data());
    TargetSet targets = circle_targets(4);
    TrainConfig tc = small_train(Method::tsc_random);
    tc.warmup_fraction = 1.0 / 3.0;
    TrainResult run = train_representation(ds, tc, &targets);

    REQUIRE(run.record.assignment_history.size() == 4);
    const std::vector<int>& sigma = run.record.assignment_history.front();
    std::set<int> values(sigma.begin(), sigma.end());
    CHECK(values == std::set<int>{0, 1, 2, 3});
    for (const auto& s : run.record.assignment_history) CHECK(s == sigma);
    CHECK(run.assignment.sigma == sigma);
    CHECK(run.record.assignment_cost.size() == 4);
    for (double c : run.record.assignment_cost) CHECK(std::isfinite(c));
}

TEST_CASE("costs and snapshots appear only after the warmup boundary") {
    LongTailDataset ds = build_dataset(small_data());
    TargetSet targets = circle_targets(4);
    TrainConfig tc = small_train(Method::tsc);
    tc.log_interval = 2;
    TrainResult run = train_representation(ds, tc, &targets);

    CHECK(run.record.warmup_epochs == 3);
    CHECK(run.record.assignment_cost.size() == 3);
    REQUIRE(run.record.snapshots.size() == 3);
    CHECK(run.record.snapshots[0].epoch == 2);
    CHECK(run.record.snapshots[1].epoch == 4);
    CHECK(run.record.snapshots[2].epoch == 6);
    for (const MetricSnapshot& s : run.record.snapshots) {
        CHECK(std::isfinite(s.alignment));
        CHECK(s.uniformity > 0.0);
        CHECK(s.neighborhood <= s.uniformity + 1e-12);
        CHECK(s.reasonability >= 2.0); // leaf distances in a proper tree are >= 2
    }
}

TEST_CASE("the assignment cost decreases over an easy run") {
    DataConfig dc = small_data();
    dc.noise_sigma = 0.05;
    LongTailDataset ds = build_dataset(dc);
    TargetSet targets = circle_targets(4);
    TrainConfig tc = small_train(Method::tsc);
    tc.epochs = 30;
    tc.warmup_fraction = 0.5;
    tc.loss.tau = 0.07;
    tc.loss.lambda = 0.2;
    tc.learning_rate = 0.03;
    TrainResult run = train_representation(ds, tc, &targets);
    REQUIRE(run.record.assignment_cost.size() == 15);
    CHECK(run.record.assignment_cost.back() < run.record.assignment_cost.front());
}

TEST_CASE("evaluation scores a noiseless toy perfectly") {
    DataConfig dc;
    dc.num_classes = 3;
    dc.input_dim = 5;
    dc.n_max = 30;
    dc.rho = 3.0;
    dc.noise_sigma = 0.0; // every sample sits exactly on its prototype
    dc.test_per_class = 10;
    dc.seed = 7;
    LongTailDataset ds = build_dataset(dc);

    Mlp net = make_mlp({5, 8, 2}, 2);
    ClassifierConfig probe;
    probe.steps = 300;
    probe.seed = 5;
    EvalResult ev = evaluate_encoder(net, ds, 1, probe);
    CHECK(ev.accuracy == 1.0);
    CHECK(ev.per_class_accuracy == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(ev.report.all.accuracy == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ev.report.all.alignment == 0.0); // identical features per class
    CHECK(ev.report.all.uniformity > 0.0);
    CHECK(ev.report.neighborhood_k == 1);

    LongTailDataset no_test = ds;
    no_test.test_samples.clear();
    no_test.test_labels.clear();
    CHECK_THROWS_AS(evaluate_encoder(net, no_test, 1, probe), ValidationError);
}

TEST_CASE("run directories round-trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "tsc_run_test";
    fs::remove_all(dir);

    DataConfig dc = small_data();
    LongTailDataset ds = build_dataset(dc);
    TargetSet targets = circle_targets(4);
    TrainConfig tc = small_train(Method::tsc);
    tc.log_interval = 3;
    TrainResult result = train_representation(ds, tc, &targets);
    save_run(dir.string(), tc, dc, result, &targets);

    for (const char* name : {"config.txt", "checkpoint.txt", "targets.txt",
                             "assignment.txt", "history.csv", "snapshots.csv"})
        CHECK(fs::exists(dir / name));

    std::ifstream hist(dir / "history.csv");
    std::string line;
    std::getline(hist, line);
    CHECK(line == "epoch,loss,assignment_cost");
    std::getline(hist, line);
    CHECK(line.find(",nan") != std::string::npos); // warmup epoch has no assignment

    LoadedRun back = load_run(dir.string());
    CHECK(back.train.method == Method::tsc);
    CHECK(back.train.widths == tc.widths);
    CHECK(back.train.epochs == tc.epochs);
    CHECK(back.train.warmup_fraction == tc.warmup_fraction);
    CHECK(back.train.loss.k == tc.loss.k);
    CHECK(back.train.loss.lambda == tc.loss.lambda);
    CHECK(back.train.loss.tau == tc.loss.tau);
    CHECK(back.train.seed == tc.seed);
    CHECK(back.data.num_classes == dc.num_classes);
    CHECK(back.data.rho == dc.rho);
    CHECK(back.data.seed == dc.seed);
    CHECK(same_net(back.net, result.net));
    CHECK(back.targets.points == targets.points);
    CHECK(back.assignment.sigma == result.assignment.sigma);

    // The stored data config regenerates the identical dataset.
    LongTailDataset again = build_dataset(back.data);
    CHECK(again.samples == ds.samples);
    CHECK(again.test_samples == ds.test_samples);

    SUBCASE("unknown keys are rejected") {
        std::ofstream cfg(dir / "config.txt", std::ios::app);
        cfg << "mystery 1\n";
        cfg.close();
        CHECK_THROWS_AS(load_run(dir.string()), ValidationError);
    }
    SUBCASE("missing targets for a tsc run are rejected") {
        fs::remove(dir / "targets.txt");
        CHECK_THROWS_AS(load_run(dir.string()), ValidationError);
    }
    SUBCASE("missing config is rejected") {
        fs::remove(dir / "config.txt");
        CHECK_THROWS_AS(load_run(dir.string()), ValidationError);
    }
    fs::remove_all(dir);
}

TEST_CASE("method names round-trip") {
    for (Method m : {Method::kcl, Method::tsc, Method::tsc_random})
        CHECK(parse_method(method_name(m)) == m);
    CHECK(method_name(Method::tsc_random) == "tsc-random");
    CHECK_THROWS_AS(parse_method("simclr"), ValidationError);
}

TEST_CASE("malformed training requests are rejected") {
    LongTailDataset ds = build_dataset(small_data());
    TargetSet targets = circle_targets(4);
    TrainConfig tc = small_train(Method::tsc);

    CHECK_THROWS_AS(train_representation(ds, tc, nullptr), ValidationError);
    TrainConfig kc = tc;
    kc.method = Method::kcl;
    CHECK_THROWS_AS(train_representation(ds, kc, &targets), ValidationError);

    TrainConfig bad = tc;
    bad.widths = {5, 16, 2}; // input width mismatch
    CHECK_THROWS_AS(train_representation(ds, bad, &targets), ValidationError);
    bad = tc;
    bad.warmup_fraction = 1.5;
    CHECK_THROWS_AS(train_representation(ds, bad, &targets), ValidationError);
    bad = tc;
    bad.epochs = 0;
    CHECK_THROWS_AS(train_representation(ds, bad, &targets), ValidationError);
    bad = tc;
    bad.batch_size = 1;
    CHECK_THROWS_AS(train_representation(ds, bad, &targets), ValidationError);
    bad = tc;
    bad.widths = {6, 16, 3}; // embedding width vs 2-d targets
    CHECK_THROWS_AS(train_representation(ds, bad, &targets), ValidationError);
    TargetSet five = circle_targets(5);
    CHECK_THROWS_AS(train_representation(ds, tc, &five), ValidationError);
}

} // TEST_SUITE
