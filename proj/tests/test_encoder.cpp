#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "tsc/encoder.hpp"
#include "tsc/errors.hpp"
#include "tsc/losses.hpp"

using namespace tsc;
using namespace tsc::testing;

namespace {

Mat random_inputs(int n, int d, Rng& rng, double scale = 1.0) {
    Mat x(n);
    for (int i = 0; i < n; ++i) {
        x[i] = rng.normal_vector(d);
        for (double& v : x[i]) v *= scale;
    }
    return x;
}

double max_param_abs(const Gradients& g) {
    double m = 0.0;
    for (const Mat& w : g.d_weights)
        for (const Vec& row : w)
            for (double x : row) m = std::max(m, std::fabs(x));
    for (const Vec& b : g.d_biases)
        for (double x : b) m = std::max(m, std::fabs(x));
    return m;
}

} // namespace

TEST_SUITE("encoder") {

TEST_CASE("forward produces unit features deterministically") {
    Mlp net = make_mlp({8, 16, 16, 4}, 5);
    Rng rng(1);
    Mat x = random_inputs(100, 8, rng);
    ForwardCache a = forward(net, x);
    ForwardCache b = forward(net, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(std::fabs(norm(a.features[i]) - 1.0) < 1e-12);
        for (int j = 0; j < 4; ++j) CHECK(a.features[i][j] == b.features[i][j]);
    }
}

TEST_CASE("identity single layer passes unit inputs through") {
    Mlp net;
    net.widths = {3, 3};
    net.weights = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    net.biases = {{0, 0, 0}};
    ForwardCache c = forward(net, {{0, 1, 0}, {0.6, 0.8, 0}});
    CHECK(c.features[0] == Vec{0, 1, 0});
    for (int j = 0; j < 3; ++j)
        CHECK(std::fabs(c.features[1][j] - Vec{0.6, 0.8, 0}[j]) < 1e-15);
}

TEST_CASE("all-zero net cannot produce a feature direction") {
    Mlp net;
    net.widths = {3, 2};
    net.weights = {{{0, 0, 0}, {0, 0, 0}}};
    net.biases = {{0, 0}};
    CHECK_THROWS_AS(forward(net, {{1.0, 2.0, 3.0}}), OptimizationError);
}

TEST_CASE("malformed nets and inputs are rejected") {
    CHECK_THROWS_AS(make_mlp({5}, 0), ValidationError);
    CHECK_THROWS_AS(make_mlp({0, 3}, 0), ValidationError);
    Mlp net = make_mlp({4, 3}, 1);
    CHECK_THROWS_AS(forward(net, {{1.0, 2.0}}), ValidationError);
    CHECK_THROWS_AS(forward(net, Mat{}), ValidationError);
    net.weights[0][1].pop_back();
    CHECK_THROWS_AS(forward(net, {{1.0, 2.0, 3.0, 4.0}}), ValidationError);
}

TEST_CASE("parameter count follows the widths") {
    Mlp net = make_mlp({8, 16, 16, 4}, 7);
    CHECK(param_count(net) == (8 + 1) * 16 + (16 + 1) * 16 + (16 + 1) * 4);
    int stored = 0;
    for (int l = 0; l < net.num_layers(); ++l) {
        for (const Vec& row : net.weights[l]) stored += static_cast<int>(row.size());
        stored += static_cast<int>(net.biases[l].size());
    }
    CHECK(stored == param_count(net));
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    Mlp net = make_mlp({5, 7, 3}, 11);
    Rng rng(2);
    ForwardCache c = forward(net, random_inputs(4, 5, rng));
    Gradients g = backward(net, c, Mat(4, Vec(3, 0.0)));
    CHECK(max_param_abs(g) == 0.0);
}

TEST_CASE("single linear layer matches the hand-derived gradient") {
    Rng rng(3);
    Mlp net = make_mlp({4, 3}, 13);
    Vec x = rng.normal_vector(4);
    Vec t = normalized(rng.normal_vector(3));
    ForwardCache c = forward(net, {x});

    // Quadratic probe 0.5*|v - t|^2 on the unit feature v = u/|u|, u = Wx + b.
    Vec upstream = c.features[0];
    axpy(-1.0, t, upstream);
    Gradients g = backward(net, c, {upstream});

    Vec u(3, 0.0);
    for (int o = 0; o < 3; ++o) u[o] = net.biases[0][o] + dot(net.weights[0][o], x);
    Vec gu = through_normalization(upstream, normalized(u), norm(u));
    for (int o = 0; o < 3; ++o) {
        CHECK(std::fabs(g.d_biases[0][o] - gu[o]) < 1e-12);
        for (int j = 0; j < 4; ++j)
            CHECK(std::fabs(g.d_weights[0][o][j] - gu[o] * x[j]) < 1e-12);
    }
}

TEST_CASE("end-to-end parameter gradients match finite differences") {
    struct Setup {
        std::vector<int> widths;
        int n;
        double lambda, tau;
        bool targeted;
    };
    const Setup setups[] = {
        {{4, 6, 3}, 5, 0.0, 0.3, false},
        {{5, 8, 8, 2}, 6, 0.3, 0.07, true},
        {{3, 5, 4}, 4, 1.0, 0.2, true},
    };
    int idx = 0;
    for (const Setup& s : setups) {
        CAPTURE(idx);
        Rng rng(40 + idx);
        Mlp net = make_mlp(s.widths, 900 + static_cast<std::uint64_t>(idx));
        const int d_in = s.widths.front();
        const int d_out = s.widths.back();
        Mat x = random_inputs(s.n, d_in, rng);
        Mat x_aug = x;
        for (Vec& row : x_aug)
            for (double& v : row) v += 0.1 * rng.normal();
        std::vector<int> labels;
        for (int i = 0; i < s.n; ++i) labels.push_back(i % 2);
        TargetSet ts;
        ts.points = random_unit_rows(2, d_out, rng);
        ts.tau = s.tau;
        Assignment asg;
        asg.sigma = {0, 1};
        LossConfig cfg;
        cfg.k = 2;
        cfg.lambda = s.lambda;
        cfg.tau = s.tau;

        auto run = [&] {
            ForwardCache c1 = forward(net, x);
            ForwardCache c2 = forward(net, x_aug);
            FeatureBatch b;
            b.features = c1.features;
            b.aug_features = c2.features;
            b.labels = labels;
            LossResult loss =
                s.targeted ? tsc_loss(b, ts, asg, cfg) : kcl_loss(b, cfg);
            Gradients g = backward(net, c1, loss.grad_features);
            add_gradients(g, backward(net, c2, loss.grad_aug_features));
            return std::make_pair(loss.value, std::move(g));
        };
        auto f = [&] { return run().first; };
        Gradients analytic = run().second;

        for (int l = 0; l < net.num_layers(); ++l) {
            CHECK(max_grad_rel_err(f, net.weights[l], analytic.d_weights[l]) < 1e-4);
            for (std::size_t o = 0; o < net.biases[l].size(); ++o) {
                const double fd = central_diff(f, net.biases[l][o]);
                CHECK(rel_err(analytic.d_biases[l][o], fd) < 1e-4);
            }
        }
        ++idx;
    }
}

TEST_CASE("cosine schedule starts at base and decays to zero") {
    CHECK(cosine_lr(0.1, 0, 100) == 0.1);
    CHECK(std::fabs(cosine_lr(0.1, 100, 100)) < 1e-16);
    CHECK(cosine_lr(0.1, 50, 100) == doctest::Approx(0.05).epsilon(1e-12));
    double prev = cosine_lr(0.1, 0, 100);
    for (int t = 1; t <= 100; ++t) {
        const double cur = cosine_lr(0.1, t, 100);
        CHECK(cur < prev);
        prev = cur;
    }
    CHECK(cosine_lr(0.1, 200, 100) == cosine_lr(0.1, 100, 100)); // clamped
    CHECK_THROWS_AS(cosine_lr(0.1, 0, 0), ValidationError);
}

TEST_CASE("training steps are bit-reproducible") {
    auto train_once = [] {
        Mlp net = make_mlp({4, 6, 3}, 21);
        SgdState state = make_sgd_state(net);
        SgdConfig cfg;
        cfg.learning_rate = 0.05;
        cfg.total_steps = 30;
        Rng rng(77);
        Mat x = random_inputs(6, 4, rng);
        Vec t = normalized(rng.normal_vector(3));
        for (int step = 0; step < 30; ++step) {
            ForwardCache c = forward(net, x);
            Mat upstream(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                upstream[i] = c.features[i];
                axpy(-1.0, t, upstream[i]);
            }
            sgd_step(net, state, backward(net, c, upstream), cfg);
        }
        return net;
    };
    Mlp a = train_once();
    Mlp b = train_once();
    for (int l = 0; l < a.num_layers(); ++l) {
        CHECK(a.weights[l] == b.weights[l]);
        CHECK(a.biases[l] == b.biases[l]);
    }
    SgdConfig bad;
    bad.momentum = 1.0;
    Mlp net = make_mlp({2, 2}, 0);
    SgdState st = make_sgd_state(net);
    CHECK_THROWS_AS(sgd_step(net, st, zero_gradients(net), bad), ValidationError);
}

TEST_CASE("linear probe separates a separable toy") {
    Rng rng(31);
    Mat features;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        Vec a = normalized(Vec{1.0, 0.1 * rng.normal()});
        Vec b = normalized(Vec{-1.0, 0.1 * rng.normal()});
        features.push_back(a);
        labels.push_back(0);
        features.push_back(b);
        labels.push_back(1);
    }
    ClassifierConfig cfg;
    LinearClassifier clf = train_classifier(features, labels, 2, cfg);
    std::vector<int> pred = classify(clf, features);
    CHECK(pred == labels);
}

TEST_CASE("balanced draws equalize classes that instance draws skew") {
    const std::vector<int> counts = {500, 158, 50, 16, 5};
    std::vector<std::vector<int>> by_class;
    std::vector<int> flat;
    int next = 0;
    for (int c = 0; c < 5; ++c) {
        by_class.emplace_back();
        for (int i = 0; i < counts[c]; ++i) {
            by_class.back().push_back(next);
            flat.push_back(next++);
        }
    }
    const int total = next;
    auto frequencies = [&](SamplingMode mode) {
        Rng rng(101);
        Vec freq(5, 0.0);
        for (int draw = 0; draw < 10000; ++draw) {
            const int i = draw_training_index(rng, mode, flat, by_class);
            int c = 0;
            for (int acc = 0; c < 5; ++c)
                if (i < (acc += counts[c])) break;
            freq[c] += 1.0 / 10000.0;
        }
        return freq;
    };
    Vec balanced = frequencies(SamplingMode::balanced);
    for (double f : balanced) CHECK(std::fabs(f - 0.2) <= 0.02);
    Vec instance = frequencies(SamplingMode::instance);
    CHECK(std::fabs(instance[0] - 500.0 / total) <= 0.02);
    CHECK(instance[4] < 0.03);
}

TEST_CASE("balanced sampling demands every class present") {
    Mat features = {{1.0, 0.0}, {0.0, 1.0}};
    std::vector<int> labels = {0, 0};
    ClassifierConfig cfg;
    cfg.steps = 1;
    CHECK_THROWS_AS(train_classifier(features, labels, 2, cfg), ValidationError);
    cfg.sampling = SamplingMode::instance;
    LinearClassifier clf = train_classifier(features, labels, 2, cfg);
    CHECK(clf.num_classes() == 2);
}

TEST_CASE("probe on frozen random features beats chance on its training set") {
    Rng rng(41);
    Mat features = random_unit_rows(60, 8, rng);
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) labels.push_back(static_cast<int>(rng.next_below(3)));
    ClassifierConfig cfg;
    LinearClassifier clf = train_classifier(features, labels, 3, cfg);
    std::vector<int> pred = classify(clf, features);
    int hits = 0;
    for (int i = 0; i < 60; ++i) hits += pred[i] == labels[i];
    CHECK(hits * 3 >= 60); // at least 1/3
}

TEST_CASE("classifier rejects malformed inputs") {
    ClassifierConfig cfg;
    CHECK_THROWS_AS(train_classifier(Mat{}, {}, 2, cfg), ValidationError);
    CHECK_THROWS_AS(train_classifier({{1.0, 0.0}}, {0, 1}, 2, cfg), ValidationError);
    CHECK_THROWS_AS(train_classifier({{1.0, 0.0}}, {5}, 2, cfg), ValidationError);
    LinearClassifier clf;
    clf.weights = {{1.0, 0.0}, {0.0, 1.0}};
    clf.biases = {0.0, 0.0};
    CHECK_THROWS_AS(classify(clf, {{1.0, 0.0, 0.0}}), ValidationError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "tsc_encoder_test";
    fs::create_directories(dir);
    const std::string path = (dir / "net.txt").string();

    Mlp net = make_mlp({7, 11, 3}, 99);
    save_mlp(net, path);
    Mlp back = load_mlp(path);
    CHECK(back.widths == net.widths);
    CHECK(back.seed == net.seed);
    for (int l = 0; l < net.num_layers(); ++l) {
        CHECK(back.weights[l] == net.weights[l]);
        CHECK(back.biases[l] == net.biases[l]);
    }

    const std::string bad = (dir / "bad.txt").string();
    auto write_file = [&](const std::string& text) {
        std::FILE* f = std::fopen(bad.c_str(), "w");
        REQUIRE(f);
        std::fputs(text.c_str(), f);
        std::fclose(f);
    };
    write_file("widths 3 2\nseed 0\n");
    CHECK_THROWS_AS(load_mlp(bad), ValidationError);
    write_file("layers 3 2\nseed 0\n1 2 3\n");
    CHECK_THROWS_AS(load_mlp(bad), ValidationError); // truncated
    write_file("layers 3 2\nseed 0\n1 2 3 4\n5 6 7\n0 0\n");
    CHECK_THROWS_AS(load_mlp(bad), ValidationError); // oversized row
    write_file("layers 3 -2\nseed 0\n");
    CHECK_THROWS_AS(load_mlp(bad), ValidationError);
    CHECK_THROWS_AS(load_mlp((dir / "missing.txt").string()), ValidationError);
    fs::remove_all(dir);
}

} // TEST_SUITE
