#include "tsc/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tsc/errors.hpp"

namespace tsc {

namespace {

void validate_widths(const std::vector<int>& widths) {
    if (widths.size() < 2)
        throw ValidationError("mlp: need at least an input and an output width");
    for (int w : widths)
        if (w < 1) throw ValidationError("mlp: layer widths must be positive");
}

void validate_net(const Mlp& net) {
    validate_widths(net.widths);
    if (net.weights.size() + 1 != net.widths.size() || net.biases.size() != net.weights.size())
        throw ValidationError("mlp: layer count does not match widths");
    for (int l = 0; l < net.num_layers(); ++l) {
        const std::size_t out = static_cast<std::size_t>(net.widths[l + 1]);
        const std::size_t in = static_cast<std::size_t>(net.widths[l]);
        if (net.weights[l].size() != out || net.biases[l].size() != out)
            throw ValidationError("mlp: weight shape mismatch");
        for (const Vec& row : net.weights[l])
            if (row.size() != in) throw ValidationError("mlp: weight shape mismatch");
    }
}

} // namespace

Mlp make_mlp(const std::vector<int>& widths, std::uint64_t seed) {
    validate_widths(widths);
    Mlp net;
    net.widths = widths;
    net.seed = seed;
    Rng rng(Rng::mix2(seed, 0x6e65746dULL));
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int in = widths[l], out = widths[l + 1];
        const double scale = std::sqrt(2.0 / in);
        Mat w(out);
        for (Vec& row : w) {
            row = rng.normal_vector(in);
            for (double& x : row) x *= scale;
        }
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(out, 0.0);
    }
    return net;
}

int param_count(const Mlp& net) {
    int total = 0;
    for (std::size_t l = 0; l + 1 < net.widths.size(); ++l)
        total += (net.widths[l] + 1) * net.widths[l + 1];
    return total;
}

ForwardCache forward(const Mlp& net, const Mat& inputs) {
    validate_net(net);
    if (inputs.empty()) throw ValidationError("mlp forward: empty batch");
    for (const Vec& x : inputs)
        if (static_cast<int>(x.size()) != net.input_dim())
            throw ValidationError("mlp forward: input width mismatch");

    ForwardCache cache;
    cache.inputs = inputs;
    const int layers = net.num_layers();
    const Mat* cur = &cache.inputs;
    for (int l = 0; l < layers; ++l) {
        const int out = net.widths[l + 1];
        Mat z(cur->size(), Vec(out, 0.0));
        for (std::size_t i = 0; i < cur->size(); ++i)
            for (int o = 0; o < out; ++o)
                z[i][o] = net.biases[l][o] + dot(net.weights[l][o], (*cur)[i]);
        cache.pre_acts.push_back(z);
        if (l + 1 < layers)
            for (Vec& row : z)
                for (double& x : row) x = x > 0.0 ? x : 0.0;
        cache.acts.push_back(std::move(z));
        cur = &cache.acts.back();
    }

    const Mat& raw = cache.acts.back();
    cache.features.resize(raw.size());
    cache.pre_norms.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double len = norm(raw[i]);
        if (len < 1e-12)
            throw OptimizationError("mlp forward: feature collapsed to zero before normalization");
        cache.pre_norms[i] = len;
        Vec v = raw[i];
        for (double& x : v) x /= len;
        cache.features[i] = std::move(v);
    }
    return cache;
}

Gradients zero_gradients(const Mlp& net) {
    Gradients g;
    for (int l = 0; l < net.num_layers(); ++l) {
        g.d_weights.emplace_back(net.weights[l].size(), Vec(net.widths[l], 0.0));
        g.d_biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

void add_gradients(Gradients& into, const Gradients& from) {
    for (std::size_t l = 0; l < into.d_weights.size(); ++l) {
        for (std::size_t o = 0; o < into.d_weights[l].size(); ++o)
            axpy(1.0, from.d_weights[l][o], into.d_weights[l][o]);
        axpy(1.0, from.d_biases[l], into.d_biases[l]);
    }
}

Gradients backward(const Mlp& net, const ForwardCache& cache, const Mat& d_features) {
    const int layers = net.num_layers();
    const std::size_t n = cache.inputs.size();
    if (d_features.size() != n)
        throw ValidationError("mlp backward: upstream gradient count mismatch");

    Gradients g = zero_gradients(net);
    // Through the output normalization first.
    Mat delta(n);
    for (std::size_t i = 0; i < n; ++i)
        delta[i] =
            through_normalization(d_features[i], cache.features[i], cache.pre_norms[i]);

    for (int l = layers - 1; l >= 0; --l) {
        const Mat& below = l == 0 ? cache.inputs : cache.acts[l - 1];
        Mat& dw = g.d_weights[l];
        Vec& db = g.d_biases[l];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < delta[i].size(); ++o) {
                const double d = delta[i][o];
                if (d == 0.0) continue;
                db[o] += d;
                axpy(d, below[i], dw[o]);
            }
        }
        if (l == 0) break;
        Mat next(n, Vec(net.widths[l], 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < delta[i].size(); ++o) {
                const double d = delta[i][o];
                if (d == 0.0) continue;
                axpy(d, net.weights[l][o], next[i]);
            }
            // ReLU gate of the layer below.
            for (int j = 0; j < net.widths[l]; ++j)
                if (cache.pre_acts[l - 1][i][j] <= 0.0) next[i][j] = 0.0;
        }
        delta = std::move(next);
    }
    return g;
}

double cosine_lr(double base, int step, int total) {
    if (total < 1) throw ValidationError("cosine_lr: total steps must be positive");
    if (step < 0) step = 0;
    if (step > total) step = total;
    return base * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total));
}

SgdState make_sgd_state(const Mlp& net) {
    SgdState s;
    for (int l = 0; l < net.num_layers(); ++l) {
        s.w_vel.emplace_back(net.weights[l].size(), Vec(net.widths[l], 0.0));
        s.b_vel.emplace_back(net.biases[l].size(), 0.0);
    }
    return s;
}

void sgd_step(Mlp& net, SgdState& state, const Gradients& g, const SgdConfig& cfg) {
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw ValidationError("sgd: momentum must lie in [0, 1)");
    const double lr = cosine_lr(cfg.learning_rate, state.step, cfg.total_steps);
    for (int l = 0; l < net.num_layers(); ++l) {
        for (std::size_t o = 0; o < net.weights[l].size(); ++o) {
            Vec& vel = state.w_vel[l][o];
            for (std::size_t j = 0; j < vel.size(); ++j) {
                vel[j] = cfg.momentum * vel[j] - lr * g.d_weights[l][o][j];
                net.weights[l][o][j] += vel[j];
            }
        }
        Vec& bvel = state.b_vel[l];
        for (std::size_t o = 0; o < bvel.size(); ++o) {
            bvel[o] = cfg.momentum * bvel[o] - lr * g.d_biases[l][o];
            net.biases[l][o] += bvel[o];
        }
    }
    ++state.step;
}

int draw_training_index(Rng& rng, SamplingMode mode, const std::vector<int>& flat_indices,
                        const std::vector<std::vector<int>>& by_class) {
    if (mode == SamplingMode::instance) {
        return flat_indices[rng.next_below(flat_indices.size())];
    }
    const std::vector<int>& members = by_class[rng.next_below(by_class.size())];
    return members[rng.next_below(members.size())];
}

LinearClassifier train_classifier(const Mat& features, const std::vector<int>& labels,
                                  int num_classes, const ClassifierConfig& cfg) {
    if (features.empty()) throw ValidationError("classifier: empty feature set");
    if (features.size() != labels.size())
        throw ValidationError("classifier: feature/label count mismatch");
    if (num_classes < 1) throw ValidationError("classifier: need at least one class");
    if (cfg.steps < 1 || cfg.batch_size < 1)
        throw ValidationError("classifier: steps and batch size must be positive");
    const int d = static_cast<int>(features[0].size());

    std::vector<std::vector<int>> by_class(num_classes);
    std::vector<int> flat(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValidationError("classifier: label out of range");
        if (static_cast<int>(features[i].size()) != d)
            throw ValidationError("classifier: inconsistent feature dimension");
        by_class[labels[i]].push_back(static_cast<int>(i));
        flat[i] = static_cast<int>(i);
    }
    if (cfg.sampling == SamplingMode::balanced)
        for (int c = 0; c < num_classes; ++c)
            if (by_class[c].empty())
                throw ValidationError("classifier: balanced sampling needs every class present");

    LinearClassifier clf;
    clf.weights.assign(num_classes, Vec(d, 0.0));
    clf.biases.assign(num_classes, 0.0);
    Mat w_vel(num_classes, Vec(d, 0.0));
    Vec b_vel(num_classes, 0.0);

    Rng rng(Rng::mix2(cfg.seed, 0x70726f6265ULL));
    Vec logits(num_classes);
    for (int step = 0; step < cfg.steps; ++step) {
        Mat dw(num_classes, Vec(d, 0.0));
        Vec db(num_classes, 0.0);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int i = draw_training_index(rng, cfg.sampling, flat, by_class);
            for (int c = 0; c < num_classes; ++c)
                logits[c] = clf.biases[c] + dot(clf.weights[c], features[i]);
            const double lse = log_sum_exp(logits);
            for (int c = 0; c < num_classes; ++c) {
                const double p = std::exp(logits[c] - lse) - (c == labels[i] ? 1.0 : 0.0);
                db[c] += p / cfg.batch_size;
                axpy(p / cfg.batch_size, features[i], dw[c]);
            }
        }
        for (int c = 0; c < num_classes; ++c) {
            for (int j = 0; j < d; ++j) {
                w_vel[c][j] = cfg.momentum * w_vel[c][j] - cfg.learning_rate * dw[c][j];
                clf.weights[c][j] += w_vel[c][j];
            }
            b_vel[c] = cfg.momentum * b_vel[c] - cfg.learning_rate * db[c];
            clf.biases[c] += b_vel[c];
        }
    }
    return clf;
}

std::vector<int> classify(const LinearClassifier& clf, const Mat& features) {
    std::vector<int> out;
    out.reserve(features.size());
    for (const Vec& f : features) {
        if (f.size() != clf.weights[0].size())
            throw ValidationError("classifier: feature dimension mismatch");
        int best = 0;
        double best_score = clf.biases[0] + dot(clf.weights[0], f);
        for (int c = 1; c < clf.num_classes(); ++c) {
            const double s = clf.biases[c] + dot(clf.weights[c], f);
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        out.push_back(best);
    }
    return out;
}

void save_mlp(const Mlp& net, const std::string& path) {
    validate_net(net);
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open checkpoint file for writing: " + path);
    char buf[64];
    out << "layers";
    for (int w : net.widths) out << ' ' << w;
    out << "\nseed " << net.seed << "\n";
    for (int l = 0; l < net.num_layers(); ++l) {
        for (std::size_t o = 0; o < net.weights[l].size(); ++o) {
            for (std::size_t j = 0; j < net.weights[l][o].size(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", net.weights[l][o][j]);
                out << buf << (j + 1 < net.weights[l][o].size() ? " " : "");
            }
            out << '\n';
        }
        for (std::size_t o = 0; o < net.biases[l].size(); ++o) {
            std::snprintf(buf, sizeof(buf), "%.17g", net.biases[l][o]);
            out << buf << (o + 1 < net.biases[l].size() ? " " : "");
        }
        out << '\n';
    }
    if (!out) throw ValidationError("failed while writing checkpoint: " + path);
}

Mlp load_mlp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open checkpoint file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("checkpoint: missing widths line");
    std::istringstream header(line);
    std::string tag;
    header >> tag;
    if (tag != "layers") throw ValidationError("checkpoint: malformed widths line");
    std::vector<int> widths;
    for (int w; header >> w;) widths.push_back(w);
    validate_widths(widths);

    if (!std::getline(in, line)) throw ValidationError("checkpoint: missing seed line");
    std::istringstream seed_line(line);
    std::uint64_t seed = 0;
    seed_line >> tag >> seed;
    if (tag != "seed" || seed_line.fail())
        throw ValidationError("checkpoint: malformed seed line");

    Mlp net;
    net.widths = widths;
    net.seed = seed;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int in_w = widths[l], out_w = widths[l + 1];
        Mat w(out_w, Vec(in_w));
        for (int o = 0; o < out_w; ++o) {
            if (!std::getline(in, line))
                throw ValidationError("checkpoint: truncated weight block");
            std::istringstream row(line);
            for (int j = 0; j < in_w; ++j)
                if (!(row >> w[o][j]))
                    throw ValidationError("checkpoint: malformed weight row");
            double extra;
            if (row >> extra) throw ValidationError("checkpoint: oversized weight row");
        }
        net.weights.push_back(std::move(w));
        if (!std::getline(in, line)) throw ValidationError("checkpoint: truncated bias block");
        std::istringstream brow(line);
        Vec b(out_w);
        for (int o = 0; o < out_w; ++o)
            if (!(brow >> b[o])) throw ValidationError("checkpoint: malformed bias row");
        net.biases.push_back(std::move(b));
    }
    validate_net(net);
    return net;
}

} // namespace tsc
