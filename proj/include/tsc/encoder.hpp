#ifndef TSC_ENCODER_HPP
#define TSC_ENCODER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tsc/rng.hpp"
#include "tsc/vecmath.hpp"

namespace tsc {

// Fully-connected net: ReLU on hidden layers, identity + L2 normalization on
// the output layer. widths = {input, hidden..., output}.
struct Mlp {
    std::vector<int> widths;
    std::vector<Mat> weights; // per layer, rows = out, cols = in
    std::vector<Vec> biases;  // per layer
    std::uint64_t seed = 0;   // init seed, kept for checkpoints

    int num_layers() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
};

// He-initialized net: weights ~ N(0, 2/fan_in), biases zero.
Mlp make_mlp(const std::vector<int>& widths, std::uint64_t seed);

int param_count(const Mlp& net);

// Everything backward needs: per-layer pre-activations and activations, the
// pre-normalization outputs' lengths, and the unit-norm features.
struct ForwardCache {
    Mat inputs;
    std::vector<Mat> pre_acts; // z_l per layer
    std::vector<Mat> acts;     // relu(z_l) per hidden layer; last entry = raw output
    Mat features;              // normalized rows of the raw output
    Vec pre_norms;
};

ForwardCache forward(const Mlp& net, const Mat& inputs);

struct Gradients {
    std::vector<Mat> d_weights;
    std::vector<Vec> d_biases;
};

Gradients zero_gradients(const Mlp& net);
void add_gradients(Gradients& into, const Gradients& from);

// Backpropagate d(loss)/d(unit features) to every weight and bias, chaining
// through the output normalization.
Gradients backward(const Mlp& net, const ForwardCache& cache, const Mat& d_features);

// Cosine decay from base at step 0 to zero at step total.
double cosine_lr(double base, int step, int total);

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    int total_steps = 1; // cosine schedule horizon
};

struct SgdState {
    std::vector<Mat> w_vel;
    std::vector<Vec> b_vel;
    int step = 0;
};

SgdState make_sgd_state(const Mlp& net);
void sgd_step(Mlp& net, SgdState& state, const Gradients& g, const SgdConfig& cfg);

struct LinearClassifier {
    Mat weights; // C x d
    Vec biases;  // C
    int num_classes() const { return static_cast<int>(weights.size()); }
};

enum class SamplingMode { instance, balanced };

struct ClassifierConfig {
    int steps = 200;
    int batch_size = 64;
    double learning_rate = 0.5;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    SamplingMode sampling = SamplingMode::balanced;
};

// One index per draw: `instance` ignores class sizes, `balanced` first picks a
// class uniformly, then a sample within it.
int draw_training_index(Rng& rng, SamplingMode mode,
                        const std::vector<int>& flat_indices,
                        const std::vector<std::vector<int>>& by_class);

// Multinomial logistic regression on frozen features via SGD with momentum.
LinearClassifier train_classifier(const Mat& features, const std::vector<int>& labels,
                                  int num_classes, const ClassifierConfig& cfg);

std::vector<int> classify(const LinearClassifier& clf, const Mat& features);

// Text checkpoint, exact round-trip at 17 significant digits.
void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(const std::string& path);

} // namespace tsc

#endif
