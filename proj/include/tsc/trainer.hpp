#ifndef TSC_TRAINER_HPP
#define TSC_TRAINER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tsc/assignment.hpp"
#include "tsc/datagen.hpp"
#include "tsc/encoder.hpp"
#include "tsc/losses.hpp"
#include "tsc/metrics.hpp"
#include "tsc/targets.hpp"

namespace tsc {

// kcl: plain k-positive contrastive training, no targets anywhere.
// tsc: KCL warm-up, then target pull with the assignment re-matched online.
// tsc_random: like tsc but the assignment is a seeded random permutation
// frozen for the whole run.
enum class Method { kcl, tsc, tsc_random };

std::string method_name(Method m);
Method parse_method(const std::string& name);

// Everything needed to regenerate a dataset exactly; run directories store
// this instead of the samples.
struct DataConfig {
    int num_classes = 10;
    int input_dim = 16;
    int n_max = 500;
    double rho = 100.0;
    int branching = 2;
    double noise_sigma = 0.1;
    int test_per_class = 50;
    std::uint64_t seed = 0;
};

LongTailDataset build_dataset(const DataConfig& dc);

struct TrainConfig {
    Method method = Method::tsc;
    std::vector<int> widths = {16, 64, 64, 2}; // input, hidden..., embedding
    int epochs = 200;
    double warmup_fraction = 0.5; // share of epochs trained before assignment
    int batch_size = 128;
    LossConfig loss;
    double learning_rate = 0.03; // cosine-decayed over all steps
    double momentum = 0.9;
    double center_keep = 0.9;   // retained weight in the running class centers
    double augment_sigma = 0.1; // input noise producing the second view
    int log_interval = 0;       // epochs between metric snapshots; 0 = off
    std::uint64_t seed = 0;
};

struct MetricSnapshot {
    int epoch = 0; // 1-based
    double alignment = 0.0;
    double uniformity = 0.0;
    double neighborhood = 0.0;
    double reasonability = 0.0;
};

struct RunRecord {
    std::vector<double> epoch_loss;                   // mean batch loss, one per epoch
    std::vector<double> assignment_cost;              // at each post-warmup epoch end
    std::vector<std::vector<int>> assignment_history; // sigma at each post-warmup epoch end
    std::vector<MetricSnapshot> snapshots;
    int warmup_epochs = 0; // epochs run before any assignment existed
};

struct TrainResult {
    Mlp net;
    RunRecord record;
    Assignment assignment; // empty sigma when the method never assigns
};

// Two-stage representation training. targets must be given for the tsc
// variants and must be null for kcl.
TrainResult train_representation(const LongTailDataset& dataset, const TrainConfig& cfg,
                                 const TargetSet* targets);

struct EvalResult {
    MetricsReport report; // over test features, grouped by training counts
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
};

// Fits a linear probe on the frozen training features (class-balanced
// sampling) and scores the balanced test split.
EvalResult evaluate_encoder(const Mlp& net, const LongTailDataset& dataset, int metrics_k,
                            const ClassifierConfig& probe);

// Writes config.txt, checkpoint.txt, history.csv, snapshots.csv, and for the
// tsc variants targets.txt + assignment.txt.
void save_run(const std::string& dir, const TrainConfig& tc, const DataConfig& dc,
              const TrainResult& result, const TargetSet* targets);

struct LoadedRun {
    TrainConfig train;
    DataConfig data;
    Mlp net;
    TargetSet targets;     // empty points when the run had none
    Assignment assignment; // empty sigma when the run had none
};

LoadedRun load_run(const std::string& dir);

} // namespace tsc

#endif
