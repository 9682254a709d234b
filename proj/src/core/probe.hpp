#pragma once

// One-hidden-layer softmax probing classifier:
//
//   p = softmax(W2 * relu(W1 * x + b1) + b2)
//
// trained with mean cross-entropy and hand-written backpropagation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "embedding_store.hpp"

namespace typoprobe {

inline constexpr std::size_t kProbeHiddenUnits = 100;

struct ProbeParams {
    std::size_t dim = 0;
    std::size_t hidden = kProbeHiddenUnits;
    std::size_t classes = 0;
    std::vector<double> w1;  // hidden x dim, row-major
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // classes x hidden, row-major
    std::vector<double> b2;  // classes

    static ProbeParams zeros(std::size_t dim, std::size_t classes, std::size_t hidden = kProbeHiddenUnits);

    // Blocks in a fixed order: w1, b1, w2, b2.
    std::vector<std::vector<double>*> blocks();
    std::vector<const std::vector<double>*> blocks() const;

    bool operator==(const ProbeParams&) const = default;
};

inline constexpr const char* kProbeBlockNames[4] = {"W1", "b1", "W2", "b2"};

// Glorot-uniform weights, zero biases.
ProbeParams init_probe(std::size_t dim, std::size_t num_classes, std::uint64_t seed,
                       std::size_t hidden = kProbeHiddenUnits);

std::vector<double> forward(const ProbeParams& params, std::span<const double> x);
// Softmax with max subtraction.
std::vector<double> softmax(std::span<const double> logits);

struct Example {
    std::span<const double> x;
    int label = 0;
};

// Mean (optionally class-weighted) cross-entropy over the batch. When `grad`
// is non-null it receives d(loss)/d(params) with the same shapes as `params`.
double loss_and_gradient(const ProbeParams& params, std::span<const Example> batch, ProbeParams* grad,
                         std::span<const double> class_weights = {});

using GradientFn = std::function<double(const ProbeParams&, std::span<const Example>, ProbeParams*)>;

struct GradientCheckOptions {
    double step = 1e-5;
    std::size_t coords_per_block = 48;  // all coordinates when a block is smaller
    std::uint64_t seed = 0;
};

// Max over sampled coordinates of |g_a - g_n| / max(|g_a|, |g_n|, 1e-8),
// g_n from central differences. `analytic` defaults to loss_and_gradient.
double gradient_check(const ProbeParams& params, std::span<const Example> batch,
                      const GradientCheckOptions& options = {}, const GradientFn& analytic = {});

enum class Optimizer { kAdam, kSgd };

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 256;
    int max_epochs = 20;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::kAdam;
    int early_stop_patience = 3;  // 0 disables early stopping
    double validation_fraction = 0.1;
    bool class_weighting = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

const char* optimizer_name(Optimizer o) noexcept;

struct EpochLog {
    int epoch = 0;
    double train_loss = 0;
    double train_accuracy = 0;
    double validation_loss = 0;
    double validation_accuracy = 0;
};

struct TrainedProbe {
    ProbeParams params;
    std::string feature;
    std::vector<std::string> label_map;
    std::vector<EpochLog> train_log;
    int selected_epoch = 0;

    std::size_t dim() const noexcept { return params.dim; }
};

struct LabelledMatrix {
    const EmbeddingMatrix* matrix = nullptr;
    int label = 0;
};

TrainedProbe train_probe(std::span<const LabelledMatrix> data, std::size_t num_classes, const TrainConfig& config,
                         std::string feature = {}, std::vector<std::string> label_map = {});

// Argmax per row; ties go to the lowest class index.
std::vector<int> predict(const ProbeParams& params, const EmbeddingMatrix& matrix);
std::vector<int> predict(const TrainedProbe& probe, const EmbeddingMatrix& matrix);
double evaluate_accuracy(const TrainedProbe& probe, const EmbeddingMatrix& matrix, int gold_label);
double accuracy_of(std::span<const int> predictions, int gold_label);

// <dir>/<stem>.json plus one embedding-format file per parameter block.
void save_probe(const TrainedProbe& probe, const std::filesystem::path& dir, const std::string& stem,
                int layer_index = 0);
TrainedProbe load_probe(const std::filesystem::path& json_path);

}  // namespace typoprobe
