#pragma once

#include "regcl/linalg.hpp"
#include "regcl/merging.hpp"
#include "regcl/model.hpp"

#include <cstdint>
#include <vector>

namespace regcl {

class TaskDataset;

enum class OutputActivation { sigmoid, identity };
enum class LrSchedule { cosine_annealing, constant };

const char* to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& s);
const char* to_string(OutputActivation a);
OutputActivation parse_output_activation(const std::string& s);

struct LossConfig {
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double dice_smooth = 1.0;
    double mse_weight = 1.0;
    double focal_weight = 1.0;
    double dice_weight = 10.0;
    /// Losses are defined on probabilities; identity is for regression tasks.
    OutputActivation output = OutputActivation::sigmoid;

    void validate() const;
    friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    double lr = 0.005;
    LrSchedule schedule = LrSchedule::cosine_annealing;
    std::uint64_t seed = 0;

    void validate() const;
    /// Learning rate used throughout `epoch` (0-based).
    double lr_at(std::size_t epoch) const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LossValue {
    double value = 0.0;
    Matrix grad;  // d value / d pred
};

/// Probability clamp applied before logarithms.
inline constexpr double kProbEpsilon = 1e-7;

LossValue mse_loss(const Matrix& pred, const Matrix& target);
LossValue focal_loss(const Matrix& pred, const Matrix& target, const LossConfig& cfg);
LossValue dice_loss(const Matrix& pred, const Matrix& target, const LossConfig& cfg);

struct TotalLoss {
    double value = 0.0;
    double mse = 0.0;
    double focal = 0.0;
    double dice = 0.0;
    Matrix grad;
};

/// mse_weight·MSE + focal_weight·Focal + dice_weight·Dice.
TotalLoss total_loss(const Matrix& pred, const Matrix& target, const LossConfig& cfg);

/// Loss on logits: applies the configured output activation, then total_loss,
/// and chains the gradient back to the logits.
TotalLoss loss_on_logits(const Matrix& logits, const Matrix& target, const LossConfig& cfg);

Matrix sigmoid(const Matrix& logits);

struct LossRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double total = 0.0;
    double mse = 0.0;
    double focal = 0.0;
    double dice = 0.0;

    friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainResult {
    Checkpoint model;  // trained adapters and biases; frozen parts untouched
    GramMap grams;     // one pass over the training inputs after training
    std::vector<LossRecord> history;
};

/// Mini-batch SGD (no momentum) on the adapters and biases of `model`, then one
/// capture pass over the training inputs to build per-layer Grams. One history
/// record per optimizer step.
TrainResult train_task(const Checkpoint& model, const TaskDataset& task, const TrainConfig& tc, const LossConfig& lc);

/// Same as train_task on raw matrices.
TrainResult train_on(const Checkpoint& model, const Matrix& inputs, const Matrix& targets, const TrainConfig& tc,
                     const LossConfig& lc);

/// Grams of every adapted layer's inputs, accumulated in row blocks.
GramMap compute_grams(const Checkpoint& model, const Matrix& inputs, std::size_t block_rows = 256);

}  // namespace regcl
