#pragma once

#include "regcl/dataset.hpp"
#include "regcl/merging.hpp"
#include "regcl/model.hpp"
#include "regcl/training.hpp"

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace regcl {

// Segmentation metrics

inline constexpr double kMaskThreshold = 0.5;

struct SegScores {
    double iou = 0.0;
    double f1 = 0.0;
    double mae = 0.0;
};

/// Per-row IoU, F1 and MAE averaged over rows. Rows where both masks are empty
/// score IoU = F1 = 1.
SegScores seg_metrics(const Matrix& pred_mask, const Matrix& gt_mask, const Matrix& pred_prob);

Matrix threshold_mask(const Matrix& prob, double threshold = kMaskThreshold);

/// Runs the model on a test split and scores sigmoid(logits).
SegScores evaluate(const Checkpoint& model, const TaskDataset& test);

// Continual-learning metrics

inline constexpr std::array<const char*, 3> kMetricNames = {"miou", "mf1", "mmae"};

/// R[i][j]: metric on task j after training step i.
struct ResultMatrix {
    std::string metric_name;
    std::vector<std::string> task_ids;
    std::vector<std::vector<double>> values;

    std::size_t tasks() const noexcept { return values.size(); }
    friend bool operator==(const ResultMatrix&, const ResultMatrix&) = default;
};

struct TransferMetrics {
    double acc = 0.0;
    double bwt = 0.0;
    double fwt = 0.0;
    friend bool operator==(const TransferMetrics&, const TransferMetrics&) = default;
};

/// ACC = mean of the last row; BWT = mean over i<T of R[T][i] − R[i][i];
/// FWT = mean over i<T of R[i][i+1]. Needs T ≥ 2.
TransferMetrics continual_metrics(const ResultMatrix& r);
/// ACC alone; defined for T ≥ 1.
double average_accuracy(const ResultMatrix& r);
double diagonal_mean(const ResultMatrix& r);

// Sequence runner

enum class Strategy { regcl, lora_seq, mean_merge, independent, frozen };

const char* to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

struct SequenceConfig {
    Strategy strategy = Strategy::regcl;
    ToyModelConfig model;
    TrainConfig train;
    LossConfig loss;
    MergeConfig merge;
    /// Replay samples per past task; 0 disables replay (regcl only).
    std::size_t replay_k = 0;
    std::uint64_t seed = 0;
};

/// Hooks into the runner; used by tests to audit data access.
struct SequenceObserver {
    std::function<void(std::size_t step, const std::string& task_id)> task_training_started;
    std::function<void(std::size_t step, const std::string& task_id)> task_training_finished;
};

struct SequenceResult {
    std::map<std::string, ResultMatrix> results;        // keyed by kMetricNames
    std::map<std::string, TransferMetrics> metrics;
    Checkpoint final_model;
    std::optional<MergeState> state;                    // regcl only
    std::vector<MergeState> step_states;                // regcl only, state after each step
    std::vector<Checkpoint> step_models;                // evaluated model after each step
    std::vector<Checkpoint> task_models;                // trained per-task models (when any)
    std::vector<std::vector<LossRecord>> histories;
};

/// Seed for everything tied to one task (shuffling, replay sampling); depends
/// on the task, not on its position in the sequence.
std::uint64_t task_seed(std::uint64_t run_seed, const DomainSpec& domain);

/// Shared starting point W₀: frozen encoder, host weights and fresh adapters.
Checkpoint initial_model(const SequenceConfig& cfg);

SequenceResult run_sequence(const std::vector<TaskPair>& tasks, const SequenceConfig& cfg,
                            const SequenceObserver& observer = {});

/// Uniform sample of k rows without replacement.
TaskDataset sample_replay_buffer(const TaskDataset& train, std::size_t k, std::uint64_t seed);

/// Fine-tunes the merged model on the union of the past-task buffers and the
/// current train split. k = 0 leaves the state untouched. Composite states get
/// a fresh zero-delta adapter per layer that is folded back after training;
/// factor_mean states continue training their merged adapters. Accumulators
/// are not changed.
MergeState replay_finetune(MergeState state, const std::vector<TaskDataset>& buffers, const TaskDataset& current,
                           std::size_t k, const Checkpoint& adapter_template, const TrainConfig& tc,
                           const LossConfig& lc);

}  // namespace regcl
