#pragma once

#include "regcl/linalg.hpp"
#include "regcl/model.hpp"

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace regcl {

enum class LoraStrategy {
    /// Merge host + ΔW with layer-input Grams.
    composite,
    /// Gram-weighted merge of the `a` factors, running mean of the `b` factors.
    factor_mean,
};

const char* to_string(LoraStrategy s);
LoraStrategy parse_lora_strategy(const std::string& s);

struct MergeConfig {
    double ridge_scale = 1e-8;
    double offdiag_scale = 1.0;
    LoraStrategy lora_strategy = LoraStrategy::composite;

    void validate() const;
    friend bool operator==(const MergeConfig&, const MergeConfig&) = default;
};

using GramMap = std::map<std::string, GramMatrix>;

/// Everything the incremental merge carries between tasks: one Gram
/// accumulator per merged linear layer and the merged checkpoint. Holds no
/// activation rows.
struct MergeState {
    GramMap accumulators;
    std::optional<Checkpoint> merged;
    std::size_t task_count = 0;
    MergeConfig config;

    /// Total doubles held by the accumulators, Σ dim².
    std::size_t accumulator_floats() const;

    friend bool operator==(const MergeState&, const MergeState&) = default;
};

struct WeightedModel {
    std::reference_wrapper<const Matrix> weight;
    std::reference_wrapper<const GramMatrix> gram;
};

/// (C1 + C2)⁻¹ (C1·W1 + C2·W2)
Matrix merge_pair(const Matrix& w1, const GramMatrix& c1, const Matrix& w2, const GramMatrix& c2,
                  const MergeConfig& cfg);

/// (Σ Cᵢ)⁻¹ Σ Cᵢ·Wᵢ, summed in list order.
Matrix merge_batch(std::span<const WeightedModel> models, const MergeConfig& cfg);

/// ((t−1)·prev + w)/t
Matrix mean_step(const Matrix& prev, const Matrix& w, std::size_t t);

/// One incremental merge. The first task is taken as-is; afterwards every
/// non-frozen linear weight becomes (P + C)⁻¹(P·W̄ + C·W) and every other
/// trainable tensor is folded into a running mean. P grows by C either way.
/// `task` must not carry attached adapters (see merge_adapters).
MergeState regcl_step(MergeState state, const Checkpoint& task, const GramMap& grams);

/// regcl_step for checkpoints with attached LoRA adapters, following
/// `state.config.lora_strategy`. Grams are over each adapted layer's input.
MergeState merge_adapters(MergeState state, const Checkpoint& task, const GramMap& grams);

/// Running mean over every non-frozen tensor: prev + (cur − prev)/t.
/// Frozen layers must match bitwise.
Checkpoint mean_merge_step(const Checkpoint& prev, const Checkpoint& cur, std::size_t t);

/// Arithmetic mean of K checkpoints, folding attached adapters first.
Checkpoint mean_merge(std::span<const Checkpoint> models);

/// One-shot merge of K checkpoints: every non-frozen linear weight is
/// merge_batch over the folded weights, everything else the running mean.
Checkpoint regmean_merge(std::span<const Checkpoint> models, std::span<const GramMap> grams, const MergeConfig& cfg);

/// Σ over tasks of the merge objective Σᵢ ‖Xᵢ·W − Xᵢ·Wᵢ‖², evaluated through
/// Grams: Σᵢ tr((W − Wᵢ)ᵀ Cᵢ (W − Wᵢ)).
double merge_objective(const Matrix& w, std::span<const WeightedModel> models);

}  // namespace regcl
