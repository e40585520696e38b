#pragma once

#include "regcl/linalg.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace regcl {

enum class LayerKind { linear, other };
enum class Activation { identity, tanh };

const char* to_string(LayerKind kind);
const char* to_string(Activation act);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

/// One named parameter group.
///
/// A linear layer maps x ↦ act(Wᵀx + bias) with `weight` of shape m×n; its
/// bias, when present, is `aux[0]` (1×n). Parameters in `aux` and the weight of
/// a kind=other layer never have a Gram-compatible input, so merges average them.
/// Frozen layers are never trained and must be identical across task models.
struct LayerParams {
    std::string name;
    LayerKind kind = LayerKind::linear;
    bool frozen = false;
    Activation activation = Activation::identity;
    Matrix weight;
    std::vector<Matrix> aux;

    bool has_bias() const noexcept { return kind == LayerKind::linear && !aux.empty(); }

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Low-rank update ΔW = scaling·(b·a)ᵀ for an m×n host weight.
/// `a` (r×m) receives the layer input; `b` (n×r) projects back up.
struct LoraAdapter {
    std::string layer_name;
    std::size_t rank = 0;
    double scaling = 1.0;
    Matrix a;
    Matrix b;

    friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::string task_id;
    std::vector<std::string> merge_history;
    std::map<std::string, std::string> tags;

    friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

/// Ordered layers plus any adapters attached to them. Forward passes apply
/// attached adapters on top of the host weights.
struct Checkpoint {
    std::vector<LayerParams> layers;
    std::vector<LoraAdapter> adapters;
    CheckpointMeta meta;

    const LayerParams* find_layer(const std::string& name) const;
    LayerParams* find_layer(const std::string& name);
    const LoraAdapter* find_adapter(const std::string& layer_name) const;
    LoraAdapter* find_adapter(const std::string& layer_name);

    /// Throws ValidationError on duplicate names, non-finite values, adapters
    /// without a linear host, or inconsistent shapes.
    void validate() const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Same layer names, kinds, order and shapes; adapters are not compared.
bool same_topology(const Checkpoint& a, const Checkpoint& b);

// Adapters

/// a: Kaiming-uniform over fan-in m (bound 1/√m, the usual LoRA choice); b: zeros.
LoraAdapter init_adapter(const std::string& layer_name, std::size_t m, std::size_t n, std::size_t rank,
                         double scaling, std::uint64_t seed);

Matrix effective_delta(const LoraAdapter& adapter);

/// Folds each adapter into its host weight. The input checkpoint must not
/// already carry an attached adapter for any of the targeted layers.
Checkpoint apply_adapter(const Checkpoint& checkpoint, const std::vector<LoraAdapter>& adapters);

/// Folds the checkpoint's own attached adapters into the host weights.
Checkpoint fold_adapters(const Checkpoint& checkpoint);

/// Rank-r truncated-SVD factorization of (merged − host) per linear layer, for
/// compact export. Evaluation paths use full merged weights instead.
std::vector<LoraAdapter> refactorize_low_rank(const Checkpoint& merged, const Checkpoint& host, std::size_t rank,
                                              double scaling);

// Toy network

struct ToyModelConfig {
    std::size_t input_dim = 256;
    std::size_t hidden_dim = 64;
    std::size_t output_dim = 256;
    std::size_t lora_rank = 8;
    double lora_scaling = 16.0;
    bool with_encoder = true;
    /// Number of adapted linear layers; the last one maps to output_dim.
    std::size_t adapted_layers = 2;
    std::uint64_t seed = 0;

    friend bool operator==(const ToyModelConfig&, const ToyModelConfig&) = default;
};

/// Frozen tanh encoder (input→hidden, no bias) followed by `adapted_layers`
/// linear layers, each with a trainable bias and a LoRA adapter. Every
/// parameter is derived from `seed`. Without an encoder and with one adapted
/// layer this is the plain linear model y = Wᵀx + bias.
Checkpoint make_toy_model(const ToyModelConfig& cfg);

using CaptureMap = std::map<std::string, Matrix>;

struct ForwardResult {
    Matrix outputs;  // pre-sigmoid logits
    CaptureMap captures;
};

/// Runs the network on the rows of x. With `capture`, records the exact input
/// rows seen by every non-frozen linear layer.
ForwardResult forward_capture(const Checkpoint& model, const Matrix& x, bool capture = true);

/// Index of the first non-frozen layer; layers before it can be cached.
std::size_t frozen_prefix_length(const Checkpoint& model);

/// Forward through layers [first, first+count) only.
Matrix forward_range(const Checkpoint& model, const Matrix& x, std::size_t first, std::size_t count);

/// Intermediate values kept for backpropagation through the trainable suffix.
struct ForwardTrace {
    std::size_t first_layer = 0;
    std::vector<Matrix> inputs;       // per traced layer
    std::vector<Matrix> lora_hidden;  // x·aᵀ per traced layer (empty without adapter)
    std::vector<Matrix> outputs;      // post-activation per traced layer
};

ForwardTrace forward_trace(const Checkpoint& model, const Matrix& x, std::size_t first_layer);

/// Gradients w.r.t. trainable parameters: adapter factors and linear biases.
struct ParamGradients {
    std::map<std::string, Matrix> adapter_a;
    std::map<std::string, Matrix> adapter_b;
    std::map<std::string, Matrix> bias;
};

/// Backpropagates d(loss)/d(final output) through the traced layers.
ParamGradients backward(const Checkpoint& model, const ForwardTrace& trace, const Matrix& grad_output);

}  // namespace regcl
