#include "regcl/merging.hpp"

#include "regcl/errors.hpp"

#include <cmath>
#include <set>

namespace regcl {

const char* to_string(LoraStrategy s) { return s == LoraStrategy::composite ? "composite" : "factor_mean"; }

LoraStrategy parse_lora_strategy(const std::string& s) {
    if (s == "composite") return LoraStrategy::composite;
    if (s == "factor_mean") return LoraStrategy::factor_mean;
    throw ValidationError("unknown lora strategy '" + s + "' (expected composite|factor_mean)");
}

void MergeConfig::validate() const {
    if (!(ridge_scale >= 0.0) || !std::isfinite(ridge_scale)) throw ValidationError("ridge_scale must be >= 0");
    if (!(offdiag_scale >= 0.0 && offdiag_scale <= 1.0))
        throw ValidationError("offdiag_scale must lie in [0, 1]");
}

std::size_t MergeState::accumulator_floats() const {
    std::size_t n = 0;
    for (const auto& [name, g] : accumulators) n += g.values.size();
    return n;
}

Matrix merge_pair(const Matrix& w1, const GramMatrix& c1, const Matrix& w2, const GramMatrix& c2,
                  const MergeConfig& cfg) {
    const WeightedModel models[] = {{w1, c1}, {w2, c2}};
    return merge_batch(models, cfg);
}

Matrix merge_batch(std::span<const WeightedModel> models, const MergeConfig& cfg) {
    cfg.validate();
    if (models.empty()) throw ValidationError("merge_batch: no models to merge");
    const Matrix& w0 = models.front().weight.get();
    const std::size_t m = w0.rows();
    for (const auto& mdl : models) {
        if (!mdl.weight.get().same_shape(w0)) throw ValidationError("merge_batch: weight shapes differ");
        if (mdl.gram.get().dim() != m) throw ValidationError("merge_batch: gram dim does not match weight rows");
    }
    // (C)⁻¹·C·W = W; skip the round-off of a solve.
    if (models.size() == 1) return w0;

    Matrix a = Matrix::zeros(m, m);
    Matrix b = Matrix::zeros(m, w0.cols());
    for (const auto& mdl : models) {
        const GramMatrix c = scale_offdiagonal(mdl.gram.get(), cfg.offdiag_scale);
        add_inplace(a, c.values);
        add_inplace(b, matmul(c.values, mdl.weight.get()));
    }
    return solve_spd(a, b, cfg.ridge_scale);
}

Matrix mean_step(const Matrix& prev, const Matrix& w, std::size_t t) {
    if (t < 2) throw ValidationError("mean_step: t must be >= 2");
    if (!prev.same_shape(w)) throw ValidationError("mean_step: shape mismatch");
    // prev + (w − prev)/t == ((t−1)·prev + w)/t, with prev as an exact fixed point
    Matrix out = prev;
    auto od = out.data();
    const auto wd = w.data();
    const double inv_t = 1.0 / static_cast<double>(t);
    for (std::size_t i = 0; i < od.size(); ++i) od[i] += (wd[i] - od[i]) * inv_t;
    return out;
}

double merge_objective(const Matrix& w, std::span<const WeightedModel> models) {
    double total = 0.0;
    for (const auto& mdl : models) {
        const Matrix d = sub(w, mdl.weight.get());
        const Matrix cd = matmul(mdl.gram.get().values, d);
        const auto dd = d.data();
        const auto cdd = cd.data();
        for (std::size_t i = 0; i < dd.size(); ++i) total += dd[i] * cdd[i];
    }
    return total;
}

namespace {

bool is_merged_linear(const LayerParams& l) { return l.kind == LayerKind::linear && !l.frozen; }

void check_grams(const Checkpoint& task, const GramMap& grams) {
    std::set<std::string> expected;
    for (const auto& layer : task.layers) {
        if (!is_merged_linear(layer)) continue;
        expected.insert(layer.name);
        auto it = grams.find(layer.name);
        if (it == grams.end()) throw ValidationError("no gram matrix for linear layer '" + layer.name + "'");
        if (it->second.dim() != layer.weight.rows()) {
            throw ValidationError("gram for layer '" + layer.name + "' has dim " + std::to_string(it->second.dim()) +
                                  ", layer input dim is " + std::to_string(layer.weight.rows()));
        }
    }
    for (const auto& [name, g] : grams)
        if (!expected.contains(name)) throw TopologyError("checkpoint topology drift: gram for unknown layer '" + name + "'");
}

}  // namespace

MergeState regcl_step(MergeState state, const Checkpoint& task, const GramMap& grams) {
    state.config.validate();
    task.validate();
    if (!task.adapters.empty())
        throw ValidationError("regcl_step expects folded weights; use merge_adapters for checkpoints with adapters");
    check_grams(task, grams);

    if (state.task_count == 0) {
        Checkpoint merged = task;
        merged.meta.merge_history = {task.meta.task_id};
        state.merged = std::move(merged);
        state.accumulators = grams;
        state.task_count = 1;
        return state;
    }

    if (!state.merged) throw ValidationError("merge state has task_count > 0 but no merged checkpoint");
    const Checkpoint& prev = *state.merged;
    if (!same_topology(prev, task)) throw TopologyError("checkpoint topology drift");
    for (const auto& [name, g] : grams)
        if (!state.accumulators.contains(name)) throw TopologyError("checkpoint topology drift");

    const std::size_t t = state.task_count + 1;
    const MergeConfig& cfg = state.config;
    Checkpoint next = prev;
    for (std::size_t i = 0; i < task.layers.size(); ++i) {
        const LayerParams& cur = task.layers[i];
        const LayerParams& old = prev.layers[i];
        LayerParams& out = next.layers[i];
        if (cur.frozen) {
            if (!(cur.weight == old.weight) || !(cur.aux == old.aux))
                throw TopologyError("checkpoint topology drift: frozen layer '" + cur.name + "' differs");
            continue;
        }
        if (cur.kind == LayerKind::linear) {
            const GramMatrix p = scale_offdiagonal(state.accumulators.at(cur.name), cfg.offdiag_scale);
            const GramMatrix c = scale_offdiagonal(grams.at(cur.name), cfg.offdiag_scale);
            Matrix rhs = matmul(p.values, old.weight);
            add_inplace(rhs, matmul(c.values, cur.weight));
            out.weight = solve_spd(add(p.values, c.values), rhs, cfg.ridge_scale);
        } else {
            out.weight = mean_step(old.weight, cur.weight, t);
        }
        for (std::size_t k = 0; k < cur.aux.size(); ++k) out.aux[k] = mean_step(old.aux[k], cur.aux[k], t);
    }
    for (const auto& [name, c] : grams) {
        GramMatrix& p = state.accumulators.at(name);
        add_inplace(p.values, c.values);
        p.sample_count += c.sample_count;
    }
    next.meta.merge_history.push_back(task.meta.task_id);
    state.merged = std::move(next);
    state.task_count = t;
    return state;
}

namespace {

constexpr const char* kHostSuffix = "#host";
constexpr const char* kFactorBSuffix = "#lora_b";

// Re-expresses a checkpoint with adapters so that each adapted layer's `a`
// factor (as aᵀ, m×r) is a linear weight fed by the layer input, the `b`
// factor is a kind=other tensor and the host weight is frozen.
Checkpoint to_factor_view(const Checkpoint& ck) {
    Checkpoint view;
    view.meta = ck.meta;
    for (const auto& layer : ck.layers) {
        const LoraAdapter* ad = ck.find_adapter(layer.name);
        if (ad == nullptr) {
            view.layers.push_back(layer);
            continue;
        }
        view.layers.push_back(
            LayerParams{layer.name + kHostSuffix, LayerKind::linear, true, layer.activation, layer.weight, {}});
        view.layers.push_back(
            LayerParams{layer.name, LayerKind::linear, false, layer.activation, transpose(ad->a), {}});
        // The bias has no Gram-compatible input in this view, so it rides along
        // with the averaged `b` factor.
        view.layers.push_back(
            LayerParams{layer.name + kFactorBSuffix, LayerKind::other, false, layer.activation, ad->b, layer.aux});
    }
    return view;
}

Checkpoint from_factor_view(const Checkpoint& view, const Checkpoint& like) {
    Checkpoint out = like;
    out.meta = view.meta;
    for (auto& layer : out.layers) {
        LoraAdapter* ad = out.find_adapter(layer.name);
        if (ad == nullptr) {
            layer = *view.find_layer(layer.name);
            continue;
        }
        const LayerParams* b_view = view.find_layer(layer.name + kFactorBSuffix);
        layer.weight = view.find_layer(layer.name + kHostSuffix)->weight;
        layer.aux = b_view->aux;
        ad->a = transpose(view.find_layer(layer.name)->weight);
        ad->b = b_view->weight;
    }
    return out;
}

}  // namespace

MergeState merge_adapters(MergeState state, const Checkpoint& task, const GramMap& grams) {
    state.config.validate();
    task.validate();
    if (state.config.lora_strategy == LoraStrategy::composite) {
        if (state.merged && !state.merged->adapters.empty())
            throw ValidationError("composite merge state holds unfolded adapters");
        return regcl_step(std::move(state), fold_adapters(task), grams);
    }

    if (state.merged) {
        const Checkpoint& prev = *state.merged;
        if (prev.adapters.size() != task.adapters.size()) throw TopologyError("checkpoint topology drift");
        for (const auto& ad : task.adapters) {
            const LoraAdapter* old = prev.find_adapter(ad.layer_name);
            if (old == nullptr || old->rank != ad.rank || old->scaling != ad.scaling)
                throw TopologyError("checkpoint topology drift: adapter on '" + ad.layer_name + "' differs");
        }
    }
    Checkpoint like = task;
    MergeState view_state = std::move(state);
    if (view_state.merged) view_state.merged = to_factor_view(*view_state.merged);
    MergeState merged = regcl_step(std::move(view_state), to_factor_view(task), grams);
    merged.merged = from_factor_view(*merged.merged, like);
    return merged;
}

Checkpoint mean_merge_step(const Checkpoint& prev, const Checkpoint& cur, std::size_t t) {
    if (!same_topology(prev, cur)) throw TopologyError("checkpoint topology drift");
    Checkpoint out = prev;
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        auto& layer = out.layers[i];
        const auto& c = cur.layers[i];
        if (layer.frozen) {
            if (!(layer.weight == c.weight) || !(layer.aux == c.aux))
                throw TopologyError("checkpoint topology drift: frozen layer '" + c.name + "' differs");
            continue;
        }
        layer.weight = mean_step(layer.weight, c.weight, t);
        for (std::size_t k = 0; k < layer.aux.size(); ++k) layer.aux[k] = mean_step(layer.aux[k], c.aux[k], t);
    }
    out.meta.merge_history.push_back(cur.meta.task_id);
    return out;
}

Checkpoint mean_merge(std::span<const Checkpoint> models) {
    if (models.empty()) throw ValidationError("mean_merge: no models to merge");
    Checkpoint merged = fold_adapters(models.front());
    merged.meta.merge_history = {merged.meta.task_id};
    for (std::size_t i = 1; i < models.size(); ++i) merged = mean_merge_step(merged, fold_adapters(models[i]), i + 1);
    return merged;
}

Checkpoint regmean_merge(std::span<const Checkpoint> models, std::span<const GramMap> grams, const MergeConfig& cfg) {
    cfg.validate();
    if (models.empty()) throw ValidationError("regmean_merge: no models to merge");
    if (models.size() != grams.size()) throw ValidationError("regmean_merge: need one gram file per checkpoint");
    std::vector<Checkpoint> folded;
    folded.reserve(models.size());
    for (std::size_t k = 0; k < models.size(); ++k) {
        folded.push_back(fold_adapters(models[k]));
        folded.back().validate();
        check_grams(folded.back(), grams[k]);
        if (k > 0 && !same_topology(folded.front(), folded.back())) throw TopologyError("checkpoint topology drift");
    }

    // Non-linear tensors and frozen checks follow the running mean.
    Checkpoint merged = folded.front();
    merged.meta.merge_history = {merged.meta.task_id};
    for (std::size_t k = 1; k < folded.size(); ++k) merged = mean_merge_step(merged, folded[k], k + 1);

    if (folded.size() == 1) return merged;
    for (std::size_t i = 0; i < merged.layers.size(); ++i) {
        LayerParams& layer = merged.layers[i];
        if (!is_merged_linear(layer)) continue;
        std::vector<WeightedModel> wm;
        for (std::size_t k = 0; k < folded.size(); ++k) wm.push_back({folded[k].layers[i].weight, grams[k].at(layer.name)});
        layer.weight = merge_batch(wm, cfg);
    }
    return merged;
}

}  // namespace regcl
