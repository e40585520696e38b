#include "regcl/model.hpp"

#include "regcl/errors.hpp"
#include "regcl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace regcl {

const char* to_string(LayerKind kind) { return kind == LayerKind::linear ? "linear" : "other"; }
const char* to_string(Activation act) { return act == Activation::tanh ? "tanh" : "identity"; }

LayerKind parse_layer_kind(const std::string& s) {
    if (s == "linear") return LayerKind::linear;
    if (s == "other") return LayerKind::other;
    throw ValidationError("unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "tanh") return Activation::tanh;
    throw ValidationError("unknown activation '" + s + "'");
}

const LayerParams* Checkpoint::find_layer(const std::string& name) const {
    auto it = std::find_if(layers.begin(), layers.end(), [&](const LayerParams& l) { return l.name == name; });
    return it == layers.end() ? nullptr : &*it;
}

LayerParams* Checkpoint::find_layer(const std::string& name) {
    return const_cast<LayerParams*>(std::as_const(*this).find_layer(name));
}

const LoraAdapter* Checkpoint::find_adapter(const std::string& layer_name) const {
    auto it = std::find_if(adapters.begin(), adapters.end(),
                           [&](const LoraAdapter& a) { return a.layer_name == layer_name; });
    return it == adapters.end() ? nullptr : &*it;
}

LoraAdapter* Checkpoint::find_adapter(const std::string& layer_name) {
    return const_cast<LoraAdapter*>(std::as_const(*this).find_adapter(layer_name));
}

namespace {

void validate_adapter_shape(const LoraAdapter& ad, const LayerParams& host) {
    const std::size_t m = host.weight.rows();
    const std::size_t n = host.weight.cols();
    if (ad.rank == 0 || ad.rank > std::min(m, n)) {
        throw ValidationError("adapter on '" + ad.layer_name + "': rank " + std::to_string(ad.rank) +
                              " outside [1, min(m,n)]");
    }
    if (ad.a.rows() != ad.rank || ad.a.cols() != m || ad.b.rows() != n || ad.b.cols() != ad.rank) {
        throw ValidationError("adapter on '" + ad.layer_name + "': factor shapes do not match host " +
                              std::to_string(m) + "x" + std::to_string(n));
    }
    if (!std::isfinite(ad.scaling)) throw ValidationError("adapter scaling is not finite");
}

}  // namespace

void Checkpoint::validate() const {
    std::set<std::string> names;
    for (const auto& layer : layers) {
        if (!names.insert(layer.name).second) throw ValidationError("duplicate layer name '" + layer.name + "'");
        if (!all_finite(layer.weight)) throw ValidationError("layer '" + layer.name + "' has non-finite weights");
        for (const auto& m : layer.aux)
            if (!all_finite(m)) throw ValidationError("layer '" + layer.name + "' has non-finite aux values");
        if (layer.has_bias() && (layer.aux[0].rows() != 1 || layer.aux[0].cols() != layer.weight.cols())) {
            throw ValidationError("layer '" + layer.name + "': bias must be 1x" +
                                  std::to_string(layer.weight.cols()));
        }
    }
    std::set<std::string> adapted;
    for (const auto& ad : adapters) {
        const LayerParams* host = find_layer(ad.layer_name);
        if (host == nullptr || host->kind != LayerKind::linear) {
            throw ValidationError("adapter targets unknown linear layer '" + ad.layer_name + "'");
        }
        if (!adapted.insert(ad.layer_name).second)
            throw ValidationError("two adapters target layer '" + ad.layer_name + "'");
        validate_adapter_shape(ad, *host);
    }
}

bool same_topology(const Checkpoint& a, const Checkpoint& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto& x = a.layers[i];
        const auto& y = b.layers[i];
        if (x.name != y.name || x.kind != y.kind || x.frozen != y.frozen || x.activation != y.activation ||
            !x.weight.same_shape(y.weight) || x.aux.size() != y.aux.size())
            return false;
        for (std::size_t k = 0; k < x.aux.size(); ++k)
            if (!x.aux[k].same_shape(y.aux[k])) return false;
    }
    return true;
}

LoraAdapter init_adapter(const std::string& layer_name, std::size_t m, std::size_t n, std::size_t rank,
                         double scaling, std::uint64_t seed) {
    if (rank == 0 || rank > std::min(m, n)) {
        throw ValidationError("adapter rank " + std::to_string(rank) + " exceeds min(m, n) = " +
                              std::to_string(std::min(m, n)));
    }
    Rng rng(mix_seed(seed, hash_tag(layer_name)));
    const double bound = 1.0 / std::sqrt(static_cast<double>(m));
    Matrix a(rank, m);
    for (double& v : a.data()) v = rng.uniform(-bound, bound);
    return LoraAdapter{layer_name, rank, scaling, std::move(a), Matrix::zeros(n, rank)};
}

Matrix effective_delta(const LoraAdapter& adapter) {
    if (adapter.b.cols() != adapter.a.rows())
        throw ValidationError("adapter '" + adapter.layer_name + "': b columns must equal a rows");
    // (b·a)ᵀ = aᵀ·bᵀ
    return scale(matmul_tn(adapter.a, transpose(adapter.b)), adapter.scaling);
}

Checkpoint apply_adapter(const Checkpoint& checkpoint, const std::vector<LoraAdapter>& adapters) {
    Checkpoint out = checkpoint;
    for (const auto& ad : adapters) {
        LayerParams* host = out.find_layer(ad.layer_name);
        if (host == nullptr || host->kind != LayerKind::linear)
            throw ValidationError("adapter targets unknown linear layer '" + ad.layer_name + "'");
        if (out.find_adapter(ad.layer_name) != nullptr)
            throw ValidationError("layer '" + ad.layer_name + "' already carries an attached adapter");
        validate_adapter_shape(ad, *host);
        add_inplace(host->weight, effective_delta(ad));
    }
    return out;
}

Checkpoint fold_adapters(const Checkpoint& checkpoint) {
    Checkpoint host = checkpoint;
    host.adapters.clear();
    return apply_adapter(host, checkpoint.adapters);
}

std::vector<LoraAdapter> refactorize_low_rank(const Checkpoint& merged, const Checkpoint& host, std::size_t rank,
                                              double scaling) {
    if (!same_topology(merged, host)) throw TopologyError("checkpoint topology drift");
    if (scaling == 0.0) throw ValidationError("refactorization scaling must be nonzero");
    const Checkpoint merged_eff = fold_adapters(merged);
    const Checkpoint host_eff = fold_adapters(host);
    std::vector<LoraAdapter> out;
    for (std::size_t i = 0; i < merged_eff.layers.size(); ++i) {
        const auto& ml = merged_eff.layers[i];
        if (ml.kind != LayerKind::linear || ml.frozen) continue;
        const Matrix delta = sub(ml.weight, host_eff.layers[i].weight);
        const std::size_t m = delta.rows();
        const std::size_t n = delta.cols();
        const std::size_t r = std::min(rank, std::min(m, n));
        if (r == 0) throw ValidationError("refactorization rank must be positive");
        const Svd d = svd(delta);
        // delta ≈ U_r S_r V_rᵀ = scaling·aᵀbᵀ with aᵀ = U_r√S_r, bᵀ = √S_r V_rᵀ / scaling
        Matrix a(r, m);
        Matrix b(n, r);
        for (std::size_t k = 0; k < r; ++k) {
            const double root = std::sqrt(d.s[k]);
            for (std::size_t row = 0; row < m; ++row) a(k, row) = d.u(row, k) * root;
            for (std::size_t col = 0; col < n; ++col) b(col, k) = d.v(col, k) * root / scaling;
        }
        out.push_back(LoraAdapter{ml.name, r, scaling, std::move(a), std::move(b)});
    }
    return out;
}

Checkpoint make_toy_model(const ToyModelConfig& cfg) {
    if (cfg.input_dim == 0 || cfg.hidden_dim == 0 || cfg.output_dim == 0)
        throw ValidationError("model dimensions must be positive");
    if (cfg.adapted_layers == 0) throw ValidationError("model needs at least one adapted layer");

    Checkpoint ck;
    ck.meta.seed = cfg.seed;
    Rng rng(mix_seed(cfg.seed, hash_tag("toy-model")));
    auto kaiming = [&](std::size_t fan_in, std::size_t fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Matrix w(fan_in, fan_out);
        for (double& v : w.data()) v = rng.uniform(-bound, bound);
        return w;
    };

    std::size_t width = cfg.input_dim;
    if (cfg.with_encoder) {
        ck.layers.push_back(LayerParams{"encoder", LayerKind::linear, true, Activation::tanh,
                                        kaiming(cfg.input_dim, cfg.hidden_dim), {}});
        width = cfg.hidden_dim;
    }
    for (std::size_t i = 0; i < cfg.adapted_layers; ++i) {
        const bool last = i + 1 == cfg.adapted_layers;
        const std::size_t out_dim = last ? cfg.output_dim : cfg.hidden_dim;
        LayerParams layer{"l" + std::to_string(i + 1), LayerKind::linear, false, Activation::identity,
                          kaiming(width, out_dim), {Matrix::zeros(1, out_dim)}};
        const std::size_t r = std::min(cfg.lora_rank, std::min(width, out_dim));
        ck.adapters.push_back(init_adapter(layer.name, width, out_dim, r, cfg.lora_scaling, cfg.seed));
        ck.layers.push_back(std::move(layer));
        width = out_dim;
    }
    ck.validate();
    return ck;
}

namespace {

struct LayerEval {
    Matrix out;
    Matrix lora_hidden;
};

LayerEval eval_layer(const LayerParams& layer, const LoraAdapter* adapter, const Matrix& x) {
    if (layer.kind != LayerKind::linear)
        throw ValidationError("layer '" + layer.name + "' is not a linear layer and has no forward rule");
    if (x.cols() != layer.weight.rows()) {
        throw ValidationError("layer '" + layer.name + "' expects " + std::to_string(layer.weight.rows()) +
                              " inputs, got " + std::to_string(x.cols()));
    }
    LayerEval ev;
    ev.out = matmul(x, layer.weight);
    if (adapter != nullptr) {
        ev.lora_hidden = matmul_nt(x, adapter->a);
        axpy_inplace(ev.out, adapter->scaling, matmul_nt(ev.lora_hidden, adapter->b));
    }
    if (layer.has_bias()) {
        const auto bias = layer.aux[0].row(0);
        for (std::size_t r = 0; r < ev.out.rows(); ++r) {
            auto row = ev.out.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
        }
    }
    if (layer.activation == Activation::tanh)
        for (double& v : ev.out.data()) v = std::tanh(v);
    return ev;
}

}  // namespace

std::size_t frozen_prefix_length(const Checkpoint& model) {
    std::size_t i = 0;
    while (i < model.layers.size() && model.layers[i].frozen) ++i;
    return i;
}

Matrix forward_range(const Checkpoint& model, const Matrix& x, std::size_t first, std::size_t count) {
    if (first + count > model.layers.size()) throw ValidationError("forward_range: layer range out of bounds");
    Matrix h = x;
    for (std::size_t i = first; i < first + count; ++i) {
        const auto& layer = model.layers[i];
        h = eval_layer(layer, model.find_adapter(layer.name), h).out;
    }
    return h;
}

ForwardResult forward_capture(const Checkpoint& model, const Matrix& x, bool capture) {
    ForwardResult res;
    Matrix h = x;
    for (const auto& layer : model.layers) {
        if (capture && layer.kind == LayerKind::linear && !layer.frozen) res.captures.emplace(layer.name, h);
        h = eval_layer(layer, model.find_adapter(layer.name), h).out;
    }
    res.outputs = std::move(h);
    if (x.rows() == 0) res.captures.clear();
    return res;
}

ForwardTrace forward_trace(const Checkpoint& model, const Matrix& x, std::size_t first_layer) {
    ForwardTrace tr;
    tr.first_layer = first_layer;
    Matrix h = x;
    for (std::size_t i = first_layer; i < model.layers.size(); ++i) {
        const auto& layer = model.layers[i];
        LayerEval ev = eval_layer(layer, model.find_adapter(layer.name), h);
        tr.inputs.push_back(std::move(h));
        tr.lora_hidden.push_back(std::move(ev.lora_hidden));
        tr.outputs.push_back(ev.out);
        h = std::move(ev.out);
    }
    return tr;
}

ParamGradients backward(const Checkpoint& model, const ForwardTrace& trace, const Matrix& grad_output) {
    ParamGradients grads;
    Matrix g = grad_output;
    for (std::size_t k = trace.inputs.size(); k-- > 0;) {
        const auto& layer = model.layers[trace.first_layer + k];
        if (layer.frozen) break;
        if (layer.activation == Activation::tanh) {
            const auto y = trace.outputs[k].data();
            auto gd = g.data();
            for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= 1.0 - y[i] * y[i];
        }
        if (layer.has_bias()) {
            Matrix db(1, g.cols());
            for (std::size_t r = 0; r < g.rows(); ++r) {
                const auto row = g.row(r);
                for (std::size_t c = 0; c < row.size(); ++c) db(0, c) += row[c];
            }
            grads.bias.emplace(layer.name, std::move(db));
        }
        const LoraAdapter* ad = model.find_adapter(layer.name);
        Matrix w_eff = layer.weight;
        if (ad != nullptr) {
            const Matrix& u = trace.lora_hidden[k];  // N×r
            // z += s·u·bᵀ  ⇒  dB = s·gᵀu, du = s·g·b, dA = duᵀx
            grads.adapter_b.emplace(layer.name, scale(matmul_tn(g, u), ad->scaling));
            const Matrix du = scale(matmul(g, ad->b), ad->scaling);
            grads.adapter_a.emplace(layer.name, matmul_tn(du, trace.inputs[k]));
            add_inplace(w_eff, effective_delta(*ad));
        }
        if (k > 0 && !model.layers[trace.first_layer + k - 1].frozen) g = matmul_nt(g, w_eff);
        else break;
    }
    return grads;
}

}  // namespace regcl
