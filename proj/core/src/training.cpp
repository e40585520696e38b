#include "regcl/training.hpp"

#include "regcl/dataset.hpp"
#include "regcl/errors.hpp"
#include "regcl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace regcl {

const char* to_string(LrSchedule s) { return s == LrSchedule::cosine_annealing ? "cosine_annealing" : "constant"; }

LrSchedule parse_lr_schedule(const std::string& s) {
    if (s == "cosine_annealing") return LrSchedule::cosine_annealing;
    if (s == "constant") return LrSchedule::constant;
    throw ValidationError("unknown lr schedule '" + s + "'");
}

const char* to_string(OutputActivation a) { return a == OutputActivation::sigmoid ? "sigmoid" : "identity"; }

OutputActivation parse_output_activation(const std::string& s) {
    if (s == "sigmoid") return OutputActivation::sigmoid;
    if (s == "identity") return OutputActivation::identity;
    throw ValidationError("unknown output activation '" + s + "'");
}

void LossConfig::validate() const {
    if (!(focal_gamma >= 0.0)) throw ValidationError("focal_gamma must be >= 0");
    if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) throw ValidationError("focal_alpha must lie in (0, 1)");
    if (!(dice_smooth > 0.0)) throw ValidationError("dice_smooth must be > 0");
    for (double w : {mse_weight, focal_weight, dice_weight})
        if (!std::isfinite(w)) throw ValidationError("loss weights must be finite");
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be > 0");
}

double TrainConfig::lr_at(std::size_t epoch) const {
    if (schedule == LrSchedule::constant || epochs == 0) return lr;
    // anneals from lr towards 0 across the run
    return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

namespace {

void require_same_shape(const Matrix& pred, const Matrix& target, const char* what) {
    if (!pred.same_shape(target)) throw ValidationError(std::string(what) + ": prediction and target shapes differ");
}

}  // namespace

LossValue mse_loss(const Matrix& pred, const Matrix& target) {
    require_same_shape(pred, target, "mse_loss");
    LossValue out{0.0, Matrix(pred.rows(), pred.cols())};
    if (pred.empty()) return out;
    const double inv = 1.0 / static_cast<double>(pred.size());
    const auto p = pred.data();
    const auto t = target.data();
    auto g = out.grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        out.value += d * d;
        g[i] = 2.0 * d * inv;
    }
    out.value *= inv;
    return out;
}

LossValue focal_loss(const Matrix& pred, const Matrix& target, const LossConfig& cfg) {
    require_same_shape(pred, target, "focal_loss");
    LossValue out{0.0, Matrix(pred.rows(), pred.cols())};
    if (pred.empty()) return out;
    const double inv = 1.0 / static_cast<double>(pred.size());
    const double gamma = cfg.focal_gamma;
    const double alpha = cfg.focal_alpha;
    const auto p_raw = pred.data();
    const auto t = target.data();
    auto g = out.grad.data();
    for (std::size_t i = 0; i < p_raw.size(); ++i) {
        const bool clamped = p_raw[i] < kProbEpsilon || p_raw[i] > 1.0 - kProbEpsilon;
        const double p = std::clamp(p_raw[i], kProbEpsilon, 1.0 - kProbEpsilon);
        const bool positive = t[i] >= 0.5;
        // p_t and the sign of dp_t/dp
        const double pt = positive ? p : 1.0 - p;
        const double dpt = positive ? 1.0 : -1.0;
        const double at = positive ? alpha : 1.0 - alpha;
        const double one_minus = 1.0 - pt;
        const double mod = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
        const double log_pt = std::log(pt);
        out.value += -at * mod * log_pt;
        if (clamped) continue;
        // d/dpt [−a (1−pt)^γ log pt] = a γ (1−pt)^(γ−1) log pt − a (1−pt)^γ / pt
        const double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(one_minus, gamma - 1.0);
        g[i] = (at * dmod * log_pt - at * mod / pt) * dpt * inv;
    }
    out.value *= inv;
    return out;
}

LossValue dice_loss(const Matrix& pred, const Matrix& target, const LossConfig& cfg) {
    require_same_shape(pred, target, "dice_loss");
    LossValue out{0.0, Matrix(pred.rows(), pred.cols())};
    if (pred.rows() == 0) return out;
    const double s = cfg.dice_smooth;
    const double inv_n = 1.0 / static_cast<double>(pred.rows());
    for (std::size_t r = 0; r < pred.rows(); ++r) {
        const auto p = pred.row(r);
        const auto t = target.row(r);
        double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) {
            inter += p[c] * t[c];
            sum_p += p[c];
            sum_t += t[c];
        }
        const double num = 2.0 * inter + s;
        const double den = sum_p + sum_t + s;
        out.value += 1.0 - num / den;
        auto g = out.grad.row(r);
        const double inv_den2 = 1.0 / (den * den);
        for (std::size_t c = 0; c < p.size(); ++c) g[c] = -(2.0 * t[c] * den - num) * inv_den2 * inv_n;
    }
    out.value *= inv_n;
    return out;
}

TotalLoss total_loss(const Matrix& pred, const Matrix& target, const LossConfig& cfg) {
    cfg.validate();
    require_same_shape(pred, target, "total_loss");
    TotalLoss out;
    out.grad = Matrix(pred.rows(), pred.cols());
    if (cfg.mse_weight != 0.0) {
        LossValue l = mse_loss(pred, target);
        out.mse = l.value;
        out.value += cfg.mse_weight * l.value;
        axpy_inplace(out.grad, cfg.mse_weight, l.grad);
    }
    if (cfg.focal_weight != 0.0) {
        LossValue l = focal_loss(pred, target, cfg);
        out.focal = l.value;
        out.value += cfg.focal_weight * l.value;
        axpy_inplace(out.grad, cfg.focal_weight, l.grad);
    }
    if (cfg.dice_weight != 0.0) {
        LossValue l = dice_loss(pred, target, cfg);
        out.dice = l.value;
        out.value += cfg.dice_weight * l.value;
        axpy_inplace(out.grad, cfg.dice_weight, l.grad);
    }
    return out;
}

Matrix sigmoid(const Matrix& logits) {
    Matrix p = logits;
    for (double& v : p.data()) v = 1.0 / (1.0 + std::exp(-v));
    return p;
}

TotalLoss loss_on_logits(const Matrix& logits, const Matrix& target, const LossConfig& cfg) {
    if (cfg.output == OutputActivation::identity) return total_loss(logits, target, cfg);
    const Matrix p = sigmoid(logits);
    TotalLoss out = total_loss(p, target, cfg);
    auto g = out.grad.data();
    const auto pd = p.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pd[i] * (1.0 - pd[i]);
    return out;
}

GramMap compute_grams(const Checkpoint& model, const Matrix& inputs, std::size_t block_rows) {
    GramMap grams;
    for (const auto& layer : model.layers)
        if (layer.kind == LayerKind::linear && !layer.frozen) grams.emplace(layer.name, GramMatrix::zeros(layer.weight.rows()));
    block_rows = std::max<std::size_t>(block_rows, 1);
    for (std::size_t first = 0; first < inputs.rows(); first += block_rows) {
        const std::size_t count = std::min(block_rows, inputs.rows() - first);
        const ForwardResult fr = forward_capture(model, slice_rows(inputs, first, count), true);
        for (auto& [name, g] : grams) g = gram_accumulate(std::move(g), fr.captures.at(name));
    }
    return grams;
}

TrainResult train_on(const Checkpoint& model, const Matrix& inputs, const Matrix& targets, const TrainConfig& tc,
                     const LossConfig& lc) {
    tc.validate();
    lc.validate();
    model.validate();
    if (inputs.rows() != targets.rows()) throw ValidationError("train: inputs and targets differ in row count");

    TrainResult res;
    res.model = model;
    Checkpoint& m = res.model;
    const std::size_t prefix = frozen_prefix_length(m);
    const Matrix features = forward_range(m, inputs, 0, prefix);

    std::vector<std::size_t> order(inputs.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(tc.seed, hash_tag("shuffle")));

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < tc.epochs && !order.empty(); ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        const double lr = tc.lr_at(epoch);
        for (std::size_t first = 0; first < order.size(); first += tc.batch_size) {
            const std::size_t count = std::min(tc.batch_size, order.size() - first);
            const std::span<const std::size_t> idx(order.data() + first, count);
            const Matrix xb = gather_rows(features, idx);
            const Matrix yb = gather_rows(targets, idx);

            const ForwardTrace trace = forward_trace(m, xb, prefix);
            const TotalLoss loss = loss_on_logits(trace.outputs.back(), yb, lc);
            if (!std::isfinite(loss.value) || !all_finite(loss.grad))
                throw NumericalError("training diverged at step " + std::to_string(step));
            res.history.push_back(LossRecord{epoch, step, loss.value, loss.mse, loss.focal, loss.dice});

            const ParamGradients grads = backward(m, trace, loss.grad);
            for (auto& ad : m.adapters) {
                if (auto it = grads.adapter_a.find(ad.layer_name); it != grads.adapter_a.end())
                    axpy_inplace(ad.a, -lr, it->second);
                if (auto it = grads.adapter_b.find(ad.layer_name); it != grads.adapter_b.end())
                    axpy_inplace(ad.b, -lr, it->second);
            }
            for (const auto& [name, db] : grads.bias) axpy_inplace(m.find_layer(name)->aux[0], -lr, db);
            ++step;
        }
    }
    for (const auto& ad : m.adapters)
        if (!all_finite(ad.a) || !all_finite(ad.b))
            throw NumericalError("training diverged at step " + std::to_string(step));

    res.grams = compute_grams(m, inputs);
    return res;
}

TrainResult train_task(const Checkpoint& model, const TaskDataset& task, const TrainConfig& tc, const LossConfig& lc) {
    return train_on(model, task.inputs(), task.targets(), tc, lc);
}

}  // namespace regcl
