#include "regcl/harness.hpp"

#include "regcl/errors.hpp"
#include "regcl/rng.hpp"

#include <cmath>
#include <numeric>

namespace regcl {

Matrix threshold_mask(const Matrix& prob, double threshold) {
    Matrix m = prob;
    for (double& v : m.data()) v = v >= threshold ? 1.0 : 0.0;
    return m;
}

SegScores seg_metrics(const Matrix& pred_mask, const Matrix& gt_mask, const Matrix& pred_prob) {
    if (!pred_mask.same_shape(gt_mask) || !pred_prob.same_shape(gt_mask))
        throw ValidationError("seg_metrics: mask and probability shapes differ");
    if (gt_mask.rows() == 0) throw ValidationError("seg_metrics: empty evaluation set");
    SegScores total;
    for (std::size_t r = 0; r < gt_mask.rows(); ++r) {
        const auto p = pred_mask.row(r);
        const auto g = gt_mask.row(r);
        const auto prob = pred_prob.row(r);
        double inter = 0.0, np = 0.0, ng = 0.0, abs_err = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) {
            const bool pi = p[c] >= 0.5;
            const bool gi = g[c] >= 0.5;
            inter += (pi && gi) ? 1.0 : 0.0;
            np += pi ? 1.0 : 0.0;
            ng += gi ? 1.0 : 0.0;
            abs_err += std::abs(prob[c] - g[c]);
        }
        const double uni = np + ng - inter;
        total.iou += uni == 0.0 ? 1.0 : inter / uni;
        total.f1 += (np + ng) == 0.0 ? 1.0 : 2.0 * inter / (np + ng);
        total.mae += p.empty() ? 0.0 : abs_err / static_cast<double>(p.size());
    }
    const double n = static_cast<double>(gt_mask.rows());
    total.iou /= n;
    total.f1 /= n;
    total.mae /= n;
    return total;
}

SegScores evaluate(const Checkpoint& model, const TaskDataset& test) {
    if (test.size() == 0) throw ValidationError("evaluation set is empty");
    const Matrix prob = sigmoid(forward_capture(model, test.inputs(), false).outputs);
    return seg_metrics(threshold_mask(prob), test.targets(), prob);
}

double average_accuracy(const ResultMatrix& r) {
    const std::size_t t = r.tasks();
    if (t == 0) throw ValidationError("result matrix is empty");
    const auto& last = r.values.back();
    if (last.size() != t) throw ValidationError("result matrix must be square");
    return std::accumulate(last.begin(), last.end(), 0.0) / static_cast<double>(t);
}

TransferMetrics continual_metrics(const ResultMatrix& r) {
    const std::size_t t = r.tasks();
    if (t < 2) throw ValidationError("BWT and FWT need at least two tasks");
    for (const auto& row : r.values)
        if (row.size() != t) throw ValidationError("result matrix must be square");
    TransferMetrics m;
    m.acc = average_accuracy(r);
    const auto& last = r.values.back();
    for (std::size_t i = 0; i + 1 < t; ++i) {
        m.bwt += last[i] - r.values[i][i];
        m.fwt += r.values[i][i + 1];
    }
    m.bwt /= static_cast<double>(t - 1);
    m.fwt /= static_cast<double>(t - 1);
    return m;
}

double diagonal_mean(const ResultMatrix& r) {
    if (r.tasks() == 0) throw ValidationError("result matrix is empty");
    double s = 0.0;
    for (std::size_t i = 0; i < r.tasks(); ++i) s += r.values[i][i];
    return s / static_cast<double>(r.tasks());
}

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::regcl: return "regcl";
        case Strategy::lora_seq: return "lora_seq";
        case Strategy::mean_merge: return "mean_merge";
        case Strategy::independent: return "independent";
        case Strategy::frozen: return "frozen";
    }
    return "regcl";
}

Strategy parse_strategy(const std::string& s) {
    for (Strategy v : {Strategy::regcl, Strategy::lora_seq, Strategy::mean_merge, Strategy::independent,
                       Strategy::frozen})
        if (s == to_string(v)) return v;
    throw ValidationError("unknown strategy '" + s + "' (expected regcl|lora_seq|mean_merge|independent|frozen)");
}

std::uint64_t task_seed(std::uint64_t run_seed, const DomainSpec& domain) {
    return mix_seed(mix_seed(run_seed, domain.seed), hash_tag(domain.name));
}

Checkpoint initial_model(const SequenceConfig& cfg) {
    ToyModelConfig m = cfg.model;
    m.seed = mix_seed(cfg.seed, hash_tag("w0"));
    Checkpoint w0 = make_toy_model(m);
    w0.meta.seed = cfg.seed;
    w0.meta.task_id = "init";
    return w0;
}

TaskDataset sample_replay_buffer(const TaskDataset& train, std::size_t k, std::uint64_t seed) {
    if (k > train.size()) {
        throw ValidationError("replay sample count " + std::to_string(k) + " exceeds dataset size " +
                              std::to_string(train.size()));
    }
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    // partial Fisher-Yates: the first k slots end up a uniform sample
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return train.subset(idx);
}

MergeState replay_finetune(MergeState state, const std::vector<TaskDataset>& buffers, const TaskDataset& current,
                           std::size_t k, const Checkpoint& adapter_template, const TrainConfig& tc,
                           const LossConfig& lc) {
    if (k == 0) return state;
    if (!state.merged) throw ValidationError("replay fine-tuning needs a merged model");
    if (k > current.size()) {
        throw ValidationError("replay sample count " + std::to_string(k) + " exceeds dataset size " +
                              std::to_string(current.size()));
    }
    std::vector<const TaskDataset*> parts;
    for (const auto& b : buffers) parts.push_back(&b);
    parts.push_back(&current);
    const TaskDataset pool = parts.size() == 1 ? current : concat_datasets(current.task_id() + "+replay", parts);

    const CheckpointMeta meta = state.merged->meta;
    if (state.config.lora_strategy == LoraStrategy::composite) {
        Checkpoint start = *state.merged;
        start.adapters = adapter_template.adapters;
        for (auto& ad : start.adapters) std::fill(ad.b.data().begin(), ad.b.data().end(), 0.0);
        start.validate();
        state.merged = fold_adapters(train_task(start, pool, tc, lc).model);
    } else {
        state.merged = train_task(*state.merged, pool, tc, lc).model;
    }
    state.merged->meta = meta;
    return state;
}

namespace {

struct Row {
    std::vector<double> iou, f1, mae;
};

void push_scores(Row& row, const SegScores& s) {
    row.iou.push_back(s.iou);
    row.f1.push_back(s.f1);
    row.mae.push_back(s.mae);
}

Row evaluate_row(const Checkpoint& model, const std::vector<TaskPair>& tasks) {
    Row row;
    for (const auto& t : tasks) push_scores(row, evaluate(model, t.test));
    return row;
}

template <typename Fn>
auto with_task_context(std::size_t index, const std::string& id, Fn&& fn) {
    const std::string ctx = "task " + std::to_string(index + 1) + " (" + id + "): ";
    try {
        return fn();
    } catch (const NumericalError& e) {
        throw NumericalError(ctx + e.what());
    } catch (const TopologyError& e) {
        throw TopologyError(ctx + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(ctx + e.what());
    }
}

}  // namespace

SequenceResult run_sequence(const std::vector<TaskPair>& tasks, const SequenceConfig& cfg,
                            const SequenceObserver& observer) {
    if (tasks.size() < 2) throw ValidationError("a sequence needs at least two tasks");
    cfg.train.validate();
    cfg.loss.validate();
    cfg.merge.validate();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const DomainSpec& d = tasks[i].train.domain();
        if (d.input_dim() != cfg.model.input_dim || d.output_dim() != cfg.model.output_dim) {
            throw TopologyError("task " + std::to_string(i + 1) + " (" + tasks[i].train.task_id() +
                                "): domain dims do not match the model");
        }
    }

    const std::size_t n_tasks = tasks.size();
    const Checkpoint w0 = initial_model(cfg);
    std::vector<Row> rows;
    SequenceResult out;

    auto notify_start = [&](std::size_t i) {
        if (observer.task_training_started) observer.task_training_started(i, tasks[i].train.task_id());
    };
    auto notify_finish = [&](std::size_t i) {
        if (observer.task_training_finished) observer.task_training_finished(i, tasks[i].train.task_id());
    };
    auto train_config_for = [&](std::size_t i) {
        TrainConfig tc = cfg.train;
        tc.seed = task_seed(cfg.seed, tasks[i].train.domain());
        return tc;
    };
    auto train_fresh = [&](std::size_t i) {
        TrainResult r = train_task(w0, tasks[i].train, train_config_for(i), cfg.loss);
        r.model.meta.task_id = tasks[i].train.task_id();
        return r;
    };

    const Checkpoint frozen = fold_adapters(w0);
    switch (cfg.strategy) {
        case Strategy::frozen: {
            const Row row = evaluate_row(frozen, tasks);
            for (std::size_t i = 0; i < n_tasks; ++i) {
                rows.push_back(row);
                out.step_models.push_back(frozen);
            }
            out.final_model = frozen;
            break;
        }
        case Strategy::independent: {
            const Row base = evaluate_row(frozen, tasks);
            for (std::size_t i = 0; i < n_tasks; ++i) {
                notify_start(i);
                TrainResult r = with_task_context(i, tasks[i].train.task_id(), [&] { return train_fresh(i); });
                notify_finish(i);
                Row row = base;
                const SegScores own = evaluate(r.model, tasks[i].test);
                row.iou[i] = own.iou;
                row.f1[i] = own.f1;
                row.mae[i] = own.mae;
                rows.push_back(std::move(row));
                out.step_models.push_back(r.model);
                out.task_models.push_back(r.model);
                out.histories.push_back(std::move(r.history));
            }
            out.final_model = out.step_models.back();
            break;
        }
        case Strategy::lora_seq: {
            Checkpoint cur = w0;
            for (std::size_t i = 0; i < n_tasks; ++i) {
                notify_start(i);
                TrainResult r = with_task_context(i, tasks[i].train.task_id(),
                                                  [&] { return train_task(cur, tasks[i].train, train_config_for(i), cfg.loss); });
                notify_finish(i);
                cur = std::move(r.model);
                cur.meta.task_id = tasks[i].train.task_id();
                rows.push_back(evaluate_row(cur, tasks));
                out.step_models.push_back(cur);
                out.histories.push_back(std::move(r.history));
            }
            out.final_model = cur;
            break;
        }
        case Strategy::mean_merge: {
            Checkpoint merged;
            for (std::size_t i = 0; i < n_tasks; ++i) {
                notify_start(i);
                TrainResult r = with_task_context(i, tasks[i].train.task_id(), [&] { return train_fresh(i); });
                notify_finish(i);
                const Checkpoint folded = fold_adapters(r.model);
                if (i == 0) {
                    merged = folded;
                    merged.meta.merge_history = {folded.meta.task_id};
                } else {
                    merged = with_task_context(i, tasks[i].train.task_id(),
                                               [&] { return mean_merge_step(merged, folded, i + 1); });
                }
                rows.push_back(evaluate_row(merged, tasks));
                out.step_models.push_back(merged);
                out.task_models.push_back(r.model);
                out.histories.push_back(std::move(r.history));
            }
            out.final_model = merged;
            break;
        }
        case Strategy::regcl: {
            MergeState state;
            state.config = cfg.merge;
            std::vector<TaskDataset> buffers;
            for (std::size_t i = 0; i < n_tasks; ++i) {
                const std::string& id = tasks[i].train.task_id();
                notify_start(i);
                TrainResult r = with_task_context(i, id, [&] { return train_fresh(i); });
                state = with_task_context(i, id, [&] { return merge_adapters(std::move(state), r.model, r.grams); });
                if (cfg.replay_k > 0) {
                    const TrainConfig tc = train_config_for(i);
                    TaskDataset buffer = with_task_context(i, id, [&] {
                        return sample_replay_buffer(tasks[i].train, cfg.replay_k, mix_seed(tc.seed, hash_tag("replay")));
                    });
                    TrainConfig replay_tc = tc;
                    replay_tc.seed = mix_seed(tc.seed, hash_tag("replay-finetune"));
                    state = with_task_context(i, id, [&] {
                        return replay_finetune(std::move(state), buffers, tasks[i].train, cfg.replay_k, w0, replay_tc,
                                               cfg.loss);
                    });
                    buffers.push_back(std::move(buffer));
                }
                notify_finish(i);
                rows.push_back(evaluate_row(*state.merged, tasks));
                out.step_models.push_back(*state.merged);
                out.step_states.push_back(state);
                out.task_models.push_back(r.model);
                out.histories.push_back(std::move(r.history));
            }
            out.final_model = *state.merged;
            out.state = std::move(state);
            break;
        }
    }

    std::vector<std::string> ids;
    for (const auto& t : tasks) ids.push_back(t.train.task_id());
    auto collect = [&](const char* name, auto member) {
        ResultMatrix r{name, ids, {}};
        for (const auto& row : rows) r.values.push_back(row.*member);
        out.metrics[name] = continual_metrics(r);
        out.results[name] = std::move(r);
    };
    collect("miou", &Row::iou);
    collect("mf1", &Row::f1);
    collect("mmae", &Row::mae);
    return out;
}

}  // namespace regcl
