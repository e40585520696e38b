// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "cli.hpp"
#include "oracles.hpp"
#include "privacy.hpp"

#include "regcl/errors.hpp"
#include "regcl/harness.hpp"
#include "regcl/io.hpp"
#include "regcl/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace regcl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

// Default-sized run on the five-domain suite, as the CLI `sequence` command runs it.
io::RunConfig default_run(std::uint64_t seed, Strategy s) {
    io::RunConfig cfg;
    cfg.run.seed = seed;
    cfg.run.strategy = s;
    cfg.sequence = default5_suite(seed);
    return cfg;
}

std::vector<TaskPair> make_tasks(const io::RunConfig& cfg) {
    std::vector<TaskPair> tasks;
    for (const auto& d : cfg.sequence) tasks.push_back(gen_domain(d, cfg.n_train, cfg.n_test));
    return tasks;
}

// Criterion 1 ------------------------------------------------------------

Outcome closed_form_optimality() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(101);
    MergeConfig cfg;
    double worst_rel = 0.0, worst_obj = -1.0;
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t m = oracle::random_int(gen, 1, 8);
        const std::size_t n = oracle::random_int(gen, 1, 4);
        std::size_t n1 = 0, n2 = 0;
        do {
            n1 = oracle::random_int(gen, 1, 100);
            n2 = oracle::random_int(gen, 1, 100);
        } while (n1 + n2 < m);
        const Matrix x1 = oracle::random_matrix(gen, n1, m), x2 = oracle::random_matrix(gen, n2, m, 2.0);
        const Matrix w1 = oracle::random_matrix(gen, m, n), w2 = oracle::random_matrix(gen, m, n);
        const Matrix w = merge_pair(w1, gram(x1), w2, gram(x2), cfg);
        const Matrix ref = oracle::stacked_merge({x1, x2}, {w1, w2});
        worst_rel = std::max(worst_rel, oracle::rel_err(w, ref));
        const double ours = oracle::merge_objective(w, {x1, x2}, {w1, w2});
        const double best = oracle::merge_objective(ref, {x1, x2}, {w1, w2});
        worst_obj = std::max(worst_obj, ours / best - 1.0);
    }
    const double secs = seconds_since(t0);
    return {worst_rel <= 1e-8 && worst_obj <= 1e-10 && secs < 5.0,
            fmt("50 instances, max rel err %.2e, max objective excess %.2e, %.3f s", worst_rel, worst_obj, secs)};
}

// Criterion 2 ------------------------------------------------------------

Outcome kway_consistency() {
    std::mt19937_64 gen(202);
    MergeConfig exact;
    exact.ridge_scale = 0.0;
    int pair_mismatch = 0, single_mismatch = 0;
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t m = oracle::random_int(gen, 1, 8), n = oracle::random_int(gen, 1, 4);
        const GramMatrix c1 = gram(oracle::random_matrix(gen, m + 5, m));
        const GramMatrix c2 = gram(oracle::random_matrix(gen, m + 3, m));
        const Matrix w1 = oracle::random_matrix(gen, m, n), w2 = oracle::random_matrix(gen, m, n);
        const WeightedModel two[] = {{w1, c1}, {w2, c2}};
        for (const MergeConfig& cfg : {MergeConfig{}, exact})
            if (!(merge_batch(two, cfg) == merge_pair(w1, c1, w2, c2, cfg))) ++pair_mismatch;
        const WeightedModel one[] = {{w1, c1}};
        if (!(merge_batch(one, exact) == w1)) ++single_mismatch;
    }
    return {pair_mismatch == 0 && single_mismatch == 0,
            fmt("K=2 bitwise mismatches %d/100, K=1 inexact %d/50", pair_mismatch, single_mismatch)};
}

// Criterion 3 ------------------------------------------------------------

Outcome batch_incremental_equivalence() {
    std::mt19937_64 gen(303);
    double worst = 0.0;
    std::size_t layers_checked = 0;
    for (int seq = 0; seq < 20; ++seq) {
        ToyModelConfig mc;
        mc.input_dim = oracle::random_int(gen, 4, 10);
        mc.hidden_dim = oracle::random_int(gen, 3, 8);
        mc.output_dim = oracle::random_int(gen, 2, 6);
        mc.lora_rank = 2;
        mc.adapted_layers = oracle::random_int(gen, 1, 3);
        mc.seed = gen();
        const std::size_t k = oracle::random_int(gen, 3, 5);
        std::vector<Checkpoint> folded;
        std::vector<GramMap> grams;
        MergeState state;
        for (std::size_t t = 0; t < k; ++t) {
            Checkpoint ck = make_toy_model(mc);
            for (auto& ad : ck.adapters) {
                ad.a = oracle::random_matrix(gen, ad.a.rows(), ad.a.cols(), 0.3);
                ad.b = oracle::random_matrix(gen, ad.b.rows(), ad.b.cols(), 0.3);
            }
            for (auto& l : ck.layers)
                if (l.has_bias()) l.aux[0] = oracle::random_matrix(gen, 1, l.weight.cols(), 0.2);
            const std::size_t rows = oracle::random_int(gen, 5, 60);
            const Matrix x = oracle::random_matrix(gen, rows, mc.input_dim, 0.5 + static_cast<double>(t));
            GramMap g;
            for (const auto& [name, cap] : forward_capture(ck, x).captures) g[name] = gram(cap);
            folded.push_back(fold_adapters(ck));
            grams.push_back(g);
            state = regcl_step(std::move(state), folded.back(), g);
        }
        for (const auto& layer : state.merged->layers) {
            if (layer.frozen || layer.kind != LayerKind::linear) continue;
            std::vector<WeightedModel> wm;
            for (std::size_t t = 0; t < k; ++t)
                wm.push_back({folded[t].find_layer(layer.name)->weight, grams[t].at(layer.name)});
            worst = std::max(worst, oracle::rel_err(layer.weight, merge_batch(wm, state.config)));
            ++layers_checked;
        }
    }
    return {worst <= 1e-10, fmt("20 sequences, %zu layers, max rel diff %.2e", layers_checked, worst)};
}

// Criterion 4 ------------------------------------------------------------

struct OrderRun {
    SequenceResult result;
    std::vector<TaskPair> tasks;
};

Outcome order_independence(std::vector<OrderRun>& runs_out) {
    const auto t0 = Clock::now();
    const io::RunConfig cfg = default_run(7, Strategy::regcl);
    const std::vector<TaskPair> base = make_tasks(cfg);
    std::mt19937_64 gen(404);
    std::vector<std::vector<std::size_t>> orders;
    std::vector<std::size_t> order(base.size());
    std::iota(order.begin(), order.end(), 0);
    while (orders.size() < 3) {
        std::shuffle(order.begin(), order.end(), gen);
        if (std::find(orders.begin(), orders.end(), order) == orders.end()) orders.push_back(order);
    }
    double worst = 0.0;
    for (const auto& ord : orders) {
        std::vector<TaskPair> tasks;
        for (std::size_t i : ord) tasks.push_back(base[i]);
        runs_out.push_back({run_sequence(tasks, cfg.run), tasks});
    }
    const Checkpoint& ref = runs_out.front().result.final_model;
    std::size_t layers = 0;
    for (std::size_t r = 1; r < runs_out.size(); ++r) {
        for (const auto& layer : ref.layers) {
            if (layer.frozen || layer.kind != LayerKind::linear) continue;
            const LayerParams* other = runs_out[r].result.final_model.find_layer(layer.name);
            worst = std::max(worst, max_abs_diff(layer.weight, other->weight));
            ++layers;
        }
    }
    return {worst <= 1e-8, fmt("3 permutations of default5, %zu layer comparisons, max abs diff %.2e, %.1f s", layers,
                               worst, seconds_since(t0))};
}

// Criterion 5 ------------------------------------------------------------

Outcome mean_path() {
    std::mt19937_64 gen(505);
    double worst = 0.0;
    bool fixed_point = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t r = oracle::random_int(gen, 1, 9), c = oracle::random_int(gen, 1, 9);
        std::vector<Matrix> ws;
        for (int i = 0; i < 5; ++i) ws.push_back(oracle::random_matrix(gen, r, c, 1.0 + i));
        Matrix running = ws[0];
        for (std::size_t t = 2; t <= 5; ++t) running = mean_step(running, ws[t - 1], t);
        Matrix ref(r, c);
        for (std::size_t k = 0; k < ref.size(); ++k) {
            long double s = 0.0L;
            for (const auto& w : ws) s += w.data()[k];
            ref.data()[k] = static_cast<double>(s / 5.0L);
        }
        worst = std::max(worst, oracle::max_abs(running, ref));
        for (std::size_t t = 2; t <= 6; ++t) fixed_point = fixed_point && mean_step(ws[0], ws[0], t) == ws[0];
    }
    return {worst <= 1e-12 && fixed_point,
            fmt("20 trials of 5 tensors, max abs diff %.2e, fixed point %s", worst, fixed_point ? "holds" : "broken")};
}

// Criterion 6 ------------------------------------------------------------

Outcome loss_gradients() {
    std::mt19937_64 gen(606);
    const LossConfig cfg;  // gamma 2, alpha 0.25
    using Analytic = std::function<LossValue(const Matrix&, const Matrix&)>;
    const std::vector<std::pair<std::string, Analytic>> losses = {
        {"mse", [](const Matrix& p, const Matrix& t) { return mse_loss(p, t); }},
        {"focal", [&](const Matrix& p, const Matrix& t) { return focal_loss(p, t, cfg); }},
        {"dice", [&](const Matrix& p, const Matrix& t) { return dice_loss(p, t, cfg); }},
        {"total",
         [&](const Matrix& p, const Matrix& t) {
             const TotalLoss tl = total_loss(p, t, cfg);
             return LossValue{tl.value, tl.grad};
         }},
    };
    bool ok = true;
    std::string detail;
    for (const auto& [name, fn] : losses) {
        double worst = 0.0;
        for (int inst = 0; inst < 20; ++inst) {
            const std::size_t r = oracle::random_int(gen, 1, 4), c = oracle::random_int(gen, 2, 12);
            const Matrix pred = oracle::random_uniform(gen, r, c, 0.05, 0.95);
            const Matrix target = oracle::random_binary(gen, r, c);
            const Matrix analytic = fn(pred, target).grad;
            const Matrix numeric =
                oracle::central_difference([&](const Matrix& p) { return fn(p, target).value; }, pred, 1e-5);
            worst = std::max(worst, oracle::rel_err(analytic, numeric));
        }
        ok = ok && worst <= 1e-4;
        detail += (detail.empty() ? "" : ", ") + name + fmt(" %.1e", worst);
    }
    return {ok, "max rel err over 20 instances each: " + detail};
}

// Criterion 7 ------------------------------------------------------------

ResultMatrix make_r(std::vector<std::vector<double>> v) {
    ResultMatrix r;
    r.metric_name = "miou";
    for (std::size_t i = 0; i < v.size(); ++i) r.task_ids.push_back("t" + std::to_string(i));
    r.values = std::move(v);
    return r;
}

Outcome metric_formulas() {
    struct Case {
        ResultMatrix r;
        TransferMetrics literal;
    };
    // Hand-computed values; the formulas are evaluated left to right in the
    // same order below so the comparison can be exact.
    const std::vector<Case> cases = {
        {make_r({{0.8, 0.1}, {0.7, 0.9}}), {0.8, -0.1, 0.1}},
        {make_r({{0.5, 0.25, 0.0}, {0.5, 0.75, 0.5}, {0.5, 0.75, 1.0}}), {0.75, 0.0, 0.375}},
        {make_r({{0.6, 0.2, 0.1, 0.0}, {0.4, 0.8, 0.3, 0.1}, {0.3, 0.6, 0.9, 0.1}, {0.2, 0.5, 0.7, 1.0}}),
         {0.6, -0.3, 0.2}},
    };
    bool exact = true;
    double worst_literal = 0.0;
    for (const auto& c : cases) {
        const auto& v = c.r.values;
        const std::size_t t = v.size();
        double acc = 0.0, bwt = 0.0, fwt = 0.0;
        for (std::size_t i = 0; i < t; ++i) acc += v[t - 1][i];
        for (std::size_t i = 0; i + 1 < t; ++i) bwt += v[t - 1][i] - v[i][i];
        for (std::size_t i = 0; i + 1 < t; ++i) fwt += v[i][i + 1];
        const TransferMetrics got = continual_metrics(c.r);
        const TransferMetrics same_order{acc / static_cast<double>(t), bwt / static_cast<double>(t - 1),
                                         fwt / static_cast<double>(t - 1)};
        exact = exact && got == same_order;
        worst_literal = std::max({worst_literal, std::abs(got.acc - c.literal.acc), std::abs(got.bwt - c.literal.bwt),
                                  std::abs(got.fwt - c.literal.fwt)});
    }
    const Matrix p = Matrix::from_rows({{1, 1, 0, 0}});
    const Matrix g = Matrix::from_rows({{0, 1, 1, 0}});
    const SegScores s = seg_metrics(p, g, p);
    const bool seg_exact = s.iou == 1.0 / 3.0 && s.f1 == 0.5;
    return {exact && worst_literal <= 1e-15 && seg_exact,
            fmt("3 R matrices exact=%s (max dev from literals %.1e); IoU %.17g F1 %.17g", exact ? "yes" : "no",
                worst_literal, s.iou, s.f1)};
}

// Criteria 8 and 9 ---------------------------------------------------------

struct TrendData {
    std::map<Strategy, std::vector<double>> acc, bwt;
    std::vector<double> upper;  // independent diagonal mean
    std::vector<double> replay_acc;
    double strategy_seconds = 0.0;
    double replay_seconds = 0.0;
};

TrendData run_trends() {
    TrendData d;
    const Strategy all[] = {Strategy::frozen, Strategy::lora_seq, Strategy::mean_merge, Strategy::regcl,
                            Strategy::independent};
    for (std::uint64_t seed : kSeeds) {
        const io::RunConfig base = default_run(seed, Strategy::regcl);
        const std::vector<TaskPair> tasks = make_tasks(base);
        auto t0 = Clock::now();
        for (Strategy s : all) {
            SequenceConfig cfg = base.run;
            cfg.strategy = s;
            const SequenceResult r = run_sequence(tasks, cfg);
            const ResultMatrix& miou = r.results.at("miou");
            d.acc[s].push_back(average_accuracy(miou));
            d.bwt[s].push_back(continual_metrics(miou).bwt);
            if (s == Strategy::independent) d.upper.push_back(diagonal_mean(miou));
        }
        d.strategy_seconds += seconds_since(t0);
        t0 = Clock::now();
        SequenceConfig replay = base.run;
        replay.replay_k = 30;
        d.replay_acc.push_back(average_accuracy(run_sequence(tasks, replay).results.at("miou")));
        d.replay_seconds += seconds_since(t0);
    }
    return d;
}

Outcome forgetting_trend(const TrendData& d) {
    const double bwt_cl = median(d.bwt.at(Strategy::regcl)), bwt_seq = median(d.bwt.at(Strategy::lora_seq));
    const double frozen = median(d.acc.at(Strategy::frozen));
    const double seq = median(d.acc.at(Strategy::lora_seq));
    const double mean = median(d.acc.at(Strategy::mean_merge));
    const double cl = median(d.acc.at(Strategy::regcl));
    const double upper = median(d.upper);
    bool ok = bwt_cl > bwt_seq;
    for (double v : {seq, mean, cl}) ok = ok && frozen < v && v <= upper;
    ok = ok && d.strategy_seconds < 600.0;
    return {ok, fmt("median BWT regcl %.4f vs lora_seq %.4f; median ACC frozen %.4f, lora_seq %.4f, mean_merge %.4f, "
                    "regcl %.4f, independent diagonal %.4f; %.1f s",
                    bwt_cl, bwt_seq, frozen, seq, mean, cl, upper, d.strategy_seconds)};
}

Outcome replay_trend(const TrendData& d) {
    const double replay = median(d.replay_acc), plain = median(d.acc.at(Strategy::regcl));
    return {replay >= plain - 0.01,
            fmt("median ACC regcl+replay(k=30) %.4f vs regcl %.4f over 5 paired seeds, %.1f s", replay, plain,
                d.replay_seconds)};
}

// Criterion 10 -------------------------------------------------------------

Outcome privacy_structure(const std::vector<OrderRun>& runs) {
    std::size_t states = 0, violations = 0, leaked = 0;
    bool counts_ok = true;
    for (const auto& run : runs) {
        std::vector<Matrix> forbidden;
        for (std::size_t i = 0; i < run.tasks.size(); ++i) {
            forbidden.push_back(run.tasks[i].train.inputs());
            forbidden.push_back(run.tasks[i].test.inputs());
            for (const auto& [name, rows] : forward_capture(run.result.task_models[i], run.tasks[i].train.inputs()).captures)
                forbidden.push_back(rows);
        }
        for (const MergeState& s : run.result.step_states) {
            const privacy::Audit a = privacy::audit_state(io::merge_state_to_string(s), forbidden);
            ++states;
            violations += a.violations.size();
            leaked += a.leaked_values;
            std::size_t expected = 0;
            for (const auto& layer : s.merged->layers)
                if (!layer.frozen && layer.kind == LayerKind::linear) expected += layer.weight.rows() * layer.weight.rows();
            counts_ok = counts_ok && a.accumulator_floats == expected && s.accumulator_floats() == expected;
        }
    }
    const std::size_t per_state = runs.front().result.state->accumulator_floats();
    return {violations == 0 && counts_ok && states > 0,
            fmt("%zu serialized states audited, %zu structural violations, %zu leaked values, accumulator floats "
                "%zu = sum of squared input dims: %s",
                states, violations, leaked, per_state, counts_ok ? "yes" : "no")};
}

// Criterion 11 -------------------------------------------------------------

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = io::read_text(e.path());
    return files;
}

int run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) std::cerr << "  cli " << args.front() << " failed: " << err.str();
    return code;
}

// Re-reads a file with the matching reader and writes it back.
std::string rewrite(const std::string& rel, const std::string& text) {
    const auto ends = [&](const char* s) { return rel.ends_with(s); };
    if (ends(".grams.json")) return io::gram_file_to_string(io::gram_file_from_string(text));
    if (ends(".history.json") || rel.starts_with("histories/") || rel.find("/histories/") != std::string::npos)
        return io::loss_history_to_string(io::loss_history_from_string(text));
    if (ends(".state.json") || rel.find("states/") != std::string::npos)
        return io::merge_state_to_string(io::merge_state_from_string(text));
    if (ends(".train.json") || ends(".test.json")) return io::dataset_to_string(io::dataset_from_string(text));
    if (ends("results.json")) return io::results_to_string(io::results_from_string(text));
    if (ends("config.json")) return io::run_config_to_string(io::run_config_from_string(text));
    if (ends(".svg") || ends("metrics.json")) return text;
    return io::checkpoint_to_string(io::checkpoint_from_string(text));
}

Outcome cli_determinism() {
    const fs::path root = oracle::scratch_dir("acceptance_cli");
    io::RunConfig cfg;
    for (int i = 0; i < 3; ++i) {
        DomainSpec d;
        d.name = "dom" + std::to_string(i);
        d.seed = 40 + static_cast<std::uint64_t>(i);
        d.segmentation.grid = 8;
        d.segmentation.shape = i == 1 ? ShapeType::ring : ShapeType::disk;
        cfg.sequence.push_back(d);
    }
    cfg.run.model.input_dim = 64;
    cfg.run.model.hidden_dim = 12;
    cfg.run.model.output_dim = 64;
    cfg.run.model.lora_rank = 3;
    cfg.run.train.epochs = 3;
    cfg.run.seed = 9;
    cfg.n_train = 32;
    cfg.n_test = 8;
    const fs::path config = root / "config.json";
    io::write_text(config, io::run_config_to_string(cfg));
    const std::string c = config.string();

    const fs::path w = root / "work";
    const auto s = [&](const fs::path& p) { return (w / p).string(); };
    // Each command in pipeline order; later steps read earlier outputs.
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"gen", {"gen", "--config", c, "--out", s("data")}},
        {"gen --family", {"gen", "--family", "linear_teacher", "--name", "lt", "--input-dim", "5", "--output-dim", "2",
                          "--out", s("lt")}},
        {"init", {"init", "--config", c, "--out", s("w0.json")}},
        {"train dom0", {"train", "--config", c, "--data", s("data/dom0.train.json"), "--init", s("w0.json"), "--out",
                        s("t/dom0.json")}},
        {"train dom1", {"train", "--config", c, "--data", s("data/dom1.train.json"), "--init", s("w0.json"), "--out",
                        s("t/dom1.json")}},
        {"merge regcl 1", {"merge", "--mode", "regcl", "--inputs", s("t/dom0.json"), "--grams", s("t/dom0.grams.json"),
                           "--out", s("m/cl0.json")}},
        {"merge regcl 2", {"merge", "--mode", "regcl", "--inputs", s("t/dom1.json"), "--grams", s("t/dom1.grams.json"),
                           "--state", s("m/cl0.state.json"), "--out", s("m/cl1.json")}},
        {"merge regmean", {"merge", "--mode", "regmean", "--inputs", s("t/dom0.json"), s("t/dom1.json"), "--grams",
                           s("t/dom0.grams.json"), s("t/dom1.grams.json"), "--out", s("m/rm.json")}},
        {"merge mean", {"merge", "--mode", "mean", "--inputs", s("t/dom0.json"), s("t/dom1.json"), "--out",
                        s("m/mean.json")}},
        {"eval", {"eval", "--model", s("m/cl1.json"), "--data", s("data/dom0.test.json"), "--out",
                  s("eval/metrics.json")}},
        {"sequence", {"sequence", "--config", c, "--out", s("seq"), "--plot"}},
        {"sequence replay", {"sequence", "--config", c, "--replay-k", "4", "--out", s("seq_replay")}},
    };

    std::vector<std::map<std::string, std::string>> trees;
    for (int rep = 0; rep < 2; ++rep) {
        fs::remove_all(w);
        for (const auto& [name, args] : commands) {
            if (run_cli(args) != 0) return {false, "command '" + name + "' failed"};
        }
        trees.push_back(read_tree(w));
    }
    std::size_t differing = 0;
    for (const auto& [rel, text] : trees[0]) differing += !trees[1].contains(rel) || trees[1].at(rel) != text;
    differing += trees[0].size() != trees[1].size();

    std::size_t round_trip_fail = 0;
    std::string first_fail;
    for (const auto& [rel, text] : trees[0]) {
        std::string again;
        try {
            again = rewrite(rel, text);
        } catch (const std::exception& e) {
            again = std::string("error: ") + e.what();
        }
        if (again != text) {
            ++round_trip_fail;
            if (first_fail.empty()) first_fail = " (first: " + rel + ")";
        }
    }

    // Bitwise value round trip from objects, not only from text.
    std::mt19937_64 gen(1111);
    Checkpoint ck = make_toy_model(cfg.run.model);
    for (auto& l : ck.layers) l.weight = oracle::random_matrix(gen, l.weight.rows(), l.weight.cols(), 1e-3);
    const bool object_rt = io::checkpoint_from_string(io::checkpoint_to_string(ck)) == ck;

    return {differing == 0 && round_trip_fail == 0 && object_rt,
            fmt("%zu commands run twice, %zu files, %zu differ; %zu files fail read/write round trip%s; random "
                "checkpoint round trip %s",
                commands.size(), trees[0].size(), differing, round_trip_fail, first_fail.c_str(),
                object_rt ? "bitwise" : "BROKEN")};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        std::string name;
        std::function<Outcome()> check;
    };
    std::vector<OrderRun> order_runs;
    TrendData trends;
    bool trends_ready = false;
    const auto need_trends = [&]() -> const TrendData& {
        if (!trends_ready) {
            trends = run_trends();
            trends_ready = true;
        }
        return trends;
    };
    const std::vector<Criterion> criteria = {
        {1, "closed-form optimality", closed_form_optimality},
        {2, "k-way consistency", kway_consistency},
        {3, "batch-incremental equivalence", batch_incremental_equivalence},
        {4, "order independence", [&] { return order_independence(order_runs); }},
        {5, "mean path", mean_path},
        {6, "loss gradients", loss_gradients},
        {7, "metric formulas", metric_formulas},
        {8, "forgetting trend", [&] { return forgetting_trend(need_trends()); }},
        {9, "replay trend", [&] { return replay_trend(need_trends()); }},
        {10, "privacy and memory structure",
         [&] {
             if (order_runs.empty()) return Outcome{false, "no regcl runs available"};
             return privacy_structure(order_runs);
         }},
        {11, "determinism and round trip", cli_determinism},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
