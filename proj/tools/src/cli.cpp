#include "cli.hpp"

#include "plot.hpp"

#include "regcl/errors.hpp"
#include "regcl/io.hpp"
#include "regcl/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>

namespace regcl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kFamilies = {"linear_teacher", "toy_segmentation"};
const std::vector<std::string> kSuites = {"default5"};
const std::vector<std::string> kStrategies = {"regcl", "lora_seq", "mean_merge", "independent", "frozen"};
const std::vector<std::string> kLoraStrategies = {"composite", "factor_mean"};
const std::vector<std::string> kModes = {"regmean", "regcl", "mean"};
const std::vector<std::string> kSchedules = {"cosine_annealing", "constant"};
const std::vector<std::string> kOutputs = {"sigmoid", "identity"};

// "dir/task.json" -> "dir/task<suffix>"
fs::path sibling(const fs::path& out, const std::string& suffix) {
    return out.parent_path() / (out.stem().string() + suffix);
}

std::string indexed(const char* prefix, std::size_t i, const std::string& id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%02zu_", prefix, i + 1);
    return buf + id + ".json";
}

void check_file_name(const std::string& name) {
    if (name.empty()) throw ValidationError("domain name must not be empty");
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) throw ValidationError("domain name '" + name + "' may only use letters, digits, '_', '-' and '.'");
    }
}

struct ConfigSource {
    io::RunConfig config;
    bool explicit_sequence = false;
};

ConfigSource load_config(const std::optional<std::string>& path) {
    ConfigSource src;
    if (!path) return src;
    const std::string text = io::read_text(*path);
    src.config = io::run_config_from_string(text);
    src.explicit_sequence = json::parse(text).contains("sequence");
    return src;
}

void check_dims(const Checkpoint& model, const TaskDataset& data) {
    if (model.layers.empty()) throw ValidationError("checkpoint has no layers");
    const std::size_t in = model.layers.front().weight.rows();
    const std::size_t out = model.layers.back().weight.cols();
    if (data.domain().input_dim() != in || data.domain().output_dim() != out) {
        throw TopologyError("dataset '" + data.task_id() + "' is " + std::to_string(data.domain().input_dim()) + "->" +
                            std::to_string(data.domain().output_dim()) + ", model is " + std::to_string(in) + "->" +
                            std::to_string(out));
    }
}

// Merge flags shared by `merge` and `sequence`.
struct MergeFlags {
    std::optional<std::string> lora_strategy;
    std::optional<double> ridge_scale;
    std::optional<double> offdiag_scale;

    void add(CLI::App* app) {
        app->add_option("--lora-strategy", lora_strategy, "How adapters are merged")
            ->check(CLI::IsMember(kLoraStrategies));
        app->add_option("--ridge-scale", ridge_scale, "Fallback ridge, relative to the mean Gram diagonal")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--offdiag-scale", offdiag_scale, "Scale applied to off-diagonal Gram entries")
            ->check(CLI::Range(0.0, 1.0));
    }

    bool any() const { return lora_strategy || ridge_scale || offdiag_scale; }

    void apply(MergeConfig& c) const {
        if (lora_strategy) c.lora_strategy = parse_lora_strategy(*lora_strategy);
        if (ridge_scale) c.ridge_scale = *ridge_scale;
        if (offdiag_scale) c.offdiag_scale = *offdiag_scale;
    }
};

// gen

struct GenArgs {
    std::optional<std::string> config;
    std::optional<std::string> suite;
    std::optional<std::string> family;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_train;
    std::optional<std::size_t> n_test;
    std::string name;
    std::size_t input_dim = 8;
    std::size_t output_dim = 2;
    std::string out;
};

void cmd_gen(const GenArgs& a, std::ostream& out) {
    ConfigSource src = load_config(a.config);
    io::RunConfig& cfg = src.config;
    if (a.seed) cfg.run.seed = *a.seed;
    if (a.n_train) cfg.n_train = *a.n_train;
    if (a.n_test) cfg.n_test = *a.n_test;

    std::vector<DomainSpec> domains;
    if (a.family) {
        DomainSpec d;
        d.family = parse_domain_family(*a.family);
        d.name = a.name.empty() ? *a.family : a.name;
        d.seed = mix_seed(cfg.run.seed, hash_tag(d.name));
        d.linear.input_dim = a.input_dim;
        d.linear.output_dim = a.output_dim;
        d.linear.teacher_seed = cfg.run.seed;
        domains.push_back(d);
    } else if (a.config && src.explicit_sequence && !a.suite) {
        domains = cfg.sequence;
    } else {
        domains = default5_suite(cfg.run.seed);
    }
    if (cfg.n_train == 0 || cfg.n_test == 0) throw ValidationError("--n-train and --n-test must be positive");

    std::size_t files = 0;
    for (const auto& d : domains) {
        check_file_name(d.name);
        const TaskPair pair = gen_domain(d, cfg.n_train, cfg.n_test);
        io::write_text(fs::path(a.out) / (d.name + ".train.json"), io::dataset_to_string(pair.train));
        io::write_text(fs::path(a.out) / (d.name + ".test.json"), io::dataset_to_string(pair.test));
        files += 2;
    }
    out << "wrote " << files << " dataset files to " << a.out << "\n";
}

// init

struct InitArgs {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> input_dim, hidden_dim, output_dim, rank, layers;
    std::optional<double> scaling;
    bool no_encoder = false;
    std::string out;
};

void cmd_init(const InitArgs& a, std::ostream& out) {
    SequenceConfig sc = load_config(a.config).config.run;
    if (a.seed) sc.seed = *a.seed;
    if (a.input_dim) sc.model.input_dim = *a.input_dim;
    if (a.hidden_dim) sc.model.hidden_dim = *a.hidden_dim;
    if (a.output_dim) sc.model.output_dim = *a.output_dim;
    if (a.rank) sc.model.lora_rank = *a.rank;
    if (a.layers) sc.model.adapted_layers = *a.layers;
    if (a.scaling) sc.model.lora_scaling = *a.scaling;
    if (a.no_encoder) sc.model.with_encoder = false;
    const Checkpoint w0 = initial_model(sc);
    io::write_text(a.out, io::checkpoint_to_string(w0));
    out << "wrote initial checkpoint (" << w0.layers.size() << " layers, " << w0.adapters.size() << " adapters) to "
        << a.out << "\n";
}

// train

struct TrainArgs {
    std::optional<std::string> config;
    std::string data, init, out;
    std::optional<std::string> grams, history;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, batch_size;
    std::optional<double> lr;
    std::optional<std::string> schedule, output;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
    SequenceConfig sc = load_config(a.config).config.run;
    if (a.seed) sc.seed = *a.seed;
    if (a.epochs) sc.train.epochs = *a.epochs;
    if (a.batch_size) sc.train.batch_size = *a.batch_size;
    if (a.lr) sc.train.lr = *a.lr;
    if (a.schedule) sc.train.schedule = parse_lr_schedule(*a.schedule);
    if (a.output) sc.loss.output = parse_output_activation(*a.output);

    const TaskDataset data = io::dataset_from_string(io::read_text(a.data));
    const Checkpoint init = io::checkpoint_from_string(io::read_text(a.init));
    init.validate();
    check_dims(init, data);

    TrainConfig tc = sc.train;
    // Same per-task seed as a sequence run, so both paths train identically.
    tc.seed = task_seed(sc.seed, data.domain());
    TrainResult r = train_task(init, data, tc, sc.loss);
    r.model.meta.task_id = data.task_id();

    const fs::path ck_path = a.out;
    const fs::path gram_path = a.grams ? fs::path(*a.grams) : sibling(ck_path, ".grams.json");
    const fs::path hist_path = a.history ? fs::path(*a.history) : sibling(ck_path, ".history.json");
    io::write_text(ck_path, io::checkpoint_to_string(r.model));
    io::write_text(gram_path, io::gram_file_to_string(r.grams));
    io::write_text(hist_path, io::loss_history_to_string(r.history));

    out << "trained '" << data.task_id() << "' for " << tc.epochs << " epochs (" << r.history.size() << " steps)";
    if (!r.history.empty()) {
        out << std::setprecision(6) << ": loss " << r.history.front().total << " -> " << r.history.back().total;
    }
    out << "\nwrote " << ck_path.string() << ", " << gram_path.string() << ", " << hist_path.string() << "\n";
}

// merge

struct MergeArgs {
    std::optional<std::string> config;
    std::string mode;
    std::vector<std::string> inputs;
    std::vector<std::string> grams;
    std::optional<std::string> state;
    std::optional<std::string> state_out;
    std::string out;
    MergeFlags flags;
};

void cmd_merge(const MergeArgs& a, std::ostream& out) {
    MergeConfig mc = load_config(a.config).config.run.merge;
    a.flags.apply(mc);
    mc.validate();

    std::vector<Checkpoint> models;
    for (const auto& p : a.inputs) models.push_back(io::checkpoint_from_string(io::read_text(p)));
    std::vector<GramMap> grams;
    for (const auto& p : a.grams) grams.push_back(io::gram_file_from_string(io::read_text(p)));

    if (a.mode == "mean") {
        if (!grams.empty()) throw ValidationError("--grams is not used by --mode mean");
        if (a.state || a.state_out) throw ValidationError("--state is only used by --mode regcl");
        const Checkpoint merged = mean_merge(models);
        io::write_text(a.out, io::checkpoint_to_string(merged));
        out << "mean of " << models.size() << " checkpoints written to " << a.out << "\n";
        return;
    }

    if (grams.size() != models.size())
        throw ValidationError("--grams needs one file per --inputs checkpoint (" + std::to_string(models.size()) +
                              " inputs, " + std::to_string(grams.size()) + " gram files)");

    if (a.mode == "regmean") {
        if (a.state || a.state_out) throw ValidationError("--state is only used by --mode regcl");
        if (mc.lora_strategy != LoraStrategy::composite)
            throw ValidationError("--lora-strategy factor_mean is only supported with --mode regcl");
        const Checkpoint merged = regmean_merge(models, grams, mc);
        io::write_text(a.out, io::checkpoint_to_string(merged));
        out << "regmean merge of " << models.size() << " checkpoints written to " << a.out << "\n";
        return;
    }

    // regcl
    if (models.size() != 1) throw ValidationError("--mode regcl takes exactly one --inputs checkpoint");
    MergeState state;
    state.config = mc;
    if (a.state) {
        state = io::merge_state_from_string(io::read_text(*a.state));
        MergeConfig requested = state.config;
        a.flags.apply(requested);
        if (!(requested == state.config))
            throw ValidationError("merge flags conflict with the configuration stored in --state");
    }
    state = merge_adapters(std::move(state), models.front(), grams.front());
    const fs::path state_out = a.state_out ? fs::path(*a.state_out) : sibling(a.out, ".state.json");
    io::write_text(a.out, io::checkpoint_to_string(*state.merged));
    io::write_text(state_out, io::merge_state_to_string(state));
    out << "regcl step " << state.task_count << " written to " << a.out << " (state " << state_out.string() << ")\n";
}

// eval

struct EvalArgs {
    std::string model, data, out;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Checkpoint model = io::checkpoint_from_string(io::read_text(a.model));
    model.validate();
    const TaskDataset data = io::dataset_from_string(io::read_text(a.data));
    check_dims(model, data);
    const SegScores s = evaluate(model, data);
    json j{{"format_version", io::kFormatVersion},
           {"task_id", data.task_id()},
           {"samples", data.size()},
           {"miou", s.iou},
           {"mf1", s.f1},
           {"mmae", s.mae}};
    io::write_text(a.out, j.dump(1, ' ') + "\n");
    out << std::fixed << std::setprecision(4) << data.task_id() << ": miou " << s.iou << "  mf1 " << s.f1 << "  mmae "
        << s.mae << "\n";
}

// sequence

struct SequenceArgs {
    std::optional<std::string> config;
    std::optional<std::string> suite;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy;
    std::optional<std::size_t> replay_k;
    std::optional<std::size_t> n_train, n_test, epochs;
    std::optional<std::string> out;
    bool plot = false;
    MergeFlags flags;
};

void cmd_sequence(const SequenceArgs& a, std::ostream& out) {
    ConfigSource src = load_config(a.config);
    io::RunConfig& cfg = src.config;
    if (a.seed) cfg.run.seed = *a.seed;
    if (a.suite || !src.explicit_sequence) cfg.sequence = default5_suite(cfg.run.seed);
    if (a.strategy) cfg.run.strategy = parse_strategy(*a.strategy);
    if (a.replay_k) cfg.run.replay_k = *a.replay_k;
    if (a.n_train) cfg.n_train = *a.n_train;
    if (a.n_test) cfg.n_test = *a.n_test;
    if (a.epochs) cfg.run.train.epochs = *a.epochs;
    if (a.out) cfg.output_dir = *a.out;
    a.flags.apply(cfg.run.merge);
    cfg.validate();
    for (const auto& d : cfg.sequence) check_file_name(d.name);

    std::vector<TaskPair> tasks;
    for (const auto& d : cfg.sequence) tasks.push_back(gen_domain(d, cfg.n_train, cfg.n_test));
    const SequenceResult res = run_sequence(tasks, cfg.run);

    const fs::path dir = cfg.output_dir;
    const std::string config_text = io::run_config_to_string(cfg);
    io::ResultsFile rf;
    rf.strategy = to_string(cfg.run.strategy);
    rf.seed = cfg.run.seed;
    for (const auto& d : cfg.sequence) rf.task_ids.push_back(d.name);
    rf.results = res.results;
    rf.metrics = res.metrics;
    rf.config_echo = config_text;
    io::write_text(dir / "config.json", config_text);
    io::write_text(dir / "results.json", io::results_to_string(rf));

    const auto& ids = rf.task_ids;
    for (std::size_t i = 0; i < res.step_models.size(); ++i)
        io::write_text(dir / "steps" / indexed("step", i, ids[i]), io::checkpoint_to_string(res.step_models[i]));
    for (std::size_t i = 0; i < res.task_models.size(); ++i)
        io::write_text(dir / "tasks" / indexed("task", i, ids[i]), io::checkpoint_to_string(res.task_models[i]));
    for (std::size_t i = 0; i < res.step_states.size(); ++i)
        io::write_text(dir / "states" / indexed("state", i, ids[i]), io::merge_state_to_string(res.step_states[i]));
    for (std::size_t i = 0; i < res.histories.size(); ++i)
        io::write_text(dir / "histories" / indexed("history", i, ids[i]), io::loss_history_to_string(res.histories[i]));

    if (a.plot) {
        for (const auto& [name, r] : res.results)
            io::write_text(dir / "plots" / ("R_" + name + ".svg"), result_heatmap_svg(r, name == "mmae"));
        for (std::size_t i = 0; i < res.histories.size(); ++i) {
            char file[64];
            std::snprintf(file, sizeof file, "loss_%02zu_", i + 1);
            io::write_text(dir / "plots" / (file + ids[i] + ".svg"),
                           loss_curve_svg(res.histories[i], "training loss: " + ids[i]));
        }
    }

    out << "strategy " << rf.strategy << ", seed " << rf.seed << ", " << ids.size() << " tasks\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& [name, m] : res.metrics)
        out << "  " << std::left << std::setw(5) << name << "  ACC " << m.acc << "  BWT " << m.bwt << "  FWT " << m.fwt
            << "\n";
    out << "results written to " << (dir / "results.json").string() << "\n";
}

template <typename Fn>
int guarded(Fn&& fn, std::ostream& err) {
    try {
        fn();
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const TopologyError& e) {
        err << "consistency failure: " << e.what() << "\n";
        return kExitTopology;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Continual model merging with Gram-matrix accumulators", "regcl"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate train/test datasets for a domain suite");
    g->add_option("--config", gen.config, "RunConfig JSON; its sequence is generated")->check(CLI::ExistingFile);
    auto* g_suite = g->add_option("--suite", gen.suite, "Named domain suite")->check(CLI::IsMember(kSuites));
    auto* g_family =
        g->add_option("--family", gen.family, "Generate a single domain of this family")->check(CLI::IsMember(kFamilies));
    g_suite->excludes(g_family);
    g->add_option("--name", gen.name, "Domain name for --family (defaults to the family)");
    g->add_option("--input-dim", gen.input_dim, "Input dimension for --family linear_teacher");
    g->add_option("--output-dim", gen.output_dim, "Output dimension for --family linear_teacher");
    g->add_option("--seed", gen.seed, "Run seed");
    g->add_option("--n-train", gen.n_train, "Training samples per domain");
    g->add_option("--n-test", gen.n_test, "Test samples per domain");
    g->add_option("--out", gen.out, "Output directory")->required();

    InitArgs init;
    auto* in = app.add_subcommand("init", "Write the shared initial checkpoint W0");
    in->add_option("--config", init.config, "RunConfig JSON")->check(CLI::ExistingFile);
    in->add_option("--seed", init.seed, "Run seed");
    in->add_option("--input-dim", init.input_dim);
    in->add_option("--hidden-dim", init.hidden_dim);
    in->add_option("--output-dim", init.output_dim);
    in->add_option("--rank", init.rank, "LoRA rank");
    in->add_option("--scaling", init.scaling, "LoRA scaling");
    in->add_option("--layers", init.layers, "Number of adapted linear layers");
    in->add_flag("--no-encoder", init.no_encoder, "Omit the frozen encoder");
    in->add_option("--out", init.out, "Checkpoint path")->required();

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train one task from a checkpoint and write its Grams");
    t->add_option("--config", train.config, "RunConfig JSON")->check(CLI::ExistingFile);
    t->add_option("--data", train.data, "Training dataset")->required()->check(CLI::ExistingFile);
    t->add_option("--init", train.init, "Starting checkpoint")->required()->check(CLI::ExistingFile);
    t->add_option("--out", train.out, "Trained checkpoint path")->required();
    t->add_option("--grams", train.grams, "Gram file path (default: <out>.grams.json)");
    t->add_option("--history", train.history, "Loss history path (default: <out>.history.json)");
    t->add_option("--seed", train.seed, "Run seed");
    t->add_option("--epochs", train.epochs);
    t->add_option("--batch-size", train.batch_size);
    t->add_option("--lr", train.lr);
    t->add_option("--schedule", train.schedule)->check(CLI::IsMember(kSchedules));
    t->add_option("--output", train.output, "Output activation")->check(CLI::IsMember(kOutputs));

    MergeArgs merge;
    auto* m = app.add_subcommand("merge", "Merge checkpoints (regmean, regcl or mean)");
    m->add_option("--config", merge.config, "RunConfig JSON (merge section)")->check(CLI::ExistingFile);
    m->add_option("--mode", merge.mode)->required()->check(CLI::IsMember(kModes));
    m->add_option("--inputs", merge.inputs, "Task checkpoints")->required()->check(CLI::ExistingFile);
    m->add_option("--grams", merge.grams, "Gram files, one per input")->check(CLI::ExistingFile);
    m->add_option("--state", merge.state, "Previous merge state (regcl; omit for the first task)")
        ->check(CLI::ExistingFile);
    m->add_option("--state-out", merge.state_out, "Updated state path (default: <out>.state.json)");
    m->add_option("--out", merge.out, "Merged checkpoint path")->required();
    merge.flags.add(m);

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Score a checkpoint on a test split");
    e->add_option("--model", eval.model)->required()->check(CLI::ExistingFile);
    e->add_option("--data", eval.data)->required()->check(CLI::ExistingFile);
    e->add_option("--out", eval.out, "Metrics JSON path")->required();

    SequenceArgs seq;
    auto* s = app.add_subcommand("sequence", "Run a full continual-learning sequence");
    s->add_option("--config", seq.config, "RunConfig JSON; flags override its fields")->check(CLI::ExistingFile);
    s->add_option("--suite", seq.suite, "Named domain suite")->check(CLI::IsMember(kSuites));
    s->add_option("--seed", seq.seed, "Run seed");
    s->add_option("--strategy", seq.strategy)->check(CLI::IsMember(kStrategies));
    s->add_option("--replay-k", seq.replay_k, "Replay samples per past task (regcl only)");
    s->add_option("--n-train", seq.n_train);
    s->add_option("--n-test", seq.n_test);
    s->add_option("--epochs", seq.epochs);
    s->add_option("--out", seq.out, "Output directory");
    s->add_flag("--plot", seq.plot, "Also write SVG heatmaps of R and loss curves");
    seq.flags.add(s);

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.push_back("regcl");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex, out, err);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex, out, err);
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitValidation;
    }

    if (g->parsed()) return guarded([&] { cmd_gen(gen, out); }, err);
    if (in->parsed()) return guarded([&] { cmd_init(init, out); }, err);
    if (t->parsed()) return guarded([&] { cmd_train(train, out); }, err);
    if (m->parsed()) return guarded([&] { cmd_merge(merge, out); }, err);
    if (e->parsed()) return guarded([&] { cmd_eval(eval, out); }, err);
    return guarded([&] { cmd_sequence(seq, out); }, err);
}

}  // namespace regcl::cli
