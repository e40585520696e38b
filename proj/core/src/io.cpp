#include "regcl/io.hpp"

#include "regcl/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace regcl::io {

using nlohmann::json;

namespace {

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
}

std::string dump(const json& j) { return j.dump(1, ' ') + "\n"; }

template <typename T>
T get(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("field '") + key + "': " + e.what());
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return get<T>(j, key);
}

void check_version(const json& j) {
    const int v = get<int>(j, "format_version");
    if (v != kFormatVersion) throw ValidationError("unsupported format_version " + std::to_string(v));
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.contains(k)) throw ValidationError(std::string("unknown key '") + k + "' in " + where);
}

json matrix_to_json(const Matrix& m) {
    return json{{"shape", {m.rows(), m.cols()}}, {"data", m.values()}};
}

Matrix matrix_from_json(const json& j) {
    const auto shape = get<std::vector<std::size_t>>(j, "shape");
    if (shape.size() != 2) throw ValidationError("matrix shape must have two entries");
    return Matrix(shape[0], shape[1], get<std::vector<double>>(j, "data"));
}

json grams_to_json(const GramMap& grams) {
    json layers = json::object();
    for (const auto& [name, g] : grams)
        layers[name] = json{{"dim", g.dim()}, {"sample_count", g.sample_count}, {"values", g.values.values()}};
    return json{{"format_version", kFormatVersion}, {"layers", layers}};
}

GramMap grams_from_json(const json& j) {
    check_version(j);
    GramMap out;
    const json layers = get<json>(j, "layers");
    for (const auto& [name, layer] : layers.items()) {
        const auto dim = get<std::size_t>(layer, "dim");
        GramMatrix g{Matrix(dim, dim, get<std::vector<double>>(layer, "values")), get<std::size_t>(layer, "sample_count")};
        out.emplace(name, std::move(g));
    }
    return out;
}

json meta_to_json(const CheckpointMeta& m) {
    return json{{"seed", m.seed}, {"task_id", m.task_id}, {"merge_history", m.merge_history}, {"tags", m.tags}};
}

CheckpointMeta meta_from_json(const json& j) {
    CheckpointMeta m;
    m.seed = get_or<std::uint64_t>(j, "seed", 0);
    m.task_id = get_or<std::string>(j, "task_id", "");
    m.merge_history = get_or<std::vector<std::string>>(j, "merge_history", {});
    m.tags = get_or<std::map<std::string, std::string>>(j, "tags", {});
    return m;
}

json checkpoint_to_json(const Checkpoint& ck) {
    json layers = json::array();
    for (const auto& l : ck.layers) {
        json aux = json::array();
        for (const auto& a : l.aux) aux.push_back(matrix_to_json(a));
        layers.push_back(json{{"name", l.name},
                              {"kind", to_string(l.kind)},
                              {"frozen", l.frozen},
                              {"activation", to_string(l.activation)},
                              {"shape", {l.weight.rows(), l.weight.cols()}},
                              {"data", l.weight.values()},
                              {"aux", aux}});
    }
    json adapters = json::array();
    for (const auto& a : ck.adapters) {
        adapters.push_back(json{{"layer_name", a.layer_name},
                                {"rank", a.rank},
                                {"scaling", a.scaling},
                                {"a", matrix_to_json(a.a)},
                                {"b", matrix_to_json(a.b)}});
    }
    return json{{"format_version", kFormatVersion}, {"meta", meta_to_json(ck.meta)}, {"layers", layers},
                {"adapters", adapters}};
}

Checkpoint checkpoint_from_json(const json& j) {
    check_version(j);
    Checkpoint ck;
    ck.meta = meta_from_json(get_or<json>(j, "meta", json::object()));
    for (const auto& l : get<json>(j, "layers")) {
        LayerParams p;
        p.name = get<std::string>(l, "name");
        p.kind = parse_layer_kind(get<std::string>(l, "kind"));
        p.frozen = get_or<bool>(l, "frozen", false);
        p.activation = parse_activation(get_or<std::string>(l, "activation", "identity"));
        p.weight = matrix_from_json(l);
        for (const auto& a : get_or<json>(l, "aux", json::array())) p.aux.push_back(matrix_from_json(a));
        ck.layers.push_back(std::move(p));
    }
    for (const auto& a : get_or<json>(j, "adapters", json::array())) {
        ck.adapters.push_back(LoraAdapter{get<std::string>(a, "layer_name"), get<std::size_t>(a, "rank"),
                                          get<double>(a, "scaling"), matrix_from_json(get<json>(a, "a")),
                                          matrix_from_json(get<json>(a, "b"))});
    }
    ck.validate();
    return ck;
}

json merge_config_to_json(const MergeConfig& c) {
    return json{{"ridge_scale", c.ridge_scale},
                {"offdiag_scale", c.offdiag_scale},
                {"lora_strategy", to_string(c.lora_strategy)}};
}

MergeConfig merge_config_from_json(const json& j, MergeConfig c = {}) {
    reject_unknown(j, {"ridge_scale", "offdiag_scale", "lora_strategy"}, "merge config");
    c.ridge_scale = get_or<double>(j, "ridge_scale", c.ridge_scale);
    c.offdiag_scale = get_or<double>(j, "offdiag_scale", c.offdiag_scale);
    if (j.contains("lora_strategy")) c.lora_strategy = parse_lora_strategy(get<std::string>(j, "lora_strategy"));
    c.validate();
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr},
                {"schedule", to_string(c.schedule)}, {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    reject_unknown(j, {"epochs", "batch_size", "lr", "schedule", "seed"}, "train config");
    c.epochs = get_or<std::size_t>(j, "epochs", c.epochs);
    c.batch_size = get_or<std::size_t>(j, "batch_size", c.batch_size);
    c.lr = get_or<double>(j, "lr", c.lr);
    if (j.contains("schedule")) c.schedule = parse_lr_schedule(get<std::string>(j, "schedule"));
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.validate();
    return c;
}

json loss_config_to_json(const LossConfig& c) {
    return json{{"focal_gamma", c.focal_gamma}, {"focal_alpha", c.focal_alpha}, {"dice_smooth", c.dice_smooth},
                {"mse_weight", c.mse_weight},   {"focal_weight", c.focal_weight}, {"dice_weight", c.dice_weight},
                {"output", to_string(c.output)}};
}

LossConfig loss_config_from_json(const json& j, LossConfig c) {
    reject_unknown(j,
                   {"focal_gamma", "focal_alpha", "dice_smooth", "mse_weight", "focal_weight", "dice_weight", "output"},
                   "loss config");
    c.focal_gamma = get_or<double>(j, "focal_gamma", c.focal_gamma);
    c.focal_alpha = get_or<double>(j, "focal_alpha", c.focal_alpha);
    c.dice_smooth = get_or<double>(j, "dice_smooth", c.dice_smooth);
    c.mse_weight = get_or<double>(j, "mse_weight", c.mse_weight);
    c.focal_weight = get_or<double>(j, "focal_weight", c.focal_weight);
    c.dice_weight = get_or<double>(j, "dice_weight", c.dice_weight);
    if (j.contains("output")) c.output = parse_output_activation(get<std::string>(j, "output"));
    c.validate();
    return c;
}

json model_config_to_json(const ToyModelConfig& c) {
    return json{{"input_dim", c.input_dim},     {"hidden_dim", c.hidden_dim},     {"output_dim", c.output_dim},
                {"lora_rank", c.lora_rank},     {"lora_scaling", c.lora_scaling}, {"with_encoder", c.with_encoder},
                {"adapted_layers", c.adapted_layers}};
}

ToyModelConfig model_config_from_json(const json& j, ToyModelConfig c) {
    reject_unknown(j,
                   {"input_dim", "hidden_dim", "output_dim", "lora_rank", "lora_scaling", "with_encoder",
                    "adapted_layers"},
                   "model config");
    c.input_dim = get_or<std::size_t>(j, "input_dim", c.input_dim);
    c.hidden_dim = get_or<std::size_t>(j, "hidden_dim", c.hidden_dim);
    c.output_dim = get_or<std::size_t>(j, "output_dim", c.output_dim);
    c.lora_rank = get_or<std::size_t>(j, "lora_rank", c.lora_rank);
    c.lora_scaling = get_or<double>(j, "lora_scaling", c.lora_scaling);
    c.with_encoder = get_or<bool>(j, "with_encoder", c.with_encoder);
    c.adapted_layers = get_or<std::size_t>(j, "adapted_layers", c.adapted_layers);
    return c;
}

json domain_to_json(const DomainSpec& s) {
    json params;
    if (s.family == DomainFamily::toy_segmentation) {
        const auto& p = s.segmentation;
        params = json{{"grid", p.grid},           {"shape", to_string(p.shape)},  {"foreground", p.foreground},
                      {"background", p.background}, {"noise_sigma", p.noise_sigma}, {"contrast", p.contrast},
                      {"min_radius", p.min_radius}, {"max_radius", p.max_radius}};
    } else {
        const auto& p = s.linear;
        params = json{{"input_dim", p.input_dim},     {"output_dim", p.output_dim},   {"teacher_seed", p.teacher_seed},
                      {"input_scale", p.input_scale}, {"input_shift", p.input_shift}, {"noise_sigma", p.noise_sigma},
                      {"threshold", p.threshold}};
    }
    return json{{"name", s.name}, {"family", to_string(s.family)}, {"seed", s.seed}, {"params", params}};
}

DomainSpec domain_from_json(const json& j) {
    reject_unknown(j, {"name", "family", "seed", "params"}, "domain spec");
    DomainSpec s;
    s.name = get<std::string>(j, "name");
    s.family = parse_domain_family(get<std::string>(j, "family"));
    s.seed = get_or<std::uint64_t>(j, "seed", 0);
    const json params = get_or<json>(j, "params", json::object());
    if (s.family == DomainFamily::toy_segmentation) {
        auto& p = s.segmentation;
        reject_unknown(params,
                       {"grid", "shape", "foreground", "background", "noise_sigma", "contrast", "min_radius",
                        "max_radius"},
                       "segmentation params");
        p.grid = get_or<std::size_t>(params, "grid", p.grid);
        if (params.contains("shape")) p.shape = parse_shape_type(get<std::string>(params, "shape"));
        p.foreground = get_or<double>(params, "foreground", p.foreground);
        p.background = get_or<double>(params, "background", p.background);
        p.noise_sigma = get_or<double>(params, "noise_sigma", p.noise_sigma);
        p.contrast = get_or<double>(params, "contrast", p.contrast);
        p.min_radius = get_or<double>(params, "min_radius", p.min_radius);
        p.max_radius = get_or<double>(params, "max_radius", p.max_radius);
    } else {
        auto& p = s.linear;
        reject_unknown(params,
                       {"input_dim", "output_dim", "teacher_seed", "input_scale", "input_shift", "noise_sigma",
                        "threshold"},
                       "linear teacher params");
        p.input_dim = get_or<std::size_t>(params, "input_dim", p.input_dim);
        p.output_dim = get_or<std::size_t>(params, "output_dim", p.output_dim);
        p.teacher_seed = get_or<std::uint64_t>(params, "teacher_seed", p.teacher_seed);
        p.input_scale = get_or<double>(params, "input_scale", p.input_scale);
        p.input_shift = get_or<double>(params, "input_shift", p.input_shift);
        p.noise_sigma = get_or<double>(params, "noise_sigma", p.noise_sigma);
        p.threshold = get_or<bool>(params, "threshold", p.threshold);
    }
    s.validate();
    return s;
}

}  // namespace

std::string gram_file_to_string(const GramMap& grams) { return dump(grams_to_json(grams)); }
GramMap gram_file_from_string(const std::string& text) { return grams_from_json(parse(text)); }

std::string checkpoint_to_string(const Checkpoint& ck) { return dump(checkpoint_to_json(ck)); }
Checkpoint checkpoint_from_string(const std::string& text) { return checkpoint_from_json(parse(text)); }

std::string merge_state_to_string(const MergeState& state) {
    json j{{"format_version", kFormatVersion},
           {"task_count", state.task_count},
           {"merge_history", state.merged ? state.merged->meta.merge_history : std::vector<std::string>{}},
           {"accumulators", grams_to_json(state.accumulators)},
           {"merged", state.merged ? checkpoint_to_json(*state.merged) : json(nullptr)},
           {"config", merge_config_to_json(state.config)}};
    return dump(j);
}

MergeState merge_state_from_string(const std::string& text) {
    const json j = parse(text);
    check_version(j);
    MergeState s;
    s.task_count = get<std::size_t>(j, "task_count");
    s.accumulators = grams_from_json(get<json>(j, "accumulators"));
    const json merged = get<json>(j, "merged");
    if (!merged.is_null()) s.merged = checkpoint_from_json(merged);
    s.config = merge_config_from_json(get<json>(j, "config"));
    if ((s.task_count == 0) != !s.merged) throw ValidationError("merge state: task_count and merged disagree");
    if (s.task_count == 0 && !s.accumulators.empty()) throw ValidationError("merge state: fresh state has accumulators");
    return s;
}

std::string dataset_to_string(const TaskDataset& ds) {
    json j{{"format_version", kFormatVersion},
           {"task_id", ds.task_id()},
           {"split", to_string(ds.split())},
           {"domain", domain_to_json(ds.domain())},
           {"inputs", matrix_to_json(ds.inputs())},
           {"targets", matrix_to_json(ds.targets())}};
    return dump(j);
}

TaskDataset dataset_from_string(const std::string& text) {
    const json j = parse(text);
    check_version(j);
    return TaskDataset(get<std::string>(j, "task_id"), parse_split(get<std::string>(j, "split")),
                       domain_from_json(get<json>(j, "domain")), matrix_from_json(get<json>(j, "inputs")),
                       matrix_from_json(get<json>(j, "targets")));
}

std::string loss_history_to_string(const std::vector<LossRecord>& history) {
    json arr = json::array();
    for (const auto& r : history) {
        arr.push_back(json{{"epoch", r.epoch},     {"step", r.step},         {"loss_total", r.total},
                           {"loss_mse", r.mse}, {"loss_focal", r.focal}, {"loss_dice", r.dice}});
    }
    return dump(arr);
}

std::vector<LossRecord> loss_history_from_string(const std::string& text) {
    const json arr = parse(text);
    if (!arr.is_array()) throw ValidationError("loss history must be a JSON array");
    std::vector<LossRecord> out;
    for (const auto& r : arr) {
        out.push_back(LossRecord{get<std::size_t>(r, "epoch"), get<std::size_t>(r, "step"), get<double>(r, "loss_total"),
                                 get<double>(r, "loss_mse"), get<double>(r, "loss_focal"), get<double>(r, "loss_dice")});
    }
    return out;
}

std::string domain_spec_to_string(const DomainSpec& spec) { return dump(domain_to_json(spec)); }
DomainSpec domain_spec_from_string(const std::string& text) { return domain_from_json(parse(text)); }

std::string results_to_string(const ResultsFile& res) {
    json r = json::object();
    for (const auto& [name, m] : res.results) r[name] = m.values;
    json metrics = json::object();
    for (const auto& [name, m] : res.metrics) metrics[name] = json{{"acc", m.acc}, {"bwt", m.bwt}, {"fwt", m.fwt}};
    json j{{"format_version", kFormatVersion},
           {"strategy", res.strategy},
           {"seed", res.seed},
           {"task_ids", res.task_ids},
           {"R", r},
           {"metrics", metrics},
           {"config_echo", parse(res.config_echo)}};
    return dump(j);
}

ResultsFile results_from_string(const std::string& text) {
    const json j = parse(text);
    check_version(j);
    ResultsFile res;
    res.strategy = get<std::string>(j, "strategy");
    res.seed = get<std::uint64_t>(j, "seed");
    res.task_ids = get<std::vector<std::string>>(j, "task_ids");
    const json r = get<json>(j, "R");
    for (const auto& [name, values] : r.items()) {
        res.results[name] = ResultMatrix{name, res.task_ids, values.get<std::vector<std::vector<double>>>()};
    }
    const json metrics = get<json>(j, "metrics");
    for (const auto& [name, m] : metrics.items())
        res.metrics[name] = TransferMetrics{get<double>(m, "acc"), get<double>(m, "bwt"), get<double>(m, "fwt")};
    res.config_echo = get<json>(j, "config_echo").dump(1, ' ') + "\n";
    return res;
}

void RunConfig::validate() const {
    if (sequence.size() < 2) throw ValidationError("a run needs at least two domains");
    std::set<std::string> names;
    for (const auto& d : sequence) {
        d.validate();
        if (!names.insert(d.name).second) throw ValidationError("duplicate domain name '" + d.name + "'");
        if (d.input_dim() != run.model.input_dim || d.output_dim() != run.model.output_dim)
            throw ValidationError("domain '" + d.name + "' dims do not match the model config");
    }
    if (n_train == 0 || n_test == 0) throw ValidationError("n_train and n_test must be positive");
    if (run.replay_k > n_train) throw ValidationError("replay_k exceeds n_train");
    if (run.replay_k > 0 && run.strategy != Strategy::regcl)
        throw ValidationError("replay is only defined for the regcl strategy");
    run.train.validate();
    run.loss.validate();
    run.merge.validate();
}

std::string run_config_to_string(const RunConfig& cfg) {
    json seq = json::array();
    for (const auto& d : cfg.sequence) seq.push_back(domain_to_json(d));
    json j{{"sequence", seq},
           {"strategy", to_string(cfg.run.strategy)},
           {"train", train_config_to_json(cfg.run.train)},
           {"loss", loss_config_to_json(cfg.run.loss)},
           {"merge", merge_config_to_json(cfg.run.merge)},
           {"model", model_config_to_json(cfg.run.model)},
           {"replay_k", cfg.run.replay_k},
           {"seed", cfg.run.seed},
           {"n_train", cfg.n_train},
           {"n_test", cfg.n_test},
           {"output_dir", cfg.output_dir}};
    return dump(j);
}

RunConfig run_config_from_string(const std::string& text, RunConfig c) {
    const json j = parse(text);
    reject_unknown(j,
                   {"sequence", "suite", "strategy", "train", "loss", "merge", "model", "replay_k", "seed", "n_train",
                    "n_test", "output_dir"},
                   "run config");
    c.run.seed = get_or<std::uint64_t>(j, "seed", c.run.seed);
    if (j.contains("suite")) {
        const auto suite = get<std::string>(j, "suite");
        if (suite != "default5") throw ValidationError("unknown suite '" + suite + "'");
        c.sequence = default5_suite(c.run.seed);
    }
    if (j.contains("sequence")) {
        c.sequence.clear();
        for (const auto& d : get<json>(j, "sequence")) c.sequence.push_back(domain_from_json(d));
    }
    if (j.contains("strategy")) c.run.strategy = parse_strategy(get<std::string>(j, "strategy"));
    if (j.contains("train")) c.run.train = train_config_from_json(get<json>(j, "train"), c.run.train);
    if (j.contains("loss")) c.run.loss = loss_config_from_json(get<json>(j, "loss"), c.run.loss);
    if (j.contains("merge")) c.run.merge = merge_config_from_json(get<json>(j, "merge"), c.run.merge);
    if (j.contains("model")) c.run.model = model_config_from_json(get<json>(j, "model"), c.run.model);
    c.run.replay_k = get_or<std::size_t>(j, "replay_k", c.run.replay_k);
    c.n_train = get_or<std::size_t>(j, "n_train", c.n_train);
    c.n_test = get_or<std::size_t>(j, "n_test", c.n_test);
    c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
    return c;
}

std::string merge_config_to_string(const MergeConfig& cfg) { return dump(merge_config_to_json(cfg)); }

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
        out << text;
        if (!out.flush()) throw ValidationError("failed writing '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ValidationError("cannot write '" + path.string() + "': " + ec.message());
}

}  // namespace regcl::io
