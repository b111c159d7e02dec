#include "mlagen/pipeline/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace mlagen::pipeline {

json default_config() {
    return json{
        {"seed", 0},
        {"run_dir", "run"},
        {"variant", ""},
        {"data",
         {{"n_samples", 2000},
          {"joints", synth::kDefaultJoints},
          {"max_primitives", 3},
          {"modifier_prob", 0.3},
          {"while_prob", 0.3},
          {"velocity_cap", 0.25}}},
        {"ae", {{"d_ae", 8}, {"hidden", 64}, {"epochs", 12}, {"batch_rows", 512}, {"lr", 2e-3}, {"weight_decay", 0.0}}},
        {"flow",
         {{"d_flow", 128},
          {"blocks", 4},
          {"slots", 16},
          {"heads", 4},
          {"d_time", 32},
          {"max_latent", 64},
          {"ff_mult", 2},
          {"lambda", 0.2},
          {"use_memory", true},
          {"use_align", true},
          {"text", {{"d_clip", 32}, {"max_tokens", 16}, {"heads", 4}, {"causal", true}, {"context", 0}}},
          {"train",
           {{"epochs", 50},
            {"batch_size", 64},
            {"lr", 1e-3},
            {"weight_decay", 0.1},
            {"p_drop", 0.1},
            {"grad_clip", 1.0},
            {"warmup_steps", 0}}},
          {"mask", {{"enabled", true}, {"t_thresh", 0.2}}}}},
        {"sampler",
         {{"steps", 100},
          {"w", 4.0},
          {"strategy", "sink_ctrl"},
          {"cl_scale_uncond", 1.0},
          {"lambda_ctrl", 6.0},
          {"k_base", 2.0},
          {"alpha", 0.18},
          {"K", 2},
          {"split", "test"},
          {"n_prompts", 0},
          {"heatmaps", 4},
          {"batch", 64}}},
        {"eval",
         {{"d_eval", 32},
          {"hidden", 64},
          {"time_bins", 4},
          {"epochs", 30},
          {"batch_size", 32},
          {"lr", 1e-3},
          {"weight_decay", 0.01},
          {"temperature", 0.1},
          {"repetitions", 20},
          {"mm_texts", 8},
          {"mm_pairs", 10}}},
        {"ablate", {{"grid", "memory_align"}, {"n_seeds", 1}}},
    };
}

std::map<std::string, std::string> desk_scale_notes() {
    return {
        {"flow.train.epochs", "desk-scale override: reference setting is 500 epochs"},
        {"flow.train.lr", "desk-scale override: reference setting is 2e-4; raised for the short desk schedule"},
        {"flow.d_flow", "desk-scale override: reference model width not reproducible on CPU"},
        {"flow.blocks", "desk-scale override: reference depth not reproducible on CPU"},
        {"data.n_samples", "desk-scale override: synthetic corpus replaces the reference dataset"},
    };
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> out;
    std::string part;
    std::istringstream is(path);
    while (std::getline(is, part, '.')) {
        if (part.empty()) throw ConfigError("config: malformed field path '" + path + "'");
        out.push_back(part);
    }
    if (out.empty()) throw ConfigError("config: empty field path");
    return out;
}

json* find_leaf(json& cfg, const std::string& path) {
    json* node = &cfg;
    for (const auto& key : split_path(path)) {
        if (!node->is_object() || !node->contains(key)) return nullptr;
        node = &(*node)[key];
    }
    return node->is_object() ? nullptr : node;
}

void collect(const json& j, const std::string& prefix, std::vector<std::string>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.key().empty() && it.key()[0] == '_') continue;
        const std::string p = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object())
            collect(*it, p, out);
        else
            out.push_back(p);
    }
}

bool same_kind(const json& a, const json& b) {
    if (a.is_boolean() || b.is_boolean()) return a.is_boolean() && b.is_boolean();
    if (a.is_number_integer()) return b.is_number_integer();
    if (a.is_number()) return b.is_number();
    if (a.is_string()) return b.is_string();
    return a.type() == b.type();
}

void check_schema(const json& ref, const json& cfg, const std::string& prefix) {
    if (!cfg.is_object()) throw ConfigError("config: '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        if (!it.key().empty() && it.key()[0] == '_') continue;
        const std::string p = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!ref.contains(it.key())) throw ConfigError("config: unknown field '" + p + "'");
        const json& r = ref[it.key()];
        if (r.is_object())
            check_schema(r, *it, p);
        else if (!same_kind(r, *it))
            throw ConfigError("config: field '" + p + "' expects " + std::string(r.type_name()) + ", got " +
                              std::string(it->type_name()));
    }
    for (auto it = ref.begin(); it != ref.end(); ++it)
        if (!cfg.contains(it.key()))
            throw ConfigError("config: missing field '" + (prefix.empty() ? it.key() : prefix + "." + it.key()) + "'");
}

template <typename T>
T at(const json& cfg, const std::string& path) {
    return get_path(cfg, path).get<T>();
}

void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) throw ConfigError("config: field '" + path + "' " + what);
}

int positive_int(const json& cfg, const std::string& path) {
    const int v = at<int>(cfg, path);
    require(v >= 1, path, "must be >= 1");
    return v;
}

double positive(const json& cfg, const std::string& path) {
    const double v = at<double>(cfg, path);
    require(v > 0, path, "must be > 0");
    return v;
}

double nonnegative(const json& cfg, const std::string& path) {
    const double v = at<double>(cfg, path);
    require(v >= 0, path, "must be >= 0");
    return v;
}

double probability(const json& cfg, const std::string& path) {
    const double v = at<double>(cfg, path);
    require(v >= 0 && v <= 1, path, "must lie in [0, 1]");
    return v;
}

}  // namespace

const json& get_path(const json& cfg, const std::string& path) {
    const json* node = &cfg;
    for (const auto& key : split_path(path)) {
        if (!node->is_object() || !node->contains(key)) throw ConfigError("config: unknown field '" + path + "'");
        node = &(*node)[key];
    }
    return *node;
}

void set_path(json& cfg, const std::string& path, const std::string& value) {
    json* leaf = find_leaf(cfg, path);
    if (!leaf) throw ConfigError("config: unknown field '" + path + "'");
    try {
        if (leaf->is_boolean()) {
            if (value == "true" || value == "1")
                *leaf = true;
            else if (value == "false" || value == "0")
                *leaf = false;
            else
                throw ConfigError("config: field '" + path + "' expects a boolean, got '" + value + "'");
        } else if (leaf->is_number_integer()) {
            std::size_t used = 0;
            const long long v = std::stoll(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            *leaf = v;
        } else if (leaf->is_number()) {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            *leaf = v;
        } else {
            *leaf = value;
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("config: field '" + path + "' expects a number, got '" + value + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("config: field '" + path + "' value out of range: '" + value + "'");
    }
}

std::vector<std::string> leaf_paths(const json& cfg) {
    std::vector<std::string> out;
    collect(cfg, "", out);
    return out;
}

json merge_defaults(const json& cfg) {
    json out = default_config();
    out.merge_patch(cfg);
    return out;
}

void validate_config(const json& cfg) {
    check_schema(default_config(), cfg, "");
    require(at<long long>(cfg, "seed") >= 0, "seed", "must be >= 0");
    require(!at<std::string>(cfg, "run_dir").empty(), "run_dir", "must not be empty");
    data_config(cfg);
    ae_config(cfg);
    flow_config(cfg, synth::default_vocabulary(at<int>(cfg, "data.joints")).size()).validate();
    flow_train_config(cfg);
    sampler_config(cfg).validate();
    evaluator_config(cfg, 17).validate();
    eval_protocol(cfg).validate();
    const auto split = at<std::string>(cfg, "sampler.split");
    try {
        synth::parse_split(split);
    } catch (const Error&) {
        throw ConfigError("config: field 'sampler.split' must be train, val or test");
    }
    require(at<int>(cfg, "sampler.n_prompts") >= 0, "sampler.n_prompts", "must be >= 0");
    require(at<int>(cfg, "sampler.heatmaps") >= 0, "sampler.heatmaps", "must be >= 0");
    positive_int(cfg, "sampler.batch");
    const auto grid = at<std::string>(cfg, "ablate.grid");
    require(grid == "memory_align" || grid == "sink_mask" || grid == "cond_uncond" || grid == "sink_ctrl" ||
                grid == "single",
            "ablate.grid", "must be one of memory_align, sink_mask, cond_uncond, sink_ctrl, single");
    positive_int(cfg, "ablate.n_seeds");
}

std::filesystem::path run_directory(const json& cfg) {
    std::filesystem::path p = at<std::string>(cfg, "run_dir");
    if (p.is_relative()) {
        if (const char* root = std::getenv("MLAGEN_RUN_ROOT"); root && *root) return std::filesystem::path(root) / p;
    }
    return p;
}

std::string variant_tag(const json& cfg) {
    if (const auto v = at<std::string>(cfg, "variant"); !v.empty()) return v;
    std::string mods;
    const bool mem = at<bool>(cfg, "flow.use_memory"), al = at<bool>(cfg, "flow.use_align");
    if (!mem && !al)
        mods = "noMA";
    else if (!mem)
        mods = "noM";
    else if (!al)
        mods = "noA";
    else
        mods = "S";
    std::string mask = "nomask";
    if (at<bool>(cfg, "flow.mask.enabled")) {
        const double t = at<double>(cfg, "flow.mask.t_thresh");
        mask = t == sink::kStrongMask ? "strongmask" : t == sink::kWeakMask ? "weakmask" : "mask" + [&] {
            std::ostringstream os;
            os << t;
            return os.str();
        }();
    }
    std::string strat = at<std::string>(cfg, "sampler.strategy");
    strat.erase(std::remove(strat.begin(), strat.end(), '_'), strat.end());
    std::ostringstream os;
    os << mods << '-' << mask << '-' << strat << "-w" << at<double>(cfg, "sampler.w");
    if (const double c = at<double>(cfg, "sampler.cl_scale_uncond"); c != 1.0) os << "-cl" << c;
    return os.str();
}

std::uint64_t component_seed(const json& cfg, const std::string& name) {
    return substream(at<std::uint64_t>(cfg, "seed"), name)();
}

synth::GeneratorConfig data_config(const json& cfg) {
    synth::GeneratorConfig g;
    g.n_samples = positive_int(cfg, "data.n_samples");
    g.joints = at<int>(cfg, "data.joints");
    require(g.joints >= 2, "data.joints", "must be >= 2");
    g.max_primitives = positive_int(cfg, "data.max_primitives");
    g.modifier_prob = probability(cfg, "data.modifier_prob");
    g.while_prob = probability(cfg, "data.while_prob");
    g.velocity_cap = positive(cfg, "data.velocity_cap");
    g.vocab = synth::default_vocabulary(g.joints);
    g.seed = component_seed(cfg, "data");
    return g;
}

model::AEConfig ae_config(const json& cfg) {
    model::AEConfig a;
    a.joints = at<int>(cfg, "data.joints");
    a.d_ae = positive_int(cfg, "ae.d_ae");
    a.hidden = positive_int(cfg, "ae.hidden");
    a.epochs = positive_int(cfg, "ae.epochs");
    a.batch_rows = positive_int(cfg, "ae.batch_rows");
    a.lr = positive(cfg, "ae.lr");
    a.weight_decay = nonnegative(cfg, "ae.weight_decay");
    a.seed = component_seed(cfg, "ae");
    return a;
}

model::FlowConfig flow_config(const json& cfg, int vocab_size) {
    model::FlowConfig f;
    f.joints = at<int>(cfg, "data.joints");
    f.d_ae = positive_int(cfg, "ae.d_ae");
    f.d_flow = positive_int(cfg, "flow.d_flow");
    f.blocks = positive_int(cfg, "flow.blocks");
    f.slots = positive_int(cfg, "flow.slots");
    f.heads = positive_int(cfg, "flow.heads");
    f.d_time = positive_int(cfg, "flow.d_time");
    f.max_latent = positive_int(cfg, "flow.max_latent");
    require(f.max_latent >= model::latent_length(synth::kMaxFrames), "flow.max_latent",
            "must cover the longest clip (" + std::to_string(model::latent_length(synth::kMaxFrames)) + ")");
    f.ff_mult = positive_int(cfg, "flow.ff_mult");
    f.lambda = nonnegative(cfg, "flow.lambda");
    f.use_memory = at<bool>(cfg, "flow.use_memory");
    f.use_align = at<bool>(cfg, "flow.use_align");
    f.text.vocab = vocab_size;
    f.text.d_clip = positive_int(cfg, "flow.text.d_clip");
    f.text.max_tokens = positive_int(cfg, "flow.text.max_tokens");
    f.text.heads = positive_int(cfg, "flow.text.heads");
    f.text.causal = at<bool>(cfg, "flow.text.causal");
    f.text.context = at<int>(cfg, "flow.text.context");
    require(f.text.context >= 0 && f.text.context <= f.text.max_tokens, "flow.text.context",
            "must lie in [0, flow.text.max_tokens]");
    require(f.text.d_clip % f.text.heads == 0, "flow.text.d_clip", "must be divisible by flow.text.heads");
    require(f.d_flow % f.heads == 0, "flow.d_flow", "must be divisible by flow.heads");
    require(f.d_time % 2 == 0 && f.d_time >= 2, "flow.d_time", "must be even");
    return f;
}

model::MaskPolicy mask_policy(const json& cfg) {
    model::MaskPolicy m;
    m.enabled = at<bool>(cfg, "flow.mask.enabled");
    const double t = at<double>(cfg, "flow.mask.t_thresh");
    require(t >= 0 && t <= 1, "flow.mask.t_thresh", "must lie in [0, 1]");
    m.t_thresh = m.enabled ? t : sink::kNoMask;
    return m;
}

model::FlowTrainConfig flow_train_config(const json& cfg) {
    model::FlowTrainConfig t;
    t.epochs = positive_int(cfg, "flow.train.epochs");
    t.batch_size = positive_int(cfg, "flow.train.batch_size");
    t.lr = positive(cfg, "flow.train.lr");
    t.weight_decay = nonnegative(cfg, "flow.train.weight_decay");
    t.p_drop = probability(cfg, "flow.train.p_drop");
    t.grad_clip = nonnegative(cfg, "flow.train.grad_clip");
    t.warmup_steps = at<int>(cfg, "flow.train.warmup_steps");
    require(t.warmup_steps >= 0, "flow.train.warmup_steps", "must be >= 0");
    t.mask = mask_policy(cfg);
    t.seed = component_seed(cfg, "flow");
    return t;
}

sampler::SamplerConfig sampler_config(const json& cfg) {
    sampler::SamplerConfig s;
    s.steps = positive_int(cfg, "sampler.steps");
    s.w = positive(cfg, "sampler.w");
    try {
        s.strategy = sampler::parse_strategy(at<std::string>(cfg, "sampler.strategy"));
    } catch (const Error& e) {
        throw ConfigError("config: field 'sampler.strategy' " + std::string(e.what()));
    }
    s.cl_scale_uncond = nonnegative(cfg, "sampler.cl_scale_uncond");
    s.ctrl.lambda_ctrl = at<double>(cfg, "sampler.lambda_ctrl");
    s.ctrl.k_base = nonnegative(cfg, "sampler.k_base");
    s.ctrl.alpha = nonnegative(cfg, "sampler.alpha");
    s.K = positive_int(cfg, "sampler.K");
    s.mask = mask_policy(cfg);
    return s;
}

eval::EvaluatorConfig evaluator_config(const json& cfg, int vocab_size) {
    eval::EvaluatorConfig e;
    e.joints = at<int>(cfg, "data.joints");
    e.d_eval = positive_int(cfg, "eval.d_eval");
    e.hidden = positive_int(cfg, "eval.hidden");
    e.time_bins = positive_int(cfg, "eval.time_bins");
    e.epochs = positive_int(cfg, "eval.epochs");
    e.batch_size = positive_int(cfg, "eval.batch_size");
    e.lr = positive(cfg, "eval.lr");
    e.weight_decay = nonnegative(cfg, "eval.weight_decay");
    e.temperature = positive(cfg, "eval.temperature");
    e.text.vocab = vocab_size;
    e.text.d_clip = positive_int(cfg, "flow.text.d_clip");
    e.text.max_tokens = positive_int(cfg, "flow.text.max_tokens");
    e.text.heads = positive_int(cfg, "flow.text.heads");
    e.text.causal = at<bool>(cfg, "flow.text.causal");
    e.text.context = 0;
    e.seed = component_seed(cfg, "eval");
    return e;
}

eval::EvalProtocol eval_protocol(const json& cfg) {
    eval::EvalProtocol p;
    p.repetitions = positive_int(cfg, "eval.repetitions");
    p.mm_texts = at<int>(cfg, "eval.mm_texts");
    require(p.mm_texts >= 0, "eval.mm_texts", "must be >= 0");
    p.mm_pairs = positive_int(cfg, "eval.mm_pairs");
    p.batch = positive_int(cfg, "sampler.batch");
    p.seed = component_seed(cfg, "evaluate");
    return p;
}

}  // namespace mlagen::pipeline
