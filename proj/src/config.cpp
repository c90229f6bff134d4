#include "hpqa/config.hpp"

#include <functional>
#include <sstream>

#include "hpqa/error.hpp"
#include "hpqa/kv.hpp"

namespace hpqa {

const char* baseline_name(BaselineMode m) {
    switch (m) {
        case BaselineMode::Diana: return "diana";
        case BaselineMode::Finetune: return "finetune";
        case BaselineMode::Multitask: return "multitask";
    }
    return "?";
}

BaselineMode baseline_from_name(const std::string& name) {
    if (name == "diana") return BaselineMode::Diana;
    if (name == "finetune") return BaselineMode::Finetune;
    if (name == "multitask") return BaselineMode::Multitask;
    throw ValidationError("field baseline: unknown mode '" + name + "'");
}

namespace {

struct Field {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
    bool is_seed = false;
};

std::vector<Field> build_fields() {
    std::vector<Field> f;
    auto add_int = [&](const char* n, int RunConfig::* p) {
        f.push_back({n,
                     [p, n](RunConfig& c, const std::string& v) {
                         c.*p = static_cast<int>(parse_int(n, v));
                     },
                     [p](const RunConfig& c) { return std::to_string(c.*p); }, false});
    };
    auto add_u64 = [&](const char* n, std::uint64_t RunConfig::* p, bool seedish) {
        f.push_back({n,
                     [p, n](RunConfig& c, const std::string& v) {
                         c.*p = static_cast<std::uint64_t>(parse_int(n, v));
                     },
                     [p](const RunConfig& c) { return std::to_string(c.*p); }, seedish});
    };
    auto add_double = [&](const char* n, double RunConfig::* p) {
        f.push_back({n,
                     [p, n](RunConfig& c, const std::string& v) { c.*p = parse_double(n, v); },
                     [p](const RunConfig& c) { return format_double(c.*p); }, false});
    };
    auto add_bool = [&](const char* n, bool RunConfig::* p) {
        f.push_back({n,
                     [p, n](RunConfig& c, const std::string& v) { c.*p = parse_bool(n, v); },
                     [p](const RunConfig& c) { return (c.*p) ? "true" : "false"; }, false});
    };

    add_int("len_general", &RunConfig::len_general);
    add_int("len_format", &RunConfig::len_format);
    add_int("len_task", &RunConfig::len_task);
    add_int("len_meta", &RunConfig::len_meta);
    add_int("meta_count", &RunConfig::meta_count);
    add_int("meta_select", &RunConfig::meta_select);
    add_int("memory_per_task", &RunConfig::memory_per_task);
    add_int("d_model", &RunConfig::d_model);
    add_int("n_heads", &RunConfig::n_heads);
    add_int("d_ff", &RunConfig::d_ff);
    add_int("max_seq", &RunConfig::max_seq);
    add_int("decode_max_len", &RunConfig::decode_max_len);
    add_int("query_dim", &RunConfig::query_dim);
    add_u64("encoder_seed", &RunConfig::encoder_seed, false);
    add_int("epochs", &RunConfig::epochs);
    add_int("batch", &RunConfig::batch);
    add_double("lr", &RunConfig::lr);
    add_double("beta1", &RunConfig::beta1);
    add_double("beta2", &RunConfig::beta2);
    add_double("adam_eps", &RunConfig::adam_eps);
    add_double("weight_decay", &RunConfig::weight_decay);
    add_double("eta", &RunConfig::eta);
    add_double("gamma", &RunConfig::gamma);
    add_double("alpha", &RunConfig::alpha);
    add_double("beta", &RunConfig::beta);
    add_double("omega", &RunConfig::omega);
    add_double("adb_lr", &RunConfig::adb_lr);
    add_int("adb_steps", &RunConfig::adb_steps);
    add_bool("adb_quantile", &RunConfig::adb_quantile);
    add_double("fixed_boundary", &RunConfig::fixed_boundary);
    f.push_back({"z_grid",
                 [](RunConfig& c, const std::string& v) {
                     c.z_grid.clear();
                     std::istringstream in(v);
                     std::string item;
                     while (std::getline(in, item, ','))
                         c.z_grid.push_back(static_cast<int>(parse_int("z_grid", item)));
                 },
                 [](const RunConfig& c) {
                     std::string out;
                     for (int z : c.z_grid) {
                         if (!out.empty()) out += ',';
                         out += std::to_string(z);
                     }
                     return out;
                 },
                 false});
    add_u64("seed", &RunConfig::seed, true);
    add_u64("order_seed", &RunConfig::order_seed, true);
    add_u64("sampling_seed", &RunConfig::sampling_seed, true);
    f.push_back({"baseline",
                 [](RunConfig& c, const std::string& v) { c.baseline = baseline_from_name(v); },
                 [](const RunConfig& c) { return baseline_name(c.baseline); }, false});
    add_bool("no_memory", &RunConfig::no_memory);
    add_bool("no_adb", &RunConfig::no_adb);
    add_bool("no_meta", &RunConfig::no_meta);
    add_bool("no_task_prompt", &RunConfig::no_task_prompt);
    add_bool("no_format_prompt", &RunConfig::no_format_prompt);
    add_bool("no_general_prompt", &RunConfig::no_general_prompt);
    add_bool("no_sched_sampling", &RunConfig::no_sched_sampling);
    add_bool("no_gt_identity", &RunConfig::no_gt_identity);
    add_bool("no_neg_samples", &RunConfig::no_neg_samples);
    add_bool("no_sample_div", &RunConfig::no_sample_div);
    add_bool("no_memory_div", &RunConfig::no_memory_div);
    add_bool("no_cluster", &RunConfig::no_cluster);
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = build_fields();
    return f;
}

}  // namespace

PoolConfig RunConfig::pool_config() const {
    PoolConfig pc;
    pc.len_general = len_general;
    pc.len_format = len_format;
    pc.len_task = len_task;
    pc.len_meta = len_meta;
    pc.meta_count = meta_count;
    pc.meta_select = meta_select;
    pc.d_model = d_model;
    pc.query_dim = query_dim;
    bool finetune = baseline == BaselineMode::Finetune;
    pc.use_general = !no_general_prompt;
    pc.use_format = !no_format_prompt && !finetune;
    pc.use_task = !no_task_prompt && !finetune;
    pc.use_meta = !no_meta && !finetune;
    return pc;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("config: " + msg); };
    if (len_general < 1 || len_format < 1 || len_task < 1 || len_meta < 1)
        fail("prompt lengths must be >= 1");
    if (meta_count < 1) fail("meta_count must be >= 1");
    if (meta_select < 0 || meta_select > meta_count) fail("meta_select must be in [0, meta_count]");
    if (memory_per_task < 1) fail("memory_per_task must be >= 1");
    if (d_model < 2 || n_heads < 1 || d_model % n_heads != 0)
        fail("d_model must be a positive multiple of n_heads");
    if (d_ff < 1) fail("d_ff must be >= 1");
    if (max_seq < 8) fail("max_seq must be >= 8");
    if (decode_max_len < 1) fail("decode_max_len must be >= 1");
    if (query_dim < 2) fail("query_dim must be >= 2");
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch < 1) fail("batch must be >= 1");
    if (lr <= 0.0) fail("lr must be > 0");
    if (eta <= 0.0 || eta >= 1.0) fail("eta must lie in (0,1)");
    if (gamma <= 0.0 || gamma >= 1.0) fail("gamma must lie in (0,1)");
    if (alpha < 0.0 || alpha > 1.0) fail("alpha must lie in [0,1]");
    if (beta < 0.0) fail("beta must be >= 0");
    if (omega < 0.0 || omega >= 1.0) fail("omega must lie in [0,1)");
    if (adb_lr <= 0.0 || adb_steps < 1) fail("adb_lr must be > 0 and adb_steps >= 1");
    if (fixed_boundary <= 0.0 || fixed_boundary >= 2.0) fail("fixed_boundary must lie in (0,2)");
    if (z_grid.empty()) fail("z_grid must be non-empty");
    for (int z : z_grid)
        if (z < 1) fail("z_grid entries must be >= 1");
    if (no_sched_sampling && no_gt_identity)
        fail("no_sched_sampling and no_gt_identity are mutually exclusive");
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& f : fields()) {
        out += f.name;
        out += '=';
        out += f.get(*this);
        out += '\n';
    }
    return out;
}

bool RunConfig::apply_ablation(const std::string& name) {
    for (const auto& f : fields()) {
        if (f.name == name && name.rfind("no_", 0) == 0) {
            f.set(*this, "true");
            return true;
        }
    }
    return false;
}

std::vector<std::string> RunConfig::ablation_names() {
    std::vector<std::string> out;
    for (const auto& f : fields())
        if (f.name.rfind("no_", 0) == 0) out.push_back(f.name);
    return out;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    for (const auto& [key, value] : parse_kv_text(text)) {
        bool known = false;
        for (const auto& f : fields()) {
            if (f.name == key) {
                f.set(cfg, value);
                known = true;
                break;
            }
        }
        if (!known) throw ValidationError("unknown config field: " + key);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_text_file(path));
}

bool config_compatible(const RunConfig& a, const RunConfig& b, std::vector<std::string>& diffs) {
    for (const auto& f : fields()) {
        if (f.is_seed) continue;
        if (f.get(a) != f.get(b)) diffs.push_back(f.name);
    }
    return diffs.empty();
}

}  // namespace hpqa
