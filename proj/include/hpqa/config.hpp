#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpqa/prompt_pool.hpp"

namespace hpqa {

enum class BaselineMode { Diana, Finetune, Multitask };

const char* baseline_name(BaselineMode m);
BaselineMode baseline_from_name(const std::string& name);

// Every run hyperparameter, flat key=value on disk, echoed into artifacts.
struct RunConfig {
    // prompt pool
    int len_general = 20;
    int len_format = 40;
    int len_task = 40;
    int len_meta = 20;
    int meta_count = 30;  // M
    int meta_select = 5;  // M'

    // replay memory
    int memory_per_task = 50;  // E

    // backbone
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 256;
    int max_seq = 512;
    int decode_max_len = 8;

    // frozen query encoder
    int query_dim = 64;
    std::uint64_t encoder_seed = 1234;

    // optimization
    int epochs = 5;
    int batch = 16;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;

    // key-space losses and scheduled sampling
    double eta = 0.15;
    double gamma = 0.3;
    double alpha = 0.9;
    double beta = 3e-4;
    double omega = 0.05;

    // task boundaries
    double adb_lr = 0.02;
    int adb_steps = 200;
    bool adb_quantile = false;
    double fixed_boundary = 0.35;

    // evaluation
    std::vector<int> z_grid{2, 3, 5, 10};

    // seeds
    std::uint64_t seed = 42;
    std::uint64_t order_seed = 42;
    std::uint64_t sampling_seed = 0;  // 0 -> derived from seed

    BaselineMode baseline = BaselineMode::Diana;

    // ablation switches
    bool no_memory = false;
    bool no_adb = false;
    bool no_meta = false;
    bool no_task_prompt = false;
    bool no_format_prompt = false;
    bool no_general_prompt = false;
    bool no_sched_sampling = false;
    bool no_gt_identity = false;
    bool no_neg_samples = false;
    bool no_sample_div = false;
    bool no_memory_div = false;
    bool no_cluster = false;

    std::uint64_t resolved_sampling_seed() const {
        return sampling_seed ? sampling_seed : seed + 1000;
    }
    double effective_alpha() const {
        if (no_gt_identity) return 0.0;
        if (no_sched_sampling) return 1.0;
        return alpha;
    }
    double effective_beta() const { return no_sched_sampling ? 0.0 : beta; }
    double effective_omega() const { return no_task_prompt ? 0.0 : omega; }

    PoolConfig pool_config() const;
    void validate() const;
    std::string to_text() const;

    bool apply_ablation(const std::string& name);  // false when unknown
    static std::vector<std::string> ablation_names();
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// True when the two configs differ only in seed fields; differing field names
// are appended to `diffs` otherwise.
bool config_compatible(const RunConfig& a, const RunConfig& b, std::vector<std::string>& diffs);

}  // namespace hpqa
