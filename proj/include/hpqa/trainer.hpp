#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hpqa/backbone.hpp"
#include "hpqa/config.hpp"
#include "hpqa/key_space.hpp"
#include "hpqa/prompt_pool.hpp"
#include "hpqa/query_encoder.hpp"
#include "hpqa/rng.hpp"
#include "hpqa/stream.hpp"

namespace hpqa {

struct MemoryEntry {
    Sample sample;
    Vec query;  // cached encode_query of the sample
    int task_id = 0;
};

struct MemoryBuffer {
    std::vector<MemoryEntry> entries;

    std::size_t size() const { return entries.size(); }
    std::vector<Vec> queries() const;
    std::vector<std::size_t> indices_for_task(int task_id) const;
};

// One record per optimizer step, consumed by the metrics module and reports.
struct StepLog {
    int stage = 0;    // 1-based curriculum position
    int task_id = 0;  // 0 for the joint multitask stage
    int step = 0;     // within-stage step index k (Eq. of the linear schedule)
    double eps_k = 0.0;
    double qa_loss = 0.0;
    double task_loss = 0.0;
    double meta_loss = 0.0;
    double memory_meta_loss = 0.0;
    int n_gold = 0;
    int n_inferred = 0;
    int n_unseen_branch = 0;
    int n_negatives = 0;
};

double epsilon_schedule(std::int64_t k, double alpha, double beta);

// Scheduled-sampling branch: unseen-prompt exposure with probability omega,
// otherwise gold identity with probability eps_k, otherwise inferred.
TaskChoice choose_task_prompt(int gold_task, Format format, double eps_k, double omega,
                              const PromptPool& pool, const Vec& q, Rng& rng);

// Selection half of the per-task memory update: per-key quotas, dedup by
// smallest key distance, global rank, top-E. Returns indices into `queries`
// in ranked order.
std::vector<std::size_t> select_memory_samples(const std::vector<Vec>& queries,
                                               const Matrix& meta_keys, int capacity);

// Balanced absolute-deviation boundary via softplus-parameterized descent.
double fit_boundary(const std::vector<double>& distances, double lr, int steps);
// Deterministic alternative: 95th percentile, linear interpolation.
double quantile95(const std::vector<double>& distances);

class Trainer {
public:
    Trainer(const RunConfig& cfg, const Vocab& vocab);

    void train_task(const TaskDef& task);
    // Multitask reference: one joint stage over all given tasks.
    void train_joint(const std::vector<TaskDef>& tasks);

    void update_memory(const TaskDef& task);
    void fit_adb();

    std::pair<TaskChoice, PromptSelection> detect_and_route(const std::string& context,
                                                            const std::string& question) const;
    std::string answer(const std::string& context, const std::string& question) const;

    const RunConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }
    const QueryEncoder& encoder() const { return encoder_; }
    const PromptPool& pool() const { return pool_; }
    PromptPool& pool_mut() { return pool_; }
    Seq2SeqModel& model() { return model_; }
    const MemoryBuffer& memory() const { return memory_; }
    const std::map<int, double>& boundaries() const { return boundaries_; }
    bool boundaries_fitted() const { return boundaries_fitted_; }
    const std::vector<int>& learned() const { return learned_; }
    const std::vector<StepLog>& log() const { return log_; }

    // Checkpoint restore hooks.
    void restore_memory(std::vector<MemoryEntry> entries);
    void restore_boundaries(std::map<int, double> b, bool fitted);
    void restore_learned(std::vector<int> ids);
    std::pair<std::uint64_t, std::uint64_t> rng_counters() const;
    void set_rng_counters(std::uint64_t data_counter, std::uint64_t sampling_counter);

private:
    struct Item {
        const Sample* sample = nullptr;
        const Vec* query = nullptr;
        int gold = 0;
        bool from_memory = false;
        std::size_t memory_index = 0;
        SerializedSample ser;
    };

    void run_stage(int stage_task_id, const std::vector<const TaskDef*>& tasks);
    void apply_step();
    ComposedPrompt compose_for(Format fmt, const TaskChoice& choice,
                               const std::vector<int>& meta) const;

    RunConfig cfg_;
    Vocab vocab_;
    QueryEncoder encoder_;
    PromptPool pool_;
    Seq2SeqModel model_;
    MemoryBuffer memory_;
    std::map<int, double> boundaries_;
    bool boundaries_fitted_ = false;
    std::vector<int> learned_;
    Rng data_rng_;
    Rng sampling_rng_;
    AdamConfig adam_;
    std::vector<StepLog> log_;
};

}  // namespace hpqa
