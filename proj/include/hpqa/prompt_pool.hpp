#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "hpqa/param.hpp"
#include "hpqa/stream.hpp"

namespace hpqa {

enum class TaskChoiceKind { Gold, Inferred, Unseen };

struct TaskChoice {
    TaskChoiceKind kind = TaskChoiceKind::Gold;
    int task_id = 0;                     // Gold / Inferred
    Format format = Format::Extractive;  // Unseen

    static TaskChoice gold(int id) { return {TaskChoiceKind::Gold, id, Format::Extractive}; }
    static TaskChoice inferred(int id) { return {TaskChoiceKind::Inferred, id, Format::Extractive}; }
    static TaskChoice unseen(Format f) { return {TaskChoiceKind::Unseen, 0, f}; }
};

struct PromptSelection {
    TaskChoice task_choice;
    std::vector<int> meta_indices;       // ascending
    std::vector<double> meta_distances;  // parallel to meta_indices
};

struct PoolConfig {
    int len_general = 20;
    int len_format = 40;
    int len_task = 40;
    int len_meta = 20;
    int meta_count = 30;   // M
    int meta_select = 5;   // M'
    int d_model = 64;
    int query_dim = 64;
    bool use_general = true;
    bool use_format = true;
    bool use_task = true;
    bool use_meta = true;
};

// Composed prompt rows alias pool parameters: the value/grad pointers refer
// straight into the owning tensors, so gradient flow reaches exactly the
// selected prompts and nothing else.
struct ComposedPrompt {
    int dim = 0;
    std::vector<const double*> rows;
    std::vector<double*> grad_rows;

    std::size_t size() const { return rows.size(); }
    Matrix materialize() const;
};

class PromptPool {
public:
    PromptPool(const PoolConfig& cfg, std::uint64_t seed);

    const PoolConfig& config() const { return cfg_; }

    // Lazily creates the task prompt and its key; the key starts at the first
    // training query vector of the task.
    void ensure_task(int task_id, const Vec& first_query);
    bool has_task(int task_id) const { return task_keys_.count(task_id) > 0; }
    int task_count() const { return static_cast<int>(task_keys_.size()); }
    std::vector<int> task_ids() const;

    // Indices of the M' meta keys nearest to q; ties break to the lower index.
    std::vector<int> select_meta(const Vec& q, std::vector<double>* distances = nullptr) const;

    // Nearest learned task key. Errors when no task has been learned.
    std::pair<int, double> infer_task(const Vec& q) const;

    ComposedPrompt compose(Format format, const TaskChoice& choice,
                           const std::vector<int>& meta_indices) const;

    void renormalize_keys();

    const Vec task_key(int task_id) const;
    const double* meta_key(int i) const { return meta_keys_.value.row(static_cast<std::size_t>(i)); }
    const Matrix& meta_key_matrix() const { return meta_keys_.value; }
    Param& meta_keys_param() { return meta_keys_; }
    Param& task_key_param(int task_id) { return task_keys_.at(task_id); }

    // Prompt tensors optimized jointly with the backbone (not the keys).
    std::vector<Param*> prompt_params();
    std::vector<Param*> task_key_params();

    // Every tensor, stable order and names; used by checkpointing.
    void visit_params(const std::function<void(Param&)>& fn);

private:
    PoolConfig cfg_;
    std::uint64_t seed_;
    Param general_;
    std::array<Param, 3> format_;
    std::array<Param, 3> unseen_;
    std::vector<Param> meta_;
    Param meta_keys_;  // M x D, one key per row
    std::map<int, Param> task_prompts_;
    std::map<int, Param> task_keys_;  // 1 x D each
};

}  // namespace hpqa
