#include "hpqa/prompt_pool.hpp"

#include <algorithm>
#include <cmath>

#include "hpqa/error.hpp"
#include "hpqa/rng.hpp"

namespace hpqa {

Matrix ComposedPrompt::materialize() const {
    Matrix m(rows.size(), static_cast<std::size_t>(dim));
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r], rows[r] + dim, m.row(r));
    return m;
}

static void init_uniform(Param& p, Rng& rng, double r) {
    for (auto& v : p.value.data) v = rng.uniform(-r, r);
}

static void init_unit_sphere_rows(Param& p, Rng& rng) {
    for (std::size_t i = 0; i < p.value.rows; ++i) {
        double* row = p.value.row(i);
        for (std::size_t j = 0; j < p.value.cols; ++j) row[j] = rng.gaussian();
        normalize_in_place(row, p.value.cols);
    }
}

PromptPool::PromptPool(const PoolConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    if (cfg.meta_select > cfg.meta_count)
        throw ValidationError("meta_select (M') must be <= meta_count (M): " +
                              std::to_string(cfg.meta_select) + " > " +
                              std::to_string(cfg.meta_count));
    if (cfg.meta_count < 1 || cfg.meta_select < 0)
        throw ValidationError("meta_count must be >= 1 and meta_select >= 0");

    auto R = [&](std::size_t rows, std::size_t cols, const char* name) {
        return Param(name, rows, cols);
    };
    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    general_ = R(static_cast<std::size_t>(cfg.len_general), d, "pool.general");
    for (int f = 0; f < 3; ++f) {
        format_[static_cast<std::size_t>(f)] =
            Param("pool.format." + std::to_string(f), static_cast<std::size_t>(cfg.len_format), d);
        unseen_[static_cast<std::size_t>(f)] =
            Param("pool.unseen." + std::to_string(f), static_cast<std::size_t>(cfg.len_task), d);
    }
    meta_.reserve(static_cast<std::size_t>(cfg.meta_count));
    for (int i = 0; i < cfg.meta_count; ++i)
        meta_.emplace_back("pool.meta." + std::to_string(i), static_cast<std::size_t>(cfg.len_meta), d);
    meta_keys_ = Param("pool.meta_keys", static_cast<std::size_t>(cfg.meta_count),
                       static_cast<std::size_t>(cfg.query_dim));

    Rng rng(seed);
    double r = 0.5 / std::sqrt(static_cast<double>(cfg.d_model));
    init_uniform(general_, rng, r);
    for (auto& p : format_) init_uniform(p, rng, r);
    for (auto& p : unseen_) init_uniform(p, rng, r);
    for (auto& p : meta_) init_uniform(p, rng, r);
    init_unit_sphere_rows(meta_keys_, rng);
}

void PromptPool::ensure_task(int task_id, const Vec& first_query) {
    if (task_keys_.count(task_id)) return;
    if (static_cast<int>(first_query.size()) != cfg_.query_dim)
        throw RuntimeFault("task key init: query dim mismatch");
    Rng rng(hash_combine(seed_, hash_combine(0x7a51u, static_cast<std::uint64_t>(task_id))));
    Param prompt("pool.task_prompt." + std::to_string(task_id),
                 static_cast<std::size_t>(cfg_.len_task), static_cast<std::size_t>(cfg_.d_model));
    init_uniform(prompt, rng, 0.5 / std::sqrt(static_cast<double>(cfg_.d_model)));
    task_prompts_.emplace(task_id, std::move(prompt));

    Param key("pool.task_key." + std::to_string(task_id), 1,
              static_cast<std::size_t>(cfg_.query_dim));
    std::copy(first_query.begin(), first_query.end(), key.value.row(0));
    normalize_in_place(key.value.row(0), key.value.cols);
    task_keys_.emplace(task_id, std::move(key));
}

std::vector<int> PromptPool::task_ids() const {
    std::vector<int> ids;
    for (const auto& [id, _] : task_keys_) ids.push_back(id);
    return ids;
}

std::vector<int> PromptPool::select_meta(const Vec& q, std::vector<double>* distances) const {
    int mprime = cfg_.use_meta ? cfg_.meta_select : 0;
    std::vector<std::pair<double, int>> order;
    if (mprime > 0) {
        order.reserve(static_cast<std::size_t>(cfg_.meta_count));
        for (int i = 0; i < cfg_.meta_count; ++i)
            order.emplace_back(
                cosine_distance(q.data(), meta_keys_.value.row(static_cast<std::size_t>(i)),
                                q.size()),
                i);
        std::sort(order.begin(), order.end());  // distance, then lowest index
        order.resize(static_cast<std::size_t>(mprime));
        std::sort(order.begin(), order.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
    }
    std::vector<int> idx;
    if (distances) distances->clear();
    for (const auto& [d, i] : order) {
        idx.push_back(i);
        if (distances) distances->push_back(d);
    }
    return idx;
}

std::pair<int, double> PromptPool::infer_task(const Vec& q) const {
    if (task_keys_.empty())
        throw RuntimeFault("infer_task: no task keys exist yet");
    int best = -1;
    double best_d = 0.0;
    for (const auto& [id, key] : task_keys_) {  // ascending id; strict < keeps lowest on tie
        double d = cosine_distance(q.data(), key.value.row(0), q.size());
        if (best < 0 || d < best_d) {
            best = id;
            best_d = d;
        }
    }
    return {best, best_d};
}

ComposedPrompt PromptPool::compose(Format format, const TaskChoice& choice,
                                   const std::vector<int>& meta_indices) const {
    ComposedPrompt out;
    out.dim = cfg_.d_model;
    auto append = [&](const Param& p) {
        auto& mut = const_cast<Param&>(p);
        for (std::size_t r = 0; r < p.value.rows; ++r) {
            out.rows.push_back(p.value.row(r));
            out.grad_rows.push_back(mut.grad.row(r));
        }
    };
    if (cfg_.use_general) append(general_);
    if (cfg_.use_format) append(format_[static_cast<std::size_t>(format)]);
    if (cfg_.use_task) {
        if (choice.kind == TaskChoiceKind::Unseen) {
            append(unseen_[static_cast<std::size_t>(choice.format)]);
        } else {
            auto it = task_prompts_.find(choice.task_id);
            if (it == task_prompts_.end())
                throw RuntimeFault("compose_prompt: missing task prompt for task " +
                                   std::to_string(choice.task_id));
            append(it->second);
        }
    }
    if (cfg_.use_meta) {
        for (std::size_t i = 0; i + 1 < meta_indices.size(); ++i)
            if (meta_indices[i] >= meta_indices[i + 1])
                throw RuntimeFault("compose_prompt: meta indices must be strictly ascending");
        for (int i : meta_indices) {
            if (i < 0 || i >= cfg_.meta_count)
                throw RuntimeFault("compose_prompt: meta index out of range");
            append(meta_[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

void PromptPool::renormalize_keys() {
    for (std::size_t i = 0; i < meta_keys_.value.rows; ++i)
        normalize_in_place(meta_keys_.value.row(i), meta_keys_.value.cols);
    for (auto& [_, key] : task_keys_) normalize_in_place(key.value.row(0), key.value.cols);
}

const Vec PromptPool::task_key(int task_id) const {
    const Param& p = task_keys_.at(task_id);
    return Vec(p.value.row(0), p.value.row(0) + p.value.cols);
}

std::vector<Param*> PromptPool::prompt_params() {
    std::vector<Param*> out;
    out.push_back(&general_);
    for (auto& p : format_) out.push_back(&p);
    for (auto& p : unseen_) out.push_back(&p);
    for (auto& p : meta_) out.push_back(&p);
    for (auto& [_, p] : task_prompts_) out.push_back(&p);
    return out;
}

std::vector<Param*> PromptPool::task_key_params() {
    std::vector<Param*> out;
    for (auto& [_, p] : task_keys_) out.push_back(&p);
    return out;
}

void PromptPool::visit_params(const std::function<void(Param&)>& fn) {
    fn(general_);
    for (auto& p : format_) fn(p);
    for (auto& p : unseen_) fn(p);
    for (auto& p : meta_) fn(p);
    fn(meta_keys_);
    for (auto& [_, p] : task_prompts_) fn(p);
    for (auto& [_, p] : task_keys_) fn(p);
}

}  // namespace hpqa
