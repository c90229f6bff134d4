#include "hpqa/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "hpqa/error.hpp"

namespace hpqa {

std::vector<Vec> MemoryBuffer::queries() const {
    std::vector<Vec> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.query);
    return out;
}

std::vector<std::size_t> MemoryBuffer::indices_for_task(int task_id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].task_id == task_id) out.push_back(i);
    return out;
}

double epsilon_schedule(std::int64_t k, double alpha, double beta) {
    return std::max(0.0, alpha - static_cast<double>(k) * beta);
}

TaskChoice choose_task_prompt(int gold_task, Format format, double eps_k, double omega,
                              const PromptPool& pool, const Vec& q, Rng& rng) {
    double zeta = rng.uniform();
    double eps = rng.uniform();
    if (zeta < omega) return TaskChoice::unseen(format);
    if (eps < eps_k) return TaskChoice::gold(gold_task);
    if (pool.task_count() == 0) return TaskChoice::gold(gold_task);
    return TaskChoice::inferred(pool.infer_task(q).first);
}

std::vector<std::size_t> select_memory_samples(const std::vector<Vec>& queries,
                                               const Matrix& meta_keys, int capacity) {
    std::size_t n = queries.size();
    if (n == 0) return {};
    std::size_t m = meta_keys.rows;
    std::size_t quota =
        static_cast<std::size_t>((capacity + static_cast<int>(m) - 1) / static_cast<int>(m));

    // best distance per candidate sample, over the keys that selected it
    std::vector<double> best(n, -1.0);
    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t j = 0; j < m; ++j) {
        const double* key = meta_keys.row(j);
        for (std::size_t i = 0; i < n; ++i)
            order[i] = {cosine_distance(queries[i].data(), key, queries[i].size()), i};
        std::sort(order.begin(), order.end());  // distance, then sample index
        std::size_t take = std::min(quota, n);
        for (std::size_t r = 0; r < take; ++r) {
            auto [d, i] = order[r];
            if (best[i] < 0.0 || d < best[i]) best[i] = d;
        }
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < n; ++i)
        if (best[i] >= 0.0) ranked.emplace_back(best[i], i);
    std::sort(ranked.begin(), ranked.end());
    if (ranked.size() > static_cast<std::size_t>(capacity))
        ranked.resize(static_cast<std::size_t>(capacity));
    std::vector<std::size_t> out;
    for (auto& [d, i] : ranked) out.push_back(i);
    return out;
}

double fit_boundary(const std::vector<double>& distances, double lr, int steps) {
    if (distances.empty()) throw RuntimeFault("fit_boundary: no distances");
    double mean = 0.0;
    for (double d : distances) mean += d;
    mean /= static_cast<double>(distances.size());
    mean = std::max(mean, 1e-6);
    double rho = std::log(std::expm1(mean));  // softplus inverse
    // Mean subgradient with a linearly decayed step; the fixed-step iteration
    // on this piecewise-linear objective would oscillate forever.
    for (int t = 0; t < steps; ++t) {
        double delta = std::log1p(std::exp(rho));
        double g = 0.0;
        for (double d : distances) g += d > delta ? -1.0 : 1.0;
        g /= static_cast<double>(distances.size());
        double sig = 1.0 / (1.0 + std::exp(-rho));
        double step_lr = lr * (1.0 - static_cast<double>(t) / static_cast<double>(steps));
        rho -= step_lr * g * sig;
    }
    return std::log1p(std::exp(rho));
}

double quantile95(const std::vector<double>& distances) {
    if (distances.empty()) throw RuntimeFault("quantile95: no distances");
    std::vector<double> v = distances;
    std::sort(v.begin(), v.end());
    double h = 0.95 * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

Trainer::Trainer(const RunConfig& cfg, const Vocab& vocab)
    : cfg_(cfg),
      vocab_(vocab),
      encoder_(cfg.encoder_seed, cfg.query_dim),
      pool_(cfg.pool_config(), hash_combine(cfg.seed, 0xB001u)),
      model_(BackboneConfig{vocab.size(), cfg.d_model, cfg.n_heads, cfg.d_ff, cfg.max_seq},
             hash_combine(cfg.seed, 0x0DE1u)),
      data_rng_(hash_combine(cfg.order_seed, 0xDA7Au)),
      sampling_rng_(cfg.resolved_sampling_seed()) {
    cfg_.validate();
    adam_ = AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
}

ComposedPrompt Trainer::compose_for(Format fmt, const TaskChoice& choice,
                                    const std::vector<int>& meta) const {
    return pool_.compose(fmt, choice, meta);
}

void Trainer::apply_step() {
    model_.visit_params([&](Param& p) {
        adamw_step(p, adam_);
        p.zero_grad();
    });
    for (Param* p : pool_.prompt_params()) {
        adamw_step(*p, adam_);
        p->zero_grad();
    }
    for (Param* p : pool_.task_key_params()) {
        adamw_step(*p, adam_);
        p->zero_grad();
    }
    adamw_step(pool_.meta_keys_param(), adam_);
    pool_.meta_keys_param().zero_grad();
    pool_.renormalize_keys();
}

void Trainer::train_task(const TaskDef& task) {
    for (int id : learned_)
        if (id == task.id)
            throw RuntimeFault("task " + std::to_string(task.id) + " already learned");
    if (task.train.empty())
        throw ValidationError("task " + std::to_string(task.id) + " has no training data");
    run_stage(task.id, {&task});
    if (cfg_.baseline != BaselineMode::Finetune && !cfg_.no_memory) update_memory(task);
    learned_.push_back(task.id);
}

void Trainer::train_joint(const std::vector<TaskDef>& tasks) {
    if (!learned_.empty()) throw RuntimeFault("joint training requires a fresh state");
    std::vector<const TaskDef*> ptrs;
    for (const auto& t : tasks) {
        if (t.train.empty())
            throw ValidationError("task " + std::to_string(t.id) + " has no training data");
        ptrs.push_back(&t);
    }
    if (ptrs.empty()) throw ValidationError("joint training needs at least one task");
    run_stage(0, ptrs);
    for (const auto& t : tasks) {
        if (cfg_.baseline != BaselineMode::Finetune && !cfg_.no_memory) update_memory(t);
        learned_.push_back(t.id);
    }
}

void Trainer::run_stage(int stage_task_id, const std::vector<const TaskDef*>& tasks) {
    bool finetune = cfg_.baseline == BaselineMode::Finetune;
    int stage = static_cast<int>(learned_.size()) + 1;

    // Per-stage query caches; memory entries already carry theirs.
    std::vector<std::vector<Vec>> task_queries(tasks.size());
    std::vector<Item> items;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const TaskDef& t = *tasks[ti];
        task_queries[ti].reserve(t.train.size());
        for (const auto& s : t.train) task_queries[ti].push_back(encoder_.encode(s).values);
        if (!finetune) pool_.ensure_task(t.id, task_queries[ti].front());
        for (std::size_t i = 0; i < t.train.size(); ++i) {
            Item it;
            it.sample = &t.train[i];
            it.query = &task_queries[ti][i];
            it.gold = t.id;
            it.ser = serialize_sample(t.train[i], vocab_);
            items.push_back(std::move(it));
        }
    }
    bool replay = !cfg_.no_memory && !finetune;
    if (replay) {
        for (std::size_t i = 0; i < memory_.entries.size(); ++i) {
            Item it;
            it.sample = &memory_.entries[i].sample;
            it.query = &memory_.entries[i].query;
            it.gold = memory_.entries[i].task_id;
            it.from_memory = true;
            it.memory_index = i;
            it.ser = serialize_sample(memory_.entries[i].sample, vocab_);
            items.push_back(std::move(it));
        }
    }

    // Fresh optimizer state per stage; checkpoints at task boundaries stay
    // complete without serializing moments.
    model_.visit_params([](Param& p) { p.reset_optimizer(); });
    pool_.visit_params([](Param& p) { p.reset_optimizer(); });

    CentroidSet centroids;
    if (replay && !memory_.entries.empty() && !cfg_.no_memory_div && !cfg_.no_cluster) {
        int b = 5 * static_cast<int>(learned_.size());
        centroids = cluster_memory(memory_.queries(), b,
                                   hash_combine(cfg_.seed, static_cast<std::uint64_t>(stage)));
    }

    double alpha = cfg_.effective_alpha();
    double beta = cfg_.effective_beta();
    double omega = cfg_.effective_omega();
    bool use_meta_losses = !finetune && pool_.config().use_meta && cfg_.meta_select > 0;

    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::int64_t k = 0;
    std::vector<Vec> memory_query_cache = memory_.queries();

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        data_rng_.shuffle(order);
        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg_.batch)) {
            std::size_t bn = std::min(static_cast<std::size_t>(cfg_.batch), order.size() - pos);
            double scale = 1.0 / static_cast<double>(bn);
            double eps_k = epsilon_schedule(k, alpha, beta);
            StepLog rec;
            rec.stage = stage;
            rec.task_id = stage_task_id;
            rec.step = static_cast<int>(k);
            rec.eps_k = eps_k;

            for (std::size_t bi = 0; bi < bn; ++bi) {
                const Item& it = items[order[pos + bi]];
                Format fmt = it.sample->format;
                TaskChoice choice = TaskChoice::gold(it.gold);
                if (!finetune) {
                    choice = choose_task_prompt(it.gold, fmt, eps_k, omega, pool_, *it.query,
                                                sampling_rng_);
                }
                switch (choice.kind) {
                    case TaskChoiceKind::Gold: ++rec.n_gold; break;
                    case TaskChoiceKind::Inferred: ++rec.n_inferred; break;
                    case TaskChoiceKind::Unseen: ++rec.n_unseen_branch; break;
                }
                auto meta_sel = pool_.select_meta(*it.query);
                ComposedPrompt composed = compose_for(fmt, choice, meta_sel);
                QALoss qa = model_.forward_loss(composed, it.ser.input, it.ser.target, scale);
                if (!std::isfinite(qa.value))
                    throw RuntimeFault("non-finite QA loss at stage " + std::to_string(stage) +
                                       " step " + std::to_string(k));
                rec.qa_loss += qa.value * scale;

                if (!finetune && choice.kind != TaskChoiceKind::Unseen) {
                    Vec key = pool_.task_key(it.gold);
                    const Vec* neg = nullptr;
                    std::optional<std::size_t> neg_idx;
                    if (replay && !cfg_.no_neg_samples && !memory_query_cache.empty()) {
                        neg_idx = mine_negative(memory_query_cache, key);
                        if (neg_idx) {
                            neg = &memory_query_cache[*neg_idx];
                            ++rec.n_negatives;
                        }
                    }
                    LossReport lt = task_key_loss(*it.query, key, neg, it.gold);
                    rec.task_loss += lt.value * scale;
                    Param& kp = pool_.task_key_param(it.gold);
                    const Vec& g = lt.grads.front().second;
                    for (std::size_t d = 0; d < g.size(); ++d) kp.grad.at(0, d) += scale * g[d];
                }

                if (use_meta_losses) {
                    Param& mk = pool_.meta_keys_param();
                    LossReport lm = meta_key_loss(mk.value, meta_sel, *it.query, cfg_.eta,
                                                  cfg_.gamma, !cfg_.no_sample_div);
                    rec.meta_loss += lm.value * scale;
                    for (const auto& [idx, g] : lm.grads)
                        for (std::size_t d = 0; d < g.size(); ++d)
                            mk.grad.at(static_cast<std::size_t>(idx), d) += scale * g[d];
                    if (it.from_memory && !cfg_.no_memory_div) {
                        const Vec& centroid =
                            cfg_.no_cluster
                                ? *it.query
                                : centroids.centroids[static_cast<std::size_t>(
                                      centroids.assignment[it.memory_index])];
                        LossReport lmm = memory_meta_loss(mk.value, meta_sel, centroid, cfg_.eta);
                        rec.memory_meta_loss += lmm.value * scale;
                        for (const auto& [idx, g] : lmm.grads)
                            for (std::size_t d = 0; d < g.size(); ++d)
                                mk.grad.at(static_cast<std::size_t>(idx), d) += scale * g[d];
                    }
                }
            }
            apply_step();
            log_.push_back(rec);
            ++k;
        }
    }
}

void Trainer::update_memory(const TaskDef& task) {
    std::vector<Vec> queries;
    queries.reserve(task.train.size());
    for (const auto& s : task.train) queries.push_back(encoder_.encode(s).values);
    auto sel = select_memory_samples(queries, pool_.meta_keys_param().value, cfg_.memory_per_task);
    for (std::size_t i : sel)
        memory_.entries.push_back({task.train[i], queries[i], task.id});
}

void Trainer::fit_adb() {
    if (learned_.empty()) throw RuntimeFault("fit_adb: nothing learned");
    if (cfg_.no_memory || cfg_.baseline == BaselineMode::Finetune)
        throw RuntimeFault("fit_adb: requires a memory buffer");
    for (int id : learned_) {
        std::vector<double> dists;
        Vec key = pool_.task_key(id);
        for (const auto& e : memory_.entries)
            if (e.task_id == id) dists.push_back(cosine_distance(e.query, key));
        if (dists.empty())
            throw RuntimeFault("fit_adb: task " + std::to_string(id) + " has no memory samples");
        boundaries_[id] = cfg_.adb_quantile ? quantile95(dists)
                                            : fit_boundary(dists, cfg_.adb_lr, cfg_.adb_steps);
    }
    boundaries_fitted_ = true;
}

std::pair<TaskChoice, PromptSelection> Trainer::detect_and_route(
    const std::string& context, const std::string& question) const {
    if (pool_.task_count() == 0)
        throw RuntimeFault("detect_and_route: no task keys exist yet");
    Vec q = encoder_.encode(context, question).values;
    bool adaptive = boundaries_fitted_ && !cfg_.no_adb;
    bool all_outside = true;
    int best = -1;
    double best_d = 0.0;
    for (int id : pool_.task_ids()) {
        Vec key = pool_.task_key(id);
        double d = cosine_distance(q, key);
        double delta = adaptive ? boundaries_.at(id) : cfg_.fixed_boundary;
        if (d <= delta) all_outside = false;
        if (best < 0 || d < best_d) {
            best = id;
            best_d = d;
        }
    }
    TaskChoice choice = all_outside ? TaskChoice::unseen(infer_format(context, question))
                                    : TaskChoice::inferred(best);
    PromptSelection sel;
    sel.task_choice = choice;
    sel.meta_indices = pool_.select_meta(q, &sel.meta_distances);
    return {choice, sel};
}

std::string Trainer::answer(const std::string& context, const std::string& question) const {
    if (learned_.empty()) throw RuntimeFault("answer: no task learned yet");
    Format fmt = infer_format(context, question);
    ComposedPrompt composed;
    if (cfg_.baseline == BaselineMode::Finetune) {
        composed = pool_.compose(fmt, TaskChoice::gold(0), {});
    } else {
        auto [choice, sel] = detect_and_route(context, question);
        composed = pool_.compose(fmt, choice, sel.meta_indices);
    }
    std::vector<int> input = serialize_input(context, question, vocab_);
    auto out = model_.greedy_decode(composed, input, cfg_.decode_max_len);
    return normalize_ws(vocab_.detokenize(out));
}

void Trainer::restore_memory(std::vector<MemoryEntry> entries) {
    memory_.entries = std::move(entries);
}

void Trainer::restore_boundaries(std::map<int, double> b, bool fitted) {
    boundaries_ = std::move(b);
    boundaries_fitted_ = fitted;
}

void Trainer::restore_learned(std::vector<int> ids) { learned_ = std::move(ids); }

std::pair<std::uint64_t, std::uint64_t> Trainer::rng_counters() const {
    return {data_rng_.counter(), sampling_rng_.counter()};
}

void Trainer::set_rng_counters(std::uint64_t data_counter, std::uint64_t sampling_counter) {
    data_rng_.set_counter(data_counter);
    sampling_rng_.set_counter(sampling_counter);
}

}  // namespace hpqa
