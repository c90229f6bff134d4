#include "hpqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hpqa/error.hpp"
#include "hpqa/kv.hpp"

namespace hpqa {

double eval_task(const Trainer& trainer, const TaskDef& task) {
    if (task.test.empty())
        throw ValidationError("eval_task: task " + std::to_string(task.id) + " has no test set");
    int correct = 0;
    for (const auto& s : task.test) {
        std::string predicted = trainer.answer(s.context, s.question);
        if (predicted == normalize_ws(s.answer)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(task.test.size());
}

std::pair<double, double> avg_performance(const PerformanceMatrix& r) {
    if (r.rows.empty()) throw ValidationError("avg_performance: empty matrix");
    const auto& last = r.rows.back();
    double a_seen = 0.0;
    for (int j = 0; j < r.n_seen; ++j) a_seen += last[static_cast<std::size_t>(j)];
    a_seen /= static_cast<double>(r.n_seen);
    double a_unseen = std::nan("");
    if (r.n_unseen > 0) {
        a_unseen = 0.0;
        for (int j = 0; j < r.n_unseen; ++j)
            a_unseen += last[static_cast<std::size_t>(r.n_seen + j)];
        a_unseen /= static_cast<double>(r.n_unseen);
    }
    return {a_seen, a_unseen};
}

double avg_forget(const PerformanceMatrix& r) {
    int n = r.n_seen;
    if (n < 2) throw ValidationError("avg_forget: needs at least two seen tasks");
    if (static_cast<int>(r.rows.size()) != n)
        throw ValidationError("avg_forget: matrix incomplete (" + std::to_string(r.rows.size()) +
                              " rows for " + std::to_string(n) + " tasks)");
    double total = 0.0;
    for (int j = 0; j < n - 1; ++j) {
        double best = -1e300;
        for (int i = 0; i < n - 1; ++i)
            best = std::max(best, r.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        total += best - r.rows[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(j)];
    }
    return total / static_cast<double>(n - 1);
}

double diversity(const Matrix& meta_keys, const std::vector<Vec>& memory_queries, int z) {
    std::size_t m = meta_keys.rows;
    if (m < 1) throw ValidationError("diversity: no meta keys");
    if (memory_queries.size() < static_cast<std::size_t>(z))
        throw ValidationError("diversity: memory smaller than Z");
    std::set<std::size_t> covered;
    std::vector<std::pair<double, std::size_t>> order(memory_queries.size());
    for (std::size_t j = 0; j < m; ++j) {
        const double* key = meta_keys.row(j);
        for (std::size_t i = 0; i < memory_queries.size(); ++i)
            order[i] = {cosine_distance(memory_queries[i].data(), key, memory_queries[i].size()),
                        i};
        std::sort(order.begin(), order.end());
        for (int r = 0; r < z; ++r) covered.insert(order[static_cast<std::size_t>(r)].second);
    }
    return static_cast<double>(covered.size()) / (static_cast<double>(z) * static_cast<double>(m));
}

double locality(const Matrix& meta_keys, const std::vector<Vec>& memory_queries, int z) {
    std::size_t m = meta_keys.rows;
    if (m < static_cast<std::size_t>(z)) throw ValidationError("locality: fewer keys than Z");
    if (memory_queries.empty()) throw ValidationError("locality: empty memory");
    double total = 0.0;
    std::vector<std::pair<double, std::size_t>> order(m);
    for (const auto& q : memory_queries) {
        for (std::size_t j = 0; j < m; ++j)
            order[j] = {cosine_distance(q.data(), meta_keys.row(j), q.size()), j};
        std::sort(order.begin(), order.end());
        for (int r = 0; r < z; ++r) total += 1.0 - order[static_cast<std::size_t>(r)].first;
    }
    return total / (static_cast<double>(z) * static_cast<double>(memory_queries.size()));
}

DetectionReport detection_report(const Trainer& trainer,
                                 const std::vector<std::pair<const Sample*, int>>& labeled,
                                 bool open_world) {
    DetectionReport rep;
    rep.open_world = open_world;
    std::set<int> classes;
    for (int id : trainer.pool().task_ids()) classes.insert(id);
    for (const auto& [sample, gold] : labeled) {
        if (!open_world && gold == 0) continue;  // no unseen class in closed world
        int predicted;
        if (open_world) {
            auto [choice, sel] = trainer.detect_and_route(sample->context, sample->question);
            predicted = choice.kind == TaskChoiceKind::Unseen ? 0 : choice.task_id;
        } else {
            Vec q = trainer.encoder().encode(sample->context, sample->question).values;
            predicted = trainer.pool().infer_task(q).first;
        }
        ++rep.confusion[{gold, predicted}];
        ++rep.total;
        if (predicted == gold) ++rep.correct;
    }
    if (rep.total == 0) throw ValidationError("detection_report: empty evaluation set");
    rep.accuracy = static_cast<double>(rep.correct) / static_cast<double>(rep.total);

    auto f1_of = [&](int cls) {
        int tp = 0, fp = 0, fn = 0;
        for (const auto& [gp, count] : rep.confusion) {
            auto [gold, pred] = gp;
            if (gold == cls && pred == cls) tp += count;
            else if (pred == cls) fp += count;
            else if (gold == cls) fn += count;
        }
        int denom = 2 * tp + fp + fn;
        return denom == 0 ? 0.0 : 2.0 * tp / static_cast<double>(denom);
    };
    double sum = 0.0;
    for (int cls : classes) sum += f1_of(cls);
    rep.seen_macro_f1 = classes.empty() ? 0.0 : sum / static_cast<double>(classes.size());
    rep.unseen_f1 = open_world ? f1_of(0) : std::nan("");
    return rep;
}

std::string matrix_to_csv(const PerformanceMatrix& r) {
    std::string out = "stage";
    for (const auto& name : r.task_names) out += "," + name;
    out += "\n";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        out += std::to_string(i + 1);
        for (double v : r.rows[i]) out += "," + format_double(v);
        out += "\n";
    }
    return out;
}

PerformanceMatrix matrix_from_csv(const std::string& text) {
    PerformanceMatrix r;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("matrix csv: empty");
    {
        std::istringstream hdr(line);
        std::string cell;
        bool first = true;
        while (std::getline(hdr, cell, ',')) {
            if (first) {
                first = false;
                continue;
            }
            r.task_names.push_back(cell);
            if (cell.rfind("unseen", 0) == 0) ++r.n_unseen;
            else ++r.n_seen;
        }
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> vals;
        bool first = true;
        while (std::getline(row, cell, ',')) {
            if (first) {
                first = false;
                continue;
            }
            vals.push_back(parse_double("matrix", cell));
        }
        if (vals.size() != r.task_names.size())
            throw ValidationError("matrix csv: ragged row");
        r.rows.push_back(std::move(vals));
    }
    return r;
}

}  // namespace hpqa
