#pragma once

#include <map>
#include <string>
#include <vector>

#include "hpqa/stream.hpp"
#include "hpqa/tensor.hpp"
#include "hpqa/trainer.hpp"

namespace hpqa {

// R[i][j]: score on column-task j after learning stage i. Seen columns follow
// the curriculum (stage) order, unseen columns trail in id order. Scores are
// fractions in [0,1]; reports render them x100.
struct PerformanceMatrix {
    int n_seen = 0;
    int n_unseen = 0;
    std::vector<std::string> task_names;        // per column
    std::vector<std::vector<double>> rows;      // one row per completed stage
};

// Exact match on the test split (option accuracy for multi-choice, which is
// the same string comparison after whitespace normalization).
double eval_task(const Trainer& trainer, const TaskDef& task);

// (A_N, A_N'); A_N' is NaN when the matrix has no unseen columns.
std::pair<double, double> avg_performance(const PerformanceMatrix& r);

// Average forgetting, max taken over all earlier stages as written.
double avg_forget(const PerformanceMatrix& r);

double diversity(const Matrix& meta_keys, const std::vector<Vec>& memory_queries, int z);
double locality(const Matrix& meta_keys, const std::vector<Vec>& memory_queries, int z);

struct DetectionReport {
    bool open_world = false;
    int total = 0;
    int correct = 0;
    double accuracy = 0.0;
    double seen_macro_f1 = 0.0;
    double unseen_f1 = 0.0;  // meaningful in open world only
    std::map<std::pair<int, int>, int> confusion;  // (gold, predicted), 0 = unseen class
};

// gold class: task id for seen-task samples, 0 for unseen-task samples.
// Closed world restricts routing to argmin over task keys and drops
// unseen-labeled samples from the evaluation set.
DetectionReport detection_report(const Trainer& trainer,
                                 const std::vector<std::pair<const Sample*, int>>& labeled,
                                 bool open_world);

std::string matrix_to_csv(const PerformanceMatrix& r);
PerformanceMatrix matrix_from_csv(const std::string& text);

}  // namespace hpqa
