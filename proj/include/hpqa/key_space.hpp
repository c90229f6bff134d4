#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hpqa/tensor.hpp"

namespace hpqa {

// Loss value plus per-key analytic gradients. Keys not involved carry no entry.
struct LossReport {
    double value = 0.0;
    std::vector<std::pair<int, Vec>> grads;  // key id -> dvalue/dkey, ascending id

    const Vec* grad_for(int id) const {
        for (const auto& [k, g] : grads)
            if (k == id) return &g;
        return nullptr;
    }
};

struct CentroidSet {
    std::vector<Vec> centroids;  // unit norm
    std::vector<int> assignment; // sample index -> centroid index
};

// Hardest negative: index of the memory query closest to the task key.
// Empty memory yields nullopt (caller trains the margin-free loss).
std::optional<std::size_t> mine_negative(const std::vector<Vec>& memory_queries,
                                         const Vec& task_key);

// exp(d(q,k) + max(1 - d(neg,k), 0)); margin term dropped when neg is null.
// Gradient is reported for the key only; queries are frozen.
LossReport task_key_loss(const Vec& q, const Vec& key, const Vec* neg_q, int key_id = 0);

// Locality + diversity hinges over the selected meta keys (indices S).
// pair_term=false drops the pairwise diversity sum (ablation switch).
LossReport meta_key_loss(const Matrix& meta_keys, const std::vector<int>& S, const Vec& q,
                         double eta, double gamma, bool pair_term = true);

// Memory-centroid diversity hinge over the selected meta keys.
LossReport memory_meta_loss(const Matrix& meta_keys, const std::vector<int>& S,
                            const Vec& centroid, double eta);

// k-means++ / Lloyd on cached query vectors; centroids renormalized to the
// unit sphere at convergence and assignments refreshed against them.
CentroidSet cluster_memory(const std::vector<Vec>& queries, int b, std::uint64_t seed);

}  // namespace hpqa
