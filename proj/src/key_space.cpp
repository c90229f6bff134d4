#include "hpqa/key_space.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hpqa/error.hpp"
#include "hpqa/rng.hpp"

namespace hpqa {

std::optional<std::size_t> mine_negative(const std::vector<Vec>& memory_queries,
                                         const Vec& task_key) {
    if (memory_queries.empty()) return std::nullopt;
    std::size_t best = 0;
    double best_d = cosine_distance(memory_queries[0], task_key);
    for (std::size_t i = 1; i < memory_queries.size(); ++i) {
        double d = cosine_distance(memory_queries[i], task_key);
        if (d < best_d) {  // strict: ties keep the earliest-inserted sample
            best = i;
            best_d = d;
        }
    }
    return best;
}

static void check_unit(const Vec& v, const char* what) {
    double n = norm2(v);
    if (std::abs(n - 1.0) > 1e-3)
        throw ValidationError(std::string(what) + " must be L2-normalized, got norm " +
                              std::to_string(n));
}

LossReport task_key_loss(const Vec& q, const Vec& key, const Vec* neg_q, int key_id) {
    check_unit(q, "query");
    check_unit(key, "task key");
    if (neg_q) check_unit(*neg_q, "negative query");

    double d_pos = cosine_distance(q, key);
    double inner = d_pos;
    bool margin_active = false;
    double d_neg = 0.0;
    if (neg_q) {
        d_neg = cosine_distance(*neg_q, key);
        if (1.0 - d_neg > 0.0) {
            inner += 1.0 - d_neg;
            margin_active = true;
        }
    }
    LossReport out;
    out.value = std::exp(inner);

    Vec g = cosine_distance_grad_wrt_second(q, key);
    if (margin_active) {
        Vec gn = cosine_distance_grad_wrt_second(*neg_q, key);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gn[i];
    }
    for (auto& v : g) v *= out.value;
    out.grads.emplace_back(key_id, std::move(g));
    return out;
}

LossReport meta_key_loss(const Matrix& meta_keys, const std::vector<int>& S, const Vec& q,
                         double eta, double gamma, bool pair_term) {
    if (eta <= 0.0 || eta >= 1.0 || gamma <= 0.0 || gamma >= 1.0)
        throw ValidationError("meta key loss margins eta, gamma must lie in (0,1)");
    std::size_t dim = meta_keys.cols;
    std::map<int, Vec> grads;
    auto grad_of = [&](int i) -> Vec& {
        auto it = grads.find(i);
        if (it == grads.end()) it = grads.emplace(i, Vec(dim, 0.0)).first;
        return it->second;
    };
    auto key_vec = [&](int i) {
        const double* r = meta_keys.row(static_cast<std::size_t>(i));
        return Vec(r, r + dim);
    };

    LossReport out;
    for (int i : S) {
        Vec k = key_vec(i);
        double d = cosine_distance(q, k);
        if (d - eta > 0.0) {
            out.value += d - eta;
            Vec g = cosine_distance_grad_wrt_second(q, k);
            Vec& acc = grad_of(i);
            for (std::size_t t = 0; t < dim; ++t) acc[t] += g[t];
        }
    }
    if (pair_term && !S.empty()) {
        double mp = static_cast<double>(S.size());
        double scale = 1.0 / (mp * mp);
        for (int i : S) {
            for (int j : S) {
                if (i == j) continue;
                Vec ki = key_vec(i);
                Vec kj = key_vec(j);
                double d = cosine_distance(ki, kj);
                if (gamma - d > 0.0) {
                    out.value += (gamma - d) * scale;
                    Vec gi = cosine_distance_grad_wrt_second(kj, ki);  // d/dk_i of d(k_i,k_j)
                    Vec gj = cosine_distance_grad_wrt_second(ki, kj);
                    Vec& ai = grad_of(i);
                    Vec& aj = grad_of(j);
                    for (std::size_t t = 0; t < dim; ++t) {
                        ai[t] -= scale * gi[t];
                        aj[t] -= scale * gj[t];
                    }
                }
            }
        }
    }
    for (auto& [id, g] : grads) out.grads.emplace_back(id, std::move(g));
    return out;
}

LossReport memory_meta_loss(const Matrix& meta_keys, const std::vector<int>& S,
                            const Vec& centroid, double eta) {
    std::size_t dim = meta_keys.cols;
    LossReport out;
    std::map<int, Vec> grads;
    for (int i : S) {
        const double* r = meta_keys.row(static_cast<std::size_t>(i));
        Vec k(r, r + dim);
        double d = cosine_distance(centroid, k);
        if (d - eta > 0.0) {
            out.value += d - eta;
            Vec g = cosine_distance_grad_wrt_second(centroid, k);
            auto it = grads.find(i);
            if (it == grads.end()) it = grads.emplace(i, Vec(dim, 0.0)).first;
            for (std::size_t t = 0; t < dim; ++t) it->second[t] += g[t];
        }
    }
    for (auto& [id, g] : grads) out.grads.emplace_back(id, std::move(g));
    return out;
}

static double sq_dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

CentroidSet cluster_memory(const std::vector<Vec>& queries, int b, std::uint64_t seed) {
    if (queries.empty()) throw RuntimeFault("cluster_memory: empty memory");
    std::size_t n = queries.size();
    std::size_t k = static_cast<std::size_t>(std::clamp<int>(b, 1, static_cast<int>(n)));
    Rng rng(seed);

    // k-means++ seeding
    std::vector<Vec> centroids;
    centroids.push_back(queries[rng.uniform_int(n)]);
    std::vector<double> d2(n);
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = sq_dist(queries[i], centroids[0]);
            for (std::size_t c = 1; c < centroids.size(); ++c)
                best = std::min(best, sq_dist(queries[i], centroids[c]));
            d2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(n);
        } else {
            double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(queries[pick]);
    }

    std::vector<int> assign(n, 0);
    double prev_inertia = -1.0;
    for (int iter = 0; iter < 50; ++iter) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(queries[i], centroids[0]);
            for (std::size_t c = 1; c < centroids.size(); ++c) {
                double d = sq_dist(queries[i], centroids[c]);
                if (d < best_d) {
                    best = static_cast<int>(c);
                    best_d = d;
                }
            }
            assign[i] = best;
            inertia += best_d;
        }
        std::vector<Vec> sums(k, Vec(queries[0].size(), 0.0));
        std::vector<int> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            Vec& s = sums[static_cast<std::size_t>(assign[i])];
            for (std::size_t t = 0; t < s.size(); ++t) s[t] += queries[i][t];
            ++counts[static_cast<std::size_t>(assign[i])];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // keep previous centroid
            for (std::size_t t = 0; t < sums[c].size(); ++t)
                centroids[c][t] = sums[c][t] / counts[c];
        }
        if (prev_inertia >= 0.0 &&
            std::abs(prev_inertia - inertia) < 1e-6 * std::max(prev_inertia, 1e-12))
            break;
        prev_inertia = inertia;
    }

    CentroidSet out;
    for (auto& c : centroids) {
        if (norm2(c) < 1e-12) c[0] = 1.0;  // degenerate cluster at the origin
        normalize_in_place(c);
        out.centroids.push_back(std::move(c));
    }
    out.assignment.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double best_d = cosine_distance(queries[i], out.centroids[0]);
        for (std::size_t c = 1; c < out.centroids.size(); ++c) {
            double d = cosine_distance(queries[i], out.centroids[c]);
            if (d < best_d) {
                best = static_cast<int>(c);
                best_d = d;
            }
        }
        out.assignment[i] = best;
    }
    return out;
}

}  // namespace hpqa
