// Budget-constrained selection strategies over a candidate pool: top-k
// uncertainty, greedy and robust k-center in embedding space, the naive and
// clustering hybrids, and a seeded random baseline. Every strategy returns
// exactly k distinct tile ids in its selection order and is deterministic
// given (pool, k, seed).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "alts/clustering.hpp"
#include "alts/common.hpp"
#include "alts/embedding.hpp"
#include "alts/parallel.hpp"
#include "alts/rng.hpp"
#include "alts/tensor_store.hpp"

namespace alts {

// Candidate pool after pre-selection. Anchors are already-labeled points the
// k-center strategies must cover jointly with new picks; they may be empty.
struct Pool {
    std::vector<std::string> ids;
    EmbeddingMatrix embeddings;       // N x C, aligned with ids (may be empty)
    std::vector<double> scores;       // per-id uncertainty, aligned (may be empty)
    std::vector<std::string> anchor_ids;
    EmbeddingMatrix anchor_embeddings;

    std::size_t size() const { return ids.size(); }
};

struct CoverRadius {
    double value = 0.0;
};

struct KCenterResult {
    SelectionManifest manifest;
    CoverRadius radius;
};

struct RobustKCenterResult {
    SelectionManifest manifest;
    double radius = 0.0;              // max candidate distance to nearest center
    double non_outlier_radius = 0.0;  // same, excluding the outlier budget
    std::vector<std::string> outlier_ids;
};

namespace detail {

inline void validate_pool(const Pool& pool, bool need_embeddings, bool need_scores,
                          const std::string& where) {
    const std::size_t n = pool.ids.size();
    if (n == 0) {
        throw precondition_error(where + ": empty pool");
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : pool.ids) {
        if (!seen.insert(id).second) {
            throw precondition_error(where + ": duplicate tile_id \"" + id + "\"");
        }
    }
    for (const auto& id : pool.anchor_ids) {
        if (seen.count(id)) {
            throw precondition_error(where + ": anchor id \"" + id +
                                     "\" also appears as a candidate");
        }
    }
    if (pool.anchor_ids.size() != pool.anchor_embeddings.rows) {
        throw precondition_error(where + ": anchor ids/embeddings misaligned");
    }
    if (need_embeddings) {
        if (pool.embeddings.rows != n || pool.embeddings.cols == 0 ||
            pool.embeddings.values.size() != n * pool.embeddings.cols) {
            throw precondition_error(where + ": pool embeddings missing or misaligned");
        }
        require_finite(pool.embeddings.values, where);
        if (!pool.anchor_ids.empty()) {
            if (pool.anchor_embeddings.cols != pool.embeddings.cols ||
                pool.anchor_embeddings.values.size() !=
                    pool.anchor_embeddings.rows * pool.anchor_embeddings.cols) {
                throw precondition_error(where + ": anchor embeddings misaligned");
            }
            require_finite(pool.anchor_embeddings.values, where);
        }
    }
    if (need_scores) {
        if (pool.scores.size() != n) {
            throw precondition_error(where + ": pool scores missing or misaligned");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(pool.scores[i])) {
                throw precondition_error(where + ": non-finite score for tile \"" +
                                         pool.ids[i] + "\"");
            }
        }
    }
}

inline void check_budget(std::size_t k, std::size_t n, const std::string& where) {
    if (k < 1 || k > n) {
        throw precondition_error(where + ": budget " + std::to_string(k) +
                                 " out of range [1," + std::to_string(n) + "]");
    }
}

// Indices 0..n-1 ordered by (score desc, id asc).
inline std::vector<std::size_t> order_by_score(const Pool& pool) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (pool.scores[a] != pool.scores[b]) {
            return pool.scores[a] > pool.scores[b];
        }
        return pool.ids[a] < pool.ids[b];
    });
    return idx;
}

// Squared distance from every candidate to its nearest anchor; +inf without
// anchors.
inline std::vector<double> anchor_distances(const Pool& pool, unsigned threads) {
    std::vector<double> dist(pool.size(), std::numeric_limits<double>::infinity());
    if (pool.anchor_ids.empty()) {
        return dist;
    }
    parallel_for(pool.size(), threads, [&](std::size_t i) {
        const auto row = pool.embeddings.row(i);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < pool.anchor_embeddings.rows; ++a) {
            const double d = squared_l2(row, pool.anchor_embeddings.row(a));
            if (d < best) {
                best = d;
            }
        }
        dist[i] = best;
    });
    return dist;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Top-k uncertainty
// ---------------------------------------------------------------------------

inline SelectionManifest top_k_uncertain(const Pool& pool, std::size_t k) {
    detail::validate_pool(pool, false, true, "top_k_uncertain");
    detail::check_budget(k, pool.size(), "top_k_uncertain");
    const auto order = detail::order_by_score(pool);

    SelectionManifest m;
    m.strategy = Strategy::mc_dropout;
    m.budget = k;
    m.selected.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        m.selected.push_back({pool.ids[order[i]], pool.scores[order[i]]});
    }
    return m;
}

// ---------------------------------------------------------------------------
// Greedy k-center (farthest-first traversal)
// ---------------------------------------------------------------------------

inline KCenterResult kcenter_greedy(const Pool& pool, std::size_t k,
                                    unsigned threads = 0) {
    detail::validate_pool(pool, true, false, "kcenter_greedy");
    detail::check_budget(k, pool.size(), "kcenter_greedy");
    const std::size_t n = pool.size();

    std::vector<double> dist2 = detail::anchor_distances(pool, threads);
    std::vector<char> selected(n, 0);

    auto farthest = [&]() {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (selected[i]) {
                continue;
            }
            if (best == n || dist2[i] > dist2[best] ||
                (dist2[i] == dist2[best] && pool.ids[i] < pool.ids[best])) {
                best = i;
            }
        }
        return best;
    };
    auto absorb_center = [&](std::size_t c) {
        const auto row = pool.embeddings.row(c);
        parallel_for(n, threads, [&](std::size_t i) {
            const double d = detail::squared_l2(pool.embeddings.row(i), row);
            if (d < dist2[i]) {
                dist2[i] = d;
            }
        });
    };

    KCenterResult result;
    result.manifest.strategy = Strategy::coreset;
    result.manifest.budget = k;
    result.manifest.selected.reserve(k);

    std::size_t first;
    std::optional<double> first_score;
    if (pool.anchor_ids.empty()) {
        // No reference set: the deterministic first pick is the smallest id.
        first = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (pool.ids[i] < pool.ids[first]) {
                first = i;
            }
        }
    } else {
        first = farthest();
        first_score = std::sqrt(dist2[first]);
    }
    selected[first] = 1;
    result.manifest.selected.push_back({pool.ids[first], first_score});
    absorb_center(first);

    for (std::size_t step = 1; step < k; ++step) {
        const std::size_t pick = farthest();
        selected[pick] = 1;
        result.manifest.selected.push_back({pool.ids[pick], std::sqrt(dist2[pick])});
        absorb_center(pick);
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (dist2[i] > worst) {
            worst = dist2[i];
        }
    }
    result.radius.value = std::sqrt(worst);
    return result;
}

// ---------------------------------------------------------------------------
// Robust k-center (binary search over realized distances + greedy covering
// that tolerates up to `outlier_budget` uncovered candidates)
// ---------------------------------------------------------------------------

inline std::size_t default_outlier_budget(std::size_t n) {
    return fraction_count(0.01, n);
}

inline RobustKCenterResult robust_kcenter(const Pool& pool, std::size_t k,
                                          std::size_t outlier_budget,
                                          unsigned max_iterations = 64,
                                          unsigned threads = 0) {
    detail::validate_pool(pool, true, false, "robust_kcenter");
    detail::check_budget(k, pool.size(), "robust_kcenter");
    const std::size_t n = pool.size();
    if (n > 50000) {
        throw precondition_error("robust_kcenter: pool too large for O(N^2) search");
    }

    const KCenterResult greedy = kcenter_greedy(pool, k, threads);

    // Pairwise candidate distances, plus each candidate's nearest anchor.
    std::vector<double> dmat(n * n, 0.0);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto ri = pool.embeddings.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = std::sqrt(detail::squared_l2(ri, pool.embeddings.row(j)));
            dmat[i * n + j] = d;
            dmat[j * n + i] = d;
        }
    });
    std::vector<double> anchor_dist(n, std::numeric_limits<double>::infinity());
    {
        const auto a2 = detail::anchor_distances(pool, threads);
        for (std::size_t i = 0; i < n; ++i) {
            anchor_dist[i] = std::sqrt(a2[i]);
        }
    }

    std::vector<double> realized;
    realized.reserve(n * (n - 1) / 2 + (pool.anchor_ids.empty() ? 0 : n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            realized.push_back(dmat[i * n + j]);
        }
        if (!pool.anchor_ids.empty()) {
            realized.push_back(anchor_dist[i]);
        }
    }
    std::sort(realized.begin(), realized.end());
    realized.erase(std::unique(realized.begin(), realized.end()), realized.end());

    // Greedy covering feasibility at radius r: repeatedly open the candidate
    // whose r-ball covers the most uncovered candidates (ties by id), mark
    // everything within 2r covered, stop at k centers.
    auto try_cover = [&](double r) -> std::optional<std::vector<std::size_t>> {
        std::vector<char> covered(n, 0);
        std::size_t uncovered = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (anchor_dist[i] <= 2.0 * r) {
                covered[i] = 1;
            } else {
                ++uncovered;
            }
        }
        std::vector<std::size_t> centers;
        while (centers.size() < k && uncovered > 0) {
            std::size_t best = n;
            std::size_t best_count = 0;
            for (std::size_t c = 0; c < n; ++c) {
                std::size_t count = 0;
                const double* row = dmat.data() + c * n;
                for (std::size_t j = 0; j < n; ++j) {
                    if (!covered[j] && row[j] <= r) {
                        ++count;
                    }
                }
                if (count > best_count ||
                    (count == best_count && count > 0 &&
                     (best == n || pool.ids[c] < pool.ids[best]))) {
                    best_count = count;
                    best = c;
                }
            }
            centers.push_back(best);
            const double* row = dmat.data() + best * n;
            for (std::size_t j = 0; j < n; ++j) {
                if (!covered[j] && row[j] <= 2.0 * r) {
                    covered[j] = 1;
                    --uncovered;
                }
            }
        }
        if (uncovered <= outlier_budget) {
            return centers;
        }
        return std::nullopt;
    };

    std::vector<std::size_t> centers;
    if (realized.empty()) {
        // Single candidate (and no anchors): it is its own center.
        centers.push_back(0);
    } else {
        std::size_t lo = 0, hi = realized.size() - 1;
        for (unsigned iter = 0; lo < hi && iter < max_iterations; ++iter) {
            const std::size_t mid = lo + (hi - lo) / 2;
            if (try_cover(realized[mid]).has_value()) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        auto found = try_cover(realized[hi]);
        if (!found.has_value()) {
            // Unreachable: the largest realized distance always covers.
            found = try_cover(realized.back());
        }
        centers = std::move(*found);
    }

    // Pad to exactly k centers by farthest-first from the result.
    auto nearest_center_dist = [&](const std::vector<std::size_t>& cs,
                                   std::size_t i) {
        double best = anchor_dist[i];
        for (const std::size_t c : cs) {
            const double d = dmat[c * n + i];
            if (d < best) {
                best = d;
            }
        }
        return best;
    };
    std::vector<char> in_centers(n, 0);
    for (const std::size_t c : centers) {
        in_centers[c] = 1;
    }
    while (centers.size() < k) {
        std::size_t pick = n;
        double pick_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (in_centers[i]) {
                continue;
            }
            const double d = nearest_center_dist(centers, i);
            if (pick == n || d > pick_d ||
                (d == pick_d && pool.ids[i] < pool.ids[pick])) {
                pick = i;
                pick_d = d;
            }
        }
        centers.push_back(pick);
        in_centers[pick] = 1;
    }

    auto evaluate = [&](const std::vector<std::size_t>& cs) {
        std::vector<std::pair<double, std::size_t>> dists(n);
        for (std::size_t i = 0; i < n; ++i) {
            dists[i] = {nearest_center_dist(cs, i), i};
        }
        std::sort(dists.begin(), dists.end(),
                  [&](const auto& a, const auto& b) {
                      if (a.first != b.first) {
                          return a.first > b.first;
                      }
                      return pool.ids[a.second] < pool.ids[b.second];
                  });
        struct Eval {
            double radius;
            double non_outlier_radius;
            std::vector<std::size_t> outliers;
        } ev;
        ev.radius = dists.empty() ? 0.0 : dists.front().first;
        const std::size_t skip = std::min(outlier_budget, n);
        ev.non_outlier_radius = skip < n ? dists[skip].first : 0.0;
        for (std::size_t i = 0; i < skip; ++i) {
            ev.outliers.push_back(dists[i].second);
        }
        return ev;
    };

    std::vector<std::size_t> greedy_centers;
    {
        std::unordered_map<std::string, std::size_t> index_of;
        for (std::size_t i = 0; i < n; ++i) {
            index_of[pool.ids[i]] = i;
        }
        for (const auto& e : greedy.manifest.selected) {
            greedy_centers.push_back(index_of[e.tile_id]);
        }
    }

    const auto searched_eval = evaluate(centers);
    const auto greedy_eval = evaluate(greedy_centers);
    const bool use_searched =
        searched_eval.non_outlier_radius <= greedy_eval.non_outlier_radius;
    const auto& chosen = use_searched ? centers : greedy_centers;
    const auto& chosen_eval = use_searched ? searched_eval : greedy_eval;

    RobustKCenterResult result;
    result.manifest.strategy = Strategy::robust_coreset;
    result.manifest.budget = k;
    result.manifest.selected.reserve(k);
    for (const std::size_t c : chosen) {
        result.manifest.selected.push_back({pool.ids[c], std::nullopt});
    }
    result.radius = chosen_eval.radius;
    result.non_outlier_radius = chosen_eval.non_outlier_radius;
    for (const std::size_t o : chosen_eval.outliers) {
        result.outlier_ids.push_back(pool.ids[o]);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Hybrids
// ---------------------------------------------------------------------------

// Core-Set first with ceil(k/2) picks, then top uncertainty on the reduced
// pool for the remaining floor(k/2).
inline SelectionManifest hybrid_naive(const Pool& pool, std::size_t k,
                                      unsigned threads = 0) {
    detail::validate_pool(pool, true, true, "hybrid_naive");
    detail::check_budget(k, pool.size(), "hybrid_naive");

    const std::size_t k_coreset = (k + 1) / 2;
    const KCenterResult coreset = kcenter_greedy(pool, k_coreset, threads);

    SelectionManifest m;
    m.strategy = Strategy::hybrid_naive;
    m.budget = k;
    m.selected = coreset.manifest.selected;

    const std::size_t k_uncertain = k - k_coreset;
    if (k_uncertain > 0) {
        std::unordered_set<std::string> taken;
        for (const auto& e : m.selected) {
            taken.insert(e.tile_id);
        }
        Pool reduced;
        reduced.embeddings.cols = pool.embeddings.cols;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (taken.count(pool.ids[i])) {
                continue;
            }
            reduced.ids.push_back(pool.ids[i]);
            reduced.scores.push_back(pool.scores[i]);
        }
        const SelectionManifest rest = top_k_uncertain(reduced, k_uncertain);
        m.selected.insert(m.selected.end(), rest.selected.begin(), rest.selected.end());
    }
    return m;
}

// Cluster the pool into k groups, take the most uncertain tile of each
// group; output ordered by cluster label.
inline SelectionManifest hybrid_clustering(const Pool& pool, std::size_t k,
                                           Linkage linkage = Linkage::ward,
                                           unsigned threads = 0) {
    detail::validate_pool(pool, true, true, "hybrid_clustering");
    detail::check_budget(k, pool.size(), "hybrid_clustering");

    const ClusterAssignment clusters =
        agglomerative_cluster(pool.embeddings, k, linkage, threads);

    const std::size_t none = pool.size();
    std::vector<std::size_t> best(k, none);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto c = static_cast<std::size_t>(clusters.labels[i]);
        if (best[c] == none || pool.scores[i] > pool.scores[best[c]] ||
            (pool.scores[i] == pool.scores[best[c]] &&
             pool.ids[i] < pool.ids[best[c]])) {
            best[c] = i;
        }
    }

    SelectionManifest m;
    m.strategy = Strategy::hybrid_clustering;
    m.budget = k;
    m.selected.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        m.selected.push_back({pool.ids[best[c]], pool.scores[best[c]]});
    }
    return m;
}

// ---------------------------------------------------------------------------
// Random baseline
// ---------------------------------------------------------------------------

inline SelectionManifest random_select(const Pool& pool, std::size_t k,
                                       std::uint64_t seed) {
    detail::validate_pool(pool, false, false, "random_select");
    detail::check_budget(k, pool.size(), "random_select");

    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    SplitMix64 rng(seed);
    partial_shuffle(idx, k, rng);

    SelectionManifest m;
    m.strategy = Strategy::random;
    m.budget = k;
    m.seed = seed;
    m.selected.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        m.selected.push_back({pool.ids[idx[i]], std::nullopt});
    }
    return m;
}

}  // namespace alts
