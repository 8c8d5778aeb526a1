// Agglomerative hierarchical clustering over embeddings in L2 space.
// Bottom-up merging via the Lance-Williams recurrence with a cached row
// minimum per active cluster; O(N^2) memory, near-O(N^2) time on typical
// data. Merge ties break on the smallest (row, col) index pair, so results
// are reproducible across platforms.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "alts/common.hpp"
#include "alts/embedding.hpp"
#include "alts/parallel.hpp"

namespace alts {

enum class Linkage { ward, complete, average, single };

inline const char* to_string(Linkage l) {
    switch (l) {
        case Linkage::ward: return "ward";
        case Linkage::complete: return "complete";
        case Linkage::average: return "average";
        case Linkage::single: return "single";
    }
    return "?";
}

inline Linkage linkage_from_string(const std::string& s) {
    for (const Linkage v :
         {Linkage::ward, Linkage::complete, Linkage::average, Linkage::single}) {
        if (s == to_string(v)) {
            return v;
        }
    }
    throw precondition_error("unknown linkage \"" + s + "\"");
}

struct ClusterAssignment {
    std::vector<int> labels;  // one label in [0, k) per input row
    int k = 0;
    Linkage linkage = Linkage::ward;
};

namespace detail {

inline double squared_l2(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double d = static_cast<double>(a[c]) - static_cast<double>(b[c]);
        acc += d * d;
    }
    return acc;
}

// For ward the matrix holds squared cluster distances maintained by the
// Lance-Williams update (minimizing them minimizes the within-cluster
// sum-of-squares increment); for the other linkages it holds plain L2.
class MergeMatrix {
public:
    MergeMatrix(const EmbeddingMatrix& emb, bool squared, unsigned threads)
        : n_(emb.rows), d_(emb.rows * emb.rows, 0.0) {
        parallel_for(n_, threads, [&](std::size_t i) {
            const auto ri = emb.row(i);
            for (std::size_t j = i + 1; j < n_; ++j) {
                double d = squared_l2(ri, emb.row(j));
                if (!squared) {
                    d = std::sqrt(d);
                }
                d_[i * n_ + j] = d;
                d_[j * n_ + i] = d;
            }
        });
    }

    double at(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        d_[i * n_ + j] = v;
        d_[j * n_ + i] = v;
    }

private:
    std::size_t n_;
    std::vector<double> d_;
};

}  // namespace detail

// JSON lines of {"tile_id", "cluster"}, aligned with the assignment.
inline void write_cluster_labels(const std::vector<std::string>& ids,
                                 const ClusterAssignment& assignment,
                                 const std::filesystem::path& path) {
    if (ids.size() != assignment.labels.size()) {
        throw precondition_error("write_cluster_labels: ids/labels misaligned");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        nlohmann::ordered_json j;
        j["tile_id"] = ids[i];
        j["cluster"] = assignment.labels[i];
        out << j.dump() << '\n';
    }
    out.flush();
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

inline ClusterAssignment agglomerative_cluster(const EmbeddingMatrix& emb,
                                               std::size_t k,
                                               Linkage linkage = Linkage::ward,
                                               unsigned threads = 0) {
    const std::size_t n = emb.rows;
    if (n == 0 || emb.cols == 0) {
        throw precondition_error("agglomerative_cluster: empty embedding matrix");
    }
    if (emb.values.size() != n * emb.cols) {
        throw precondition_error("agglomerative_cluster: matrix buffer mismatch");
    }
    if (k < 1 || k > n) {
        throw precondition_error("agglomerative_cluster: k=" + std::to_string(k) +
                                 " out of range [1," + std::to_string(n) + "]");
    }
    if (n > 50000) {
        throw precondition_error(
            "agglomerative_cluster: pool too large for O(N^2) clustering");
    }
    detail::require_finite(emb.values, "agglomerative_cluster");

    ClusterAssignment result;
    result.k = static_cast<int>(k);
    result.linkage = linkage;
    result.labels.resize(n);
    if (k == n) {
        for (std::size_t i = 0; i < n; ++i) {
            result.labels[i] = static_cast<int>(i);
        }
        return result;
    }

    detail::MergeMatrix dist(emb, linkage == Linkage::ward, threads);

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<char> active(n, 1);
    std::vector<std::size_t> size(n, 1);
    std::vector<std::uint32_t> slot(n);
    for (std::size_t i = 0; i < n; ++i) {
        slot[i] = static_cast<std::uint32_t>(i);
    }

    // Cached minimum per active row: value and the smallest index attaining it.
    std::vector<double> min_val(n, inf);
    std::vector<std::uint32_t> min_idx(n, 0);
    auto refresh_row = [&](std::size_t i) {
        double best = inf;
        std::uint32_t best_j = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !active[j]) {
                continue;
            }
            const double d = dist.at(i, j);
            if (d < best) {
                best = d;
                best_j = static_cast<std::uint32_t>(j);
            }
        }
        min_val[i] = best;
        min_idx[i] = best_j;
    };
    for (std::size_t i = 0; i < n; ++i) {
        refresh_row(i);
    }

    for (std::size_t merges = n - k; merges > 0; --merges) {
        // Global best pair: smallest distance, ties by (min index, max index).
        double best = inf;
        std::size_t best_a = 0, best_b = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) {
                continue;
            }
            const double v = min_val[i];
            const std::size_t j = min_idx[i];
            const std::size_t a = i < j ? i : j;
            const std::size_t b = i < j ? j : i;
            if (v < best || (v == best && (a < best_a || (a == best_a && b < best_b)))) {
                best = v;
                best_a = a;
                best_b = b;
            }
        }

        const std::size_t a = best_a, b = best_b;
        const double d_ab = dist.at(a, b);
        const double sa = static_cast<double>(size[a]);
        const double sb = static_cast<double>(size[b]);
        for (std::size_t j = 0; j < n; ++j) {
            if (!active[j] || j == a || j == b) {
                continue;
            }
            const double d_aj = dist.at(a, j);
            const double d_bj = dist.at(b, j);
            double nd = 0.0;
            switch (linkage) {
                case Linkage::single:
                    nd = d_aj < d_bj ? d_aj : d_bj;
                    break;
                case Linkage::complete:
                    nd = d_aj > d_bj ? d_aj : d_bj;
                    break;
                case Linkage::average:
                    nd = (sa * d_aj + sb * d_bj) / (sa + sb);
                    break;
                case Linkage::ward: {
                    const double sj = static_cast<double>(size[j]);
                    nd = ((sa + sj) * d_aj + (sb + sj) * d_bj - sj * d_ab) /
                         (sa + sb + sj);
                    break;
                }
            }
            dist.set(a, j, nd);
        }
        size[a] += size[b];
        active[b] = 0;
        for (std::size_t p = 0; p < n; ++p) {
            if (slot[p] == b) {
                slot[p] = static_cast<std::uint32_t>(a);
            }
        }

        refresh_row(a);
        for (std::size_t j = 0; j < n; ++j) {
            if (!active[j] || j == a) {
                continue;
            }
            if (min_idx[j] == a || min_idx[j] == b) {
                refresh_row(j);
            } else {
                const double d = dist.at(j, a);
                if (d < min_val[j] ||
                    (d == min_val[j] && a < static_cast<std::size_t>(min_idx[j]))) {
                    min_val[j] = d;
                    min_idx[j] = static_cast<std::uint32_t>(a);
                }
            }
        }
    }

    // Labels in first-occurrence order scanning rows 0..N-1.
    std::unordered_map<std::uint32_t, int> label_of_slot;
    int next = 0;
    for (std::size_t p = 0; p < n; ++p) {
        auto [it, inserted] = label_of_slot.try_emplace(slot[p], next);
        if (inserted) {
            ++next;
        }
        result.labels[p] = it->second;
    }
    return result;
}

}  // namespace alts
