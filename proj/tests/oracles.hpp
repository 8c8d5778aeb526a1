// Test-only helpers: independent oracle implementations (naive loops,
// brute-force enumeration, MST cuts, BFS flood fill) used to pin down the
// production algorithms, plus fixture generators and a subprocess runner
// for the CLI. Everything here stays deliberately independent of the
// library code paths it checks.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "alts/embedding.hpp"
#include "alts/evaluation.hpp"
#include "alts/rng.hpp"
#include "alts/uncertainty.hpp"

namespace testutil {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Scratch directories
// ---------------------------------------------------------------------------

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        const unsigned id = counter.fetch_add(1);
        path_ = fs::temp_directory_path() /
                ("alts-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(id));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Pooling oracles (naive nested loops)
// ---------------------------------------------------------------------------

inline std::vector<float> oracle_grid_max_pool(const alts::FeatureMap& map,
                                               std::uint32_t grid) {
    const std::uint32_t wh = map.height / grid;
    const std::uint32_t ww = map.width / grid;
    std::vector<float> out(static_cast<std::size_t>(grid) * grid * map.channels);
    for (std::uint32_t oi = 0; oi < grid; ++oi) {
        for (std::uint32_t oj = 0; oj < grid; ++oj) {
            for (std::uint32_t c = 0; c < map.channels; ++c) {
                float best = map.at(oi * wh, oj * ww, c);
                for (std::uint32_t dh = 0; dh < wh; ++dh) {
                    for (std::uint32_t dw = 0; dw < ww; ++dw) {
                        best = std::max(best, map.at(oi * wh + dh, oj * ww + dw, c));
                    }
                }
                out[(static_cast<std::size_t>(oi) * grid + oj) * map.channels + c] =
                    best;
            }
        }
    }
    return out;
}

inline std::vector<double> oracle_global_avg_pool(const alts::FeatureMap& map) {
    std::vector<double> out(map.channels, 0.0);
    for (std::uint32_t c = 0; c < map.channels; ++c) {
        double acc = 0.0;
        for (std::uint32_t h = 0; h < map.height; ++h) {
            for (std::uint32_t w = 0; w < map.width; ++w) {
                acc += map.at(h, w, c);
            }
        }
        out[c] = acc / (static_cast<double>(map.height) * map.width);
    }
    return out;
}

inline std::vector<double> oracle_embed_tile(const alts::FeatureMap& map,
                                             std::uint32_t grid) {
    alts::FeatureMap pooled;
    pooled.height = grid;
    pooled.width = grid;
    pooled.channels = map.channels;
    pooled.values = oracle_grid_max_pool(map, grid);
    return oracle_global_avg_pool(pooled);
}

// ---------------------------------------------------------------------------
// Variance oracle (independent two-pass mean/variance)
// ---------------------------------------------------------------------------

inline std::vector<double> oracle_pixel_variance(const alts::ScoreMapStack& stack) {
    const std::size_t plane = static_cast<std::size_t>(stack.height) * stack.width;
    std::vector<double> var(plane, 0.0);
    for (std::size_t p = 0; p < plane; ++p) {
        double mean = 0.0;
        for (std::uint32_t t = 0; t < stack.depth; ++t) {
            mean += stack.map(t)[p];
        }
        mean /= stack.depth;
        double acc = 0.0;
        for (std::uint32_t t = 0; t < stack.depth; ++t) {
            const double d = stack.map(t)[p] - mean;
            acc += d * d;
        }
        var[p] = acc / stack.depth;
    }
    return var;
}

inline double oracle_mc_score(const alts::ScoreMapStack& stack) {
    const auto var = oracle_pixel_variance(stack);
    double acc = 0.0;
    for (const double v : var) {
        acc += v;
    }
    return acc / static_cast<double>(var.size());
}

// ---------------------------------------------------------------------------
// Distances and subset enumeration
// ---------------------------------------------------------------------------

inline double point_dist(const alts::EmbeddingMatrix& m, std::size_t a, std::size_t b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
        const double d = static_cast<double>(m.values[a * m.cols + c]) -
                         static_cast<double>(m.values[b * m.cols + c]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

template <typename Fn>
void for_each_subset(std::size_t n, std::size_t k, Fn&& fn) {
    std::vector<std::size_t> subset(k);
    std::iota(subset.begin(), subset.end(), std::size_t{0});
    for (;;) {
        fn(subset);
        std::size_t i = k;
        while (i > 0) {
            --i;
            if (subset[i] != i + n - k) {
                ++subset[i];
                for (std::size_t j = i + 1; j < k; ++j) {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
            if (i == 0) {
                return;
            }
        }
        if (k == 0) {
            return;
        }
    }
}

// Exhaustive k-center optimum: centers restricted to the points themselves.
inline double oracle_kcenter_optimal(const alts::EmbeddingMatrix& m, std::size_t k) {
    double best = std::numeric_limits<double>::infinity();
    for_each_subset(m.rows, k, [&](const std::vector<std::size_t>& centers) {
        double radius = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) {
            double nearest = std::numeric_limits<double>::infinity();
            for (const std::size_t c : centers) {
                nearest = std::min(nearest, point_dist(m, i, c));
            }
            radius = std::max(radius, nearest);
        }
        best = std::min(best, radius);
    });
    return best;
}

// Exhaustive robust optimum: for fixed centers the best outlier set is the
// xi farthest points, so only center subsets need enumeration.
inline double oracle_robust_kcenter_optimal(const alts::EmbeddingMatrix& m,
                                            std::size_t k, std::size_t xi) {
    double best = std::numeric_limits<double>::infinity();
    for_each_subset(m.rows, k, [&](const std::vector<std::size_t>& centers) {
        std::vector<double> nearest(m.rows);
        for (std::size_t i = 0; i < m.rows; ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (const std::size_t c : centers) {
                d = std::min(d, point_dist(m, i, c));
            }
            nearest[i] = d;
        }
        std::sort(nearest.begin(), nearest.end(), std::greater<>());
        const double radius = xi < nearest.size() ? nearest[xi] : 0.0;
        best = std::min(best, radius);
    });
    return best;
}

// ---------------------------------------------------------------------------
// Clustering oracles
// ---------------------------------------------------------------------------

// Single linkage equals cutting the k-1 largest edges of a minimum spanning
// tree; Prim over the complete graph, then union-find over the kept edges.
inline std::vector<int> oracle_single_linkage_mst(const alts::EmbeddingMatrix& m,
                                                  std::size_t k) {
    const std::size_t n = m.rows;
    struct Edge {
        std::size_t a, b;
        double w;
    };
    std::vector<Edge> mst;
    std::vector<char> in_tree(n, 0);
    std::vector<double> best_w(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> best_to(n, 0);
    in_tree[0] = 1;
    for (std::size_t i = 1; i < n; ++i) {
        best_w[i] = point_dist(m, 0, i);
        best_to[i] = 0;
    }
    for (std::size_t added = 1; added < n; ++added) {
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_tree[i] && (pick == n || best_w[i] < best_w[pick])) {
                pick = i;
            }
        }
        mst.push_back({pick, best_to[pick], best_w[pick]});
        in_tree[pick] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_tree[i]) {
                const double d = point_dist(m, pick, i);
                if (d < best_w[i]) {
                    best_w[i] = d;
                    best_to[i] = pick;
                }
            }
        }
    }
    std::sort(mst.begin(), mst.end(), [](const Edge& a, const Edge& b) {
        return a.w < b.w;
    });
    // keep the n-k smallest edges
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (std::size_t e = 0; e + (k - 1) < mst.size(); ++e) {
        const std::size_t ra = find(mst[e].a);
        const std::size_t rb = find(mst[e].b);
        if (ra != rb) {
            parent[std::max(ra, rb)] = std::min(ra, rb);
        }
    }
    std::vector<int> labels(n);
    std::map<std::size_t, int> seen;
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t root = find(i);
        auto [it, inserted] = seen.try_emplace(root, next);
        if (inserted) {
            ++next;
        }
        labels[i] = it->second;
    }
    return labels;
}

// Same grouping irrespective of label names.
inline bool partitions_equal(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            if ((a[i] == a[j]) != (b[i] == b[j])) {
                return false;
            }
        }
    }
    return true;
}

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> row, col;
    for (std::size_t i = 0; i < n; ++i) {
        joint[{a[i], b[i]}] += 1.0;
        row[a[i]] += 1.0;
        col[b[i]] += 1.0;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_joint = 0.0, sum_row = 0.0, sum_col = 0.0;
    for (const auto& [key, v] : joint) sum_joint += choose2(v);
    for (const auto& [key, v] : row) sum_row += choose2(v);
    for (const auto& [key, v] : col) sum_col += choose2(v);
    const double total = choose2(static_cast<double>(n));
    const double expected = sum_row * sum_col / total;
    const double max_index = 0.5 * (sum_row + sum_col);
    if (max_index == expected) {
        return 1.0;
    }
    return (sum_joint - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Connected-components oracle (BFS flood fill)
// ---------------------------------------------------------------------------

inline std::vector<std::vector<std::uint32_t>> oracle_flood_fill(
    const alts::BinaryMask& mask, int connectivity) {
    const std::size_t h = mask.height, w = mask.width;
    std::vector<char> visited(h * w, 0);
    std::vector<std::vector<std::uint32_t>> components;
    for (std::size_t start = 0; start < h * w; ++start) {
        if (!mask.values[start] || visited[start]) {
            continue;
        }
        std::vector<std::uint32_t> pixels;
        std::deque<std::size_t> queue{start};
        visited[start] = 1;
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            pixels.push_back(static_cast<std::uint32_t>(p));
            const std::size_t r = p / w, c = p % w;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) {
                        continue;
                    }
                    if (connectivity == 4 && dr != 0 && dc != 0) {
                        continue;
                    }
                    const long rr = static_cast<long>(r) + dr;
                    const long cc = static_cast<long>(c) + dc;
                    if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) ||
                        cc >= static_cast<long>(w)) {
                        continue;
                    }
                    const std::size_t q = static_cast<std::size_t>(rr) * w + cc;
                    if (mask.values[q] && !visited[q]) {
                        visited[q] = 1;
                        queue.push_back(q);
                    }
                }
            }
        }
        std::sort(pixels.begin(), pixels.end());
        components.push_back(std::move(pixels));
    }
    return components;
}

// ---------------------------------------------------------------------------
// The handcrafted two-image evaluation fixture. Image 1 holds a 6px and a
// 4px instance; component A covers exactly half of the first (the boundary
// case), component B the second fully, component C nothing. Image 2 holds
// three instances; one wide component D covers two of them at once and
// component E reaches only 37.5% of the third. Hand-derived confusion:
//   t=0.3: tp=4 fp=2 fn=1 components=5  -> precision 0.6, recall 0.8
//   t=0.6: tp=4 fp=0 fn=1 components=3  -> precision 1.0, recall 0.8
// ---------------------------------------------------------------------------

struct EvalFixture {
    std::vector<alts::ProbMap> maps;
    std::vector<std::vector<alts::GroundTruthInstance>> gts;
};

inline EvalFixture two_image_eval_fixture() {
    auto make_map = []() {
        alts::ProbMap map;
        map.height = 8;
        map.width = 8;
        map.values.assign(64, 0.0f);
        return map;
    };
    auto paint = [](alts::ProbMap& map, std::uint32_t r0, std::uint32_t r1,
                    std::uint32_t c0, std::uint32_t c1, float value) {
        for (std::uint32_t r = r0; r < r1; ++r) {
            for (std::uint32_t c = c0; c < c1; ++c) {
                map.values[r * map.width + c] = value;
            }
        }
    };
    auto label = [](std::vector<float>& gt, std::uint32_t r0, std::uint32_t r1,
                    std::uint32_t c0, std::uint32_t c1, float instance) {
        for (std::uint32_t r = r0; r < r1; ++r) {
            for (std::uint32_t c = c0; c < c1; ++c) {
                gt[r * 8 + c] = instance;
            }
        }
    };

    EvalFixture fx;
    auto map1 = make_map();
    map1.values[0 * 8 + 0] = 0.7f;  // component A: 3px, exactly half of gt1
    map1.values[0 * 8 + 1] = 0.7f;
    map1.values[1 * 8 + 0] = 0.7f;
    paint(map1, 5, 7, 5, 7, 0.65f);  // component B: covers gt2 fully
    map1.values[3 * 8 + 0] = 0.4f;   // component C: covers nothing
    map1.values[3 * 8 + 1] = 0.4f;
    std::vector<float> gt1(64, 0.0f);
    label(gt1, 0, 2, 0, 3, 1.0f);
    label(gt1, 5, 7, 5, 7, 2.0f);

    auto map2 = make_map();
    paint(map2, 0, 2, 0, 5, 0.8f);   // component D spans i1 and i2
    paint(map2, 6, 7, 0, 3, 0.35f);  // component E: 3 of i3's 8 pixels
    std::vector<float> gt2(64, 0.0f);
    label(gt2, 0, 2, 0, 2, 1.0f);
    label(gt2, 0, 2, 3, 5, 2.0f);
    label(gt2, 6, 8, 0, 4, 3.0f);

    fx.maps = {map1, map2};
    fx.gts = {alts::gt_instances_from_labels(gt1, 8, 8),
              alts::gt_instances_from_labels(gt2, 8, 8)};
    return fx;
}

// ---------------------------------------------------------------------------
// Fixture generators
// ---------------------------------------------------------------------------

inline alts::FeatureMap random_feature_map(std::uint32_t h, std::uint32_t w,
                                           std::uint32_t c, std::uint64_t seed,
                                           float lo = 0.0f, float hi = 1.0f) {
    alts::FeatureMap map;
    map.height = h;
    map.width = w;
    map.channels = c;
    map.values.resize(static_cast<std::size_t>(h) * w * c);
    alts::SplitMix64 rng(seed);
    for (auto& v : map.values) {
        v = lo + static_cast<float>(rng.unit()) * (hi - lo);
    }
    return map;
}

inline alts::ScoreMapStack random_stack(std::uint32_t t, std::uint32_t h,
                                        std::uint32_t w, std::uint64_t seed) {
    alts::ScoreMapStack stack;
    stack.depth = t;
    stack.height = h;
    stack.width = w;
    stack.values.resize(static_cast<std::size_t>(t) * h * w);
    alts::SplitMix64 rng(seed);
    for (auto& v : stack.values) {
        v = static_cast<float>(rng.unit());
    }
    return stack;
}

inline alts::EmbeddingMatrix random_points(std::size_t n, std::size_t dims,
                                           std::uint64_t seed, float scale = 1.0f) {
    alts::EmbeddingMatrix m;
    m.rows = n;
    m.cols = dims;
    m.values.resize(n * dims);
    alts::SplitMix64 rng(seed);
    for (auto& v : m.values) {
        v = static_cast<float>(rng.unit()) * scale;
    }
    return m;
}

// Well-separated Gaussian blobs: centers at least `separation` apart, unit
// within-blob standard deviation.
struct Blobs {
    alts::EmbeddingMatrix points;
    std::vector<int> labels;
};

inline Blobs make_blobs(std::size_t n_blobs, std::size_t per_blob, std::size_t dims,
                        double separation, std::uint64_t seed) {
    alts::SplitMix64 rng(seed);
    std::vector<std::vector<double>> centers;
    while (centers.size() < n_blobs) {
        std::vector<double> cand(dims);
        for (auto& v : cand) {
            v = rng.gaussian() * separation * 2.0;
        }
        bool ok = true;
        for (const auto& prev : centers) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < dims; ++d) {
                d2 += (cand[d] - prev[d]) * (cand[d] - prev[d]);
            }
            if (std::sqrt(d2) < separation) {
                ok = false;
                break;
            }
        }
        if (ok) {
            centers.push_back(std::move(cand));
        }
    }
    Blobs blobs;
    blobs.points.rows = n_blobs * per_blob;
    blobs.points.cols = dims;
    blobs.points.values.resize(blobs.points.rows * dims);
    blobs.labels.resize(blobs.points.rows);
    std::size_t row = 0;
    for (std::size_t b = 0; b < n_blobs; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i, ++row) {
            blobs.labels[row] = static_cast<int>(b);
            for (std::size_t d = 0; d < dims; ++d) {
                blobs.points.values[row * dims + d] =
                    static_cast<float>(centers[b][d] + rng.gaussian());
            }
        }
    }
    return blobs;
}

// ---------------------------------------------------------------------------
// CLI subprocess runner
// ---------------------------------------------------------------------------

#ifdef ALTS_CLI_PATH

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

inline CliResult run_cli(const std::vector<std::string>& args,
                         const TempDir& scratch) {
    const fs::path out_path = scratch / "cli-stdout.txt";
    const fs::path err_path = scratch / "cli-stderr.txt";
    std::string cmd = std::string("'") + ALTS_CLI_PATH + "'";
    for (const auto& a : args) {
        cmd += " '" + a + "'";
    }
    cmd += " > '" + out_path.string() + "' 2> '" + err_path.string() + "'";
    const int status = std::system(cmd.c_str());
    CliResult result;
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = read_file_bytes(out_path);
    result.err = read_file_bytes(err_path);
    return result;
}

#endif  // ALTS_CLI_PATH

}  // namespace testutil
