// Desk-scale end-to-end active-learning loop on synthetic data. Tiles are
// planted on a seeded Gaussian mixture in embedding space; each tile's
// feature map reproduces its planted embedding through the production
// pooling path, and its score stack realizes a per-pixel variance that
// grows with the tile's distance to the nearest class centroid, so harder
// examples score as more uncertain. A nearest-centroid learner stands in
// for detector retraining: covering the feature-space clusters is what
// drives its accuracy.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "alts/clustering.hpp"
#include "alts/common.hpp"
#include "alts/embedding.hpp"
#include "alts/parallel.hpp"
#include "alts/rng.hpp"
#include "alts/selection.hpp"
#include "alts/tensor_store.hpp"
#include "alts/uncertainty.hpp"

namespace alts {

struct SyntheticPoolConfig {
    std::size_t n_tiles = 2000;
    std::size_t n_classes = 8;
    std::size_t feature_dim = 16;
    std::uint32_t map_height = 32;
    std::uint32_t map_width = 32;
    std::uint32_t stack_depth = 10;
    double noise_scale = 0.05;
    std::vector<double> class_weights;  // empty = uniform; must sum to 1
    std::uint64_t seed = 0;
    // Seed for the class centroids alone; defaults to `seed`. Pools sharing a
    // mixture seed live on the same class structure (pool vs held-out test
    // split) while drawing different tiles.
    std::optional<std::uint64_t> mixture_seed;

    void validate() const {
        if (n_tiles == 0 || n_classes == 0 || feature_dim == 0 || map_height == 0 ||
            map_width == 0) {
            throw precondition_error("pool config: all sizes must be positive");
        }
        if (stack_depth < 2) {
            throw precondition_error("pool config: stack depth must be >= 2");
        }
        if (map_height % 8 != 0 || map_width % 8 != 0) {
            throw precondition_error("pool config: map size must be divisible by 8");
        }
        if (noise_scale < 0.0 || !std::isfinite(noise_scale)) {
            throw precondition_error("pool config: invalid noise scale");
        }
        if (!class_weights.empty()) {
            if (class_weights.size() != n_classes) {
                throw precondition_error("pool config: need one weight per class");
            }
            double sum = 0.0;
            for (const double w : class_weights) {
                if (!(w > 0.0)) {
                    throw precondition_error("pool config: weights must be positive");
                }
                sum += w;
            }
            if (std::abs(sum - 1.0) > 1e-6) {
                throw precondition_error("pool config: weights must sum to 1");
            }
        }
    }
};

class SyntheticPool;

// Gatekeeper for the hidden tile labels: the loop reveals labels only for
// selected tiles, and every reveal is counted so tests can audit that no
// other access path exists.
class LabelLedger {
public:
    int reveal(std::size_t index);
    bool is_revealed(std::size_t index) const { return revealed_[index] != 0; }
    std::size_t reveal_count() const { return count_; }

private:
    friend class SyntheticPool;
    explicit LabelLedger(const SyntheticPool& pool);

    const SyntheticPool* pool_;
    std::vector<char> revealed_;
    std::size_t count_ = 0;
};

class SyntheticPool {
public:
    SyntheticPool(SyntheticPoolConfig config, unsigned threads);

    const SyntheticPoolConfig& config() const { return config_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const EmbeddingMatrix& embeddings() const { return embeddings_; }
    double intensity(std::size_t i) const { return intensity_[i]; }
    double score(std::size_t i) const { return score_[i]; }
    bool positive(std::size_t i) const { return tiles_[i].positive; }
    double centroid_distance(std::size_t i) const { return tiles_[i].distance; }
    std::span<const float> planted_embedding(std::size_t i) const {
        return {planted_.data() + i * config_.feature_dim, config_.feature_dim};
    }

    LabelLedger make_ledger() const { return LabelLedger(*this); }
    // Labels of a held-out evaluation split; not for pool tiles under study.
    std::vector<int> labels_for_evaluation() const { return classes_; }

    std::vector<float> mean_map(std::size_t i) const;
    ScoreMapStack score_stack(std::size_t i) const;
    FeatureMap feature_map(std::size_t i) const;
    std::vector<float> gt_label_map(std::size_t i) const;

private:
    friend class LabelLedger;

    struct Tile {
        std::uint64_t seed = 0;
        bool positive = false;
        std::uint32_t blob_r0 = 0, blob_r1 = 0, blob_c0 = 0, blob_c1 = 0;
        double base_low = 0.0, base_high = 0.0;
        double amplitude = 0.0;
        double distance = 0.0;
    };

    SyntheticPoolConfig config_;
    std::vector<std::string> ids_;
    std::vector<Tile> tiles_;
    std::vector<int> classes_;    // hidden: revealed only through LabelLedger
    std::vector<float> planted_;  // n x C planted embeddings
    EmbeddingMatrix embeddings_;  // produced by the production pooling path
    std::vector<double> intensity_;
    std::vector<double> score_;
};

inline LabelLedger::LabelLedger(const SyntheticPool& pool)
    : pool_(&pool), revealed_(pool.size(), 0) {}

inline int LabelLedger::reveal(std::size_t index) {
    if (index >= pool_->size()) {
        throw precondition_error("label reveal out of range");
    }
    if (!revealed_[index]) {
        revealed_[index] = 1;
        ++count_;
    }
    return pool_->classes_[index];
}

inline SyntheticPool::SyntheticPool(SyntheticPoolConfig config, unsigned threads)
    : config_(std::move(config)) {
    config_.validate();
    const std::size_t n = config_.n_tiles;
    const std::size_t c_dim = config_.feature_dim;
    const std::size_t k = config_.n_classes;

    // Class centroids: seeded Gaussian draws, re-drawn until mutually
    // separated by at least 12 within-class standard deviations (the
    // within-class std is fixed at 1).
    std::vector<std::vector<double>> centroids;
    const std::uint64_t mixture = config_.mixture_seed.value_or(config_.seed);
    double spread = 40.0;
    for (;;) {
        centroids.clear();
        SplitMix64 rng(hash_combine(mixture, 0xCE17A01DULL));
        bool ok = true;
        for (std::size_t cls = 0; cls < k && ok; ++cls) {
            bool placed = false;
            for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
                std::vector<double> cand(c_dim);
                for (auto& v : cand) {
                    v = spread * rng.gaussian();
                }
                double min_d = std::numeric_limits<double>::infinity();
                for (const auto& prev : centroids) {
                    double d2 = 0.0;
                    for (std::size_t d = 0; d < c_dim; ++d) {
                        const double diff = cand[d] - prev[d];
                        d2 += diff * diff;
                    }
                    min_d = std::min(min_d, std::sqrt(d2));
                }
                if (min_d >= 12.0) {
                    centroids.push_back(std::move(cand));
                    placed = true;
                }
            }
            ok = placed;
        }
        if (ok) {
            break;
        }
        spread *= 2.0;
    }

    std::vector<double> cumulative(k);
    {
        double acc = 0.0;
        for (std::size_t cls = 0; cls < k; ++cls) {
            acc += config_.class_weights.empty() ? 1.0 / static_cast<double>(k)
                                                 : config_.class_weights[cls];
            cumulative[cls] = acc;
        }
        cumulative.back() = 1.0;
    }

    ids_.resize(n);
    tiles_.resize(n);
    classes_.resize(n);
    planted_.resize(n * c_dim);

    SplitMix64 master(hash_combine(config_.seed, 0x71735EEDULL));
    for (std::size_t i = 0; i < n; ++i) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "t%06zu", i);
        ids_[i] = buf;

        const double u = master.unit();
        std::size_t cls = 0;
        while (cls + 1 < k && u >= cumulative[cls]) {
            ++cls;
        }
        classes_[i] = static_cast<int>(cls);

        Tile& tile = tiles_[i];
        tile.seed = hash_combine(config_.seed, 0xA1000000ULL + i);
        SplitMix64 rng(tile.seed);
        for (std::size_t d = 0; d < c_dim; ++d) {
            planted_[i * c_dim + d] =
                static_cast<float>(centroids[cls][d] + rng.gaussian());
        }

        double min_d = std::numeric_limits<double>::infinity();
        for (const auto& centroid : centroids) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < c_dim; ++d) {
                const double diff = planted_[i * c_dim + d] - centroid[d];
                d2 += diff * diff;
            }
            min_d = std::min(min_d, std::sqrt(d2));
        }
        tile.distance = min_d;
        tile.amplitude =
            0.1 * min_d / (min_d + std::sqrt(static_cast<double>(c_dim)));

        tile.positive = rng.unit() < 0.55;
        if (tile.positive) {
            const double frac = 0.05 + 0.35 * rng.unit();
            const double area = frac * config_.map_height * config_.map_width;
            const auto bh = static_cast<std::uint32_t>(std::clamp(
                std::round(std::sqrt(area)), 1.0,
                static_cast<double>(config_.map_height)));
            const auto bw = static_cast<std::uint32_t>(std::clamp(
                std::round(area / bh), 1.0, static_cast<double>(config_.map_width)));
            tile.blob_r0 = static_cast<std::uint32_t>(
                rng.bounded(config_.map_height - bh + 1));
            tile.blob_r1 = tile.blob_r0 + bh;
            tile.blob_c0 =
                static_cast<std::uint32_t>(rng.bounded(config_.map_width - bw + 1));
            tile.blob_c1 = tile.blob_c0 + bw;
        }
        tile.base_low = 0.12 + 0.02 * rng.unit();
        tile.base_high = 0.78 + 0.04 * rng.unit();
    }

    // Derived per-tile statistics through the production code paths.
    embeddings_.rows = n;
    embeddings_.cols = c_dim;
    embeddings_.values.resize(n * c_dim);
    intensity_.resize(n);
    score_.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
        intensity_[i] = mean_intensity(mean_map(i));
        const std::vector<float> emb = embed_tile(feature_map(i), 8);
        std::copy(emb.begin(), emb.end(), embeddings_.values.begin() + i * c_dim);
        score_[i] = mc_dropout_score(score_stack(i));
    });
}

inline std::vector<float> SyntheticPool::mean_map(std::size_t i) const {
    const Tile& tile = tiles_[i];
    const std::uint32_t h = config_.map_height, w = config_.map_width;
    std::vector<float> m(static_cast<std::size_t>(h) * w);
    SplitMix64 ripple(hash_combine(tile.seed, 1));
    for (std::uint32_t r = 0; r < h; ++r) {
        for (std::uint32_t c = 0; c < w; ++c) {
            const bool in_blob = tile.positive && r >= tile.blob_r0 &&
                                 r < tile.blob_r1 && c >= tile.blob_c0 &&
                                 c < tile.blob_c1;
            const double base = in_blob ? tile.base_high : tile.base_low;
            m[static_cast<std::size_t>(r) * w + c] =
                static_cast<float>(base + 0.04 * (ripple.unit() - 0.5));
        }
    }
    return m;
}

inline ScoreMapStack SyntheticPool::score_stack(std::size_t i) const {
    const Tile& tile = tiles_[i];
    const std::uint32_t h = config_.map_height, w = config_.map_width;
    const std::uint32_t depth = config_.stack_depth;
    const std::vector<float> m = mean_map(i);

    ScoreMapStack stack;
    stack.depth = depth;
    stack.height = h;
    stack.width = w;
    stack.tile_id = ids_[i];
    stack.values.resize(static_cast<std::size_t>(depth) * h * w);
    SplitMix64 noise(hash_combine(tile.seed, 2));
    const bool noisy = config_.noise_scale > 0.0;
    for (std::uint32_t t = 0; t < depth; ++t) {
        for (std::uint32_t r = 0; r < h; ++r) {
            for (std::uint32_t c = 0; c < w; ++c) {
                const double sign = ((t + r + c) % 2 == 0) ? 1.0 : -1.0;
                double v = m[static_cast<std::size_t>(r) * w + c] +
                           tile.amplitude * sign;
                if (noisy) {
                    v += 0.2 * config_.noise_scale * noise.gaussian();
                    v = std::clamp(v, 0.0, 1.0);
                }
                stack.values[(static_cast<std::size_t>(t) * h + r) * w + c] =
                    static_cast<float>(v);
            }
        }
    }
    return stack;
}

inline FeatureMap SyntheticPool::feature_map(std::size_t i) const {
    const Tile& tile = tiles_[i];
    const std::uint32_t h = config_.map_height, w = config_.map_width;
    const auto c_dim = static_cast<std::uint32_t>(config_.feature_dim);

    FeatureMap map;
    map.height = h;
    map.width = w;
    map.channels = c_dim;
    map.values.resize(static_cast<std::size_t>(h) * w * c_dim);
    SplitMix64 noise(hash_combine(tile.seed, 3));
    const bool noisy = config_.noise_scale > 0.0;
    const float* planted = planted_.data() + i * config_.feature_dim;
    for (std::uint32_t r = 0; r < h; ++r) {
        for (std::uint32_t c = 0; c < w; ++c) {
            float* dst = map.values.data() + map.index(r, c, 0);
            for (std::uint32_t d = 0; d < c_dim; ++d) {
                double v = planted[d];
                if (noisy) {
                    v += config_.noise_scale * noise.gaussian();
                }
                dst[d] = static_cast<float>(v);
            }
        }
    }
    return map;
}

inline std::vector<float> SyntheticPool::gt_label_map(std::size_t i) const {
    const Tile& tile = tiles_[i];
    const std::uint32_t h = config_.map_height, w = config_.map_width;
    std::vector<float> gt(static_cast<std::size_t>(h) * w, 0.0f);
    if (tile.positive) {
        for (std::uint32_t r = tile.blob_r0; r < tile.blob_r1; ++r) {
            for (std::uint32_t c = tile.blob_c0; c < tile.blob_c1; ++c) {
                gt[static_cast<std::size_t>(r) * w + c] = 1.0f;
            }
        }
    }
    return gt;
}

inline SyntheticPool generate_pool(const SyntheticPoolConfig& config,
                                   unsigned threads = 0) {
    return SyntheticPool(config, threads);
}

// Writes the pool's artifacts (catalog + tensors, paths relative to dir) so
// the CLI pipeline can run on synthetic data.
inline std::vector<TileRecord> dump_pool(const SyntheticPool& pool,
                                         const std::filesystem::path& dir,
                                         unsigned threads = 0) {
    std::filesystem::create_directories(dir / "tiles");
    const std::size_t n = pool.size();
    std::vector<TileRecord> records(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const std::string& id = pool.ids()[i];
        TileRecord rec;
        rec.tile_id = id;
        rec.source_image_id = "synthetic";
        rec.score_stack_path = "tiles/" + id + "_stack.alts";
        rec.feature_map_path = "tiles/" + id + "_features.alts";
        rec.mean_map_path = "tiles/" + id + "_mean.alts";
        rec.ground_truth_path = "tiles/" + id + "_gt.alts";

        const auto& cfg = pool.config();
        const ScoreMapStack stack = pool.score_stack(i);
        write_tensor(dir / rec.score_stack_path,
                     {stack.depth, stack.height, stack.width}, stack.values);
        const FeatureMap fmap = pool.feature_map(i);
        write_tensor(dir / rec.feature_map_path,
                     {fmap.height, fmap.width, fmap.channels}, fmap.values);
        write_tensor(dir / rec.mean_map_path, {cfg.map_height, cfg.map_width},
                     pool.mean_map(i));
        write_tensor(dir / rec.ground_truth_path, {cfg.map_height, cfg.map_width},
                     pool.gt_label_map(i));
        records[i] = std::move(rec);
    });
    save_catalog(records, dir / "catalog.jsonl");
    return records;
}

// ---------------------------------------------------------------------------
// Prototype learner (nearest centroid)
// ---------------------------------------------------------------------------

struct NearestCentroidModel {
    std::vector<int> classes;                     // ascending
    std::vector<std::vector<double>> centroids;   // aligned with classes

    int predict(std::span<const float> x) const {
        int best_class = classes.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes.size(); ++c) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < x.size(); ++d) {
                const double diff = x[d] - centroids[c][d];
                d2 += diff * diff;
            }
            if (d2 < best_d) {
                best_d = d2;
                best_class = classes[c];
            }
        }
        return best_class;
    }
};

inline NearestCentroidModel fit_prototype_learner(
    const EmbeddingMatrix& embeddings, const std::vector<std::size_t>& rows,
    const std::vector<int>& labels) {
    if (rows.empty()) {
        throw precondition_error("prototype learner: empty labeled set");
    }
    if (rows.size() != labels.size()) {
        throw precondition_error("prototype learner: rows/labels misaligned");
    }
    std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& [sum, count] = sums[labels[i]];
        if (sum.empty()) {
            sum.assign(embeddings.cols, 0.0);
        }
        const auto row = embeddings.row(rows[i]);
        for (std::size_t d = 0; d < embeddings.cols; ++d) {
            sum[d] += row[d];
        }
        ++count;
    }
    NearestCentroidModel model;
    for (auto& [cls, entry] : sums) {
        auto& [sum, count] = entry;
        for (auto& v : sum) {
            v /= static_cast<double>(count);
        }
        model.classes.push_back(cls);
        model.centroids.push_back(std::move(sum));
    }
    return model;
}

inline double evaluate_accuracy(const NearestCentroidModel& model,
                                const EmbeddingMatrix& embeddings,
                                const std::vector<int>& labels) {
    if (embeddings.rows == 0 || embeddings.rows != labels.size()) {
        throw precondition_error("evaluate_accuracy: empty or misaligned test set");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < embeddings.rows; ++i) {
        if (model.predict(embeddings.row(i)) == labels[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(embeddings.rows);
}

// ---------------------------------------------------------------------------
// The loop
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& loop_strategy_names() {
    static const std::vector<std::string> names = {
        "mc_dropout",        "coreset", "robust_coreset", "hybrid_naive",
        "hybrid_clustering", "random",  "unlimited"};
    return names;
}

struct LoopOptions {
    std::size_t rounds = 1;
    std::size_t budget = 50;
    std::uint64_t seed = 0;
    double preselect_fraction = 0.05;
    double initial_fraction = 0.02;
    Linkage linkage = Linkage::ward;
    unsigned threads = 0;
};

struct RoundRecord {
    std::size_t round = 0;
    std::size_t budget_spent = 0;
    std::size_t labeled_size = 0;
    double accuracy = 0.0;
    std::vector<std::string> selected;
};

struct LoopReport {
    std::string strategy;
    std::uint64_t seed = 0;
    std::size_t initial_labeled = 0;
    std::size_t labels_revealed = 0;
    double final_accuracy = 0.0;
    std::vector<RoundRecord> rounds;
};

inline LoopReport run_loop(const SyntheticPool& pool, const SyntheticPool& test_pool,
                           const std::string& strategy, const LoopOptions& opts) {
    const auto& names = loop_strategy_names();
    if (std::find(names.begin(), names.end(), strategy) == names.end()) {
        throw precondition_error("run_loop: unknown strategy \"" + strategy + "\"");
    }
    if (opts.rounds == 0) {
        throw precondition_error("run_loop: rounds must be >= 1");
    }
    const std::size_t n = pool.size();
    const bool unlimited = strategy == "unlimited";
    const std::size_t initial_count = fraction_count(opts.initial_fraction, n);
    if (!unlimited) {
        if (opts.budget == 0) {
            throw precondition_error("run_loop: budget must be >= 1");
        }
        if (initial_count + opts.rounds * opts.budget > n) {
            throw precondition_error(
                "run_loop: budget exhaustion (" + std::to_string(initial_count) + " + " +
                std::to_string(opts.rounds) + " x " + std::to_string(opts.budget) +
                " > " + std::to_string(n) + " tiles)");
        }
    }

    LabelLedger ledger = pool.make_ledger();
    const std::vector<int> test_labels = test_pool.labels_for_evaluation();

    std::vector<std::size_t> labeled_rows;
    std::vector<int> labeled_classes;
    auto reveal = [&](std::size_t idx) {
        labeled_rows.push_back(idx);
        labeled_classes.push_back(ledger.reveal(idx));
    };

    {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 rng(hash_combine(opts.seed, 0x1217A75ULL));
        partial_shuffle(order, initial_count, rng);
        for (std::size_t i = 0; i < initial_count; ++i) {
            reveal(order[i]);
        }
    }

    std::unordered_map<std::string, std::size_t> index_of;
    index_of.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        index_of[pool.ids()[i]] = i;
    }

    LoopReport report;
    report.strategy = strategy;
    report.seed = opts.seed;
    report.initial_labeled = initial_count;

    auto record_round = [&](std::size_t round, std::vector<std::string> selected) {
        const NearestCentroidModel model =
            fit_prototype_learner(pool.embeddings(), labeled_rows, labeled_classes);
        RoundRecord rec;
        rec.round = round;
        rec.budget_spent = ledger.reveal_count() - initial_count;
        rec.labeled_size = ledger.reveal_count();
        rec.accuracy = evaluate_accuracy(model, test_pool.embeddings(), test_labels);
        rec.selected = std::move(selected);
        report.rounds.push_back(std::move(rec));
    };

    if (unlimited) {
        // Labeling budget treated as unlimited: the whole pool is revealed in
        // one round, without pre-selection.
        std::vector<std::string> selected;
        for (std::size_t i = 0; i < n; ++i) {
            if (!ledger.is_revealed(i)) {
                selected.push_back(pool.ids()[i]);
                reveal(i);
            }
        }
        record_round(1, std::move(selected));
    } else {
        for (std::size_t round = 1; round <= opts.rounds; ++round) {
            std::vector<std::size_t> candidates;
            candidates.reserve(n - ledger.reveal_count());
            for (std::size_t i = 0; i < n; ++i) {
                if (!ledger.is_revealed(i)) {
                    candidates.push_back(i);
                }
            }
            const std::size_t m = candidates.size();

            // Mean-intensity pre-selection; the window is widened to the
            // budget when the fractional cut would be smaller, so that
            // budget-equals-pool runs stay feasible.
            std::size_t keep = std::max(fraction_count(opts.preselect_fraction, m),
                                        std::min(opts.budget, m));
            std::sort(candidates.begin(), candidates.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (pool.intensity(a) != pool.intensity(b)) {
                              return pool.intensity(a) > pool.intensity(b);
                          }
                          return pool.ids()[a] < pool.ids()[b];
                      });
            candidates.resize(keep);

            Pool sel_pool;
            sel_pool.embeddings.rows = keep;
            sel_pool.embeddings.cols = pool.embeddings().cols;
            sel_pool.embeddings.values.reserve(keep * pool.embeddings().cols);
            sel_pool.ids.reserve(keep);
            sel_pool.scores.reserve(keep);
            for (const std::size_t idx : candidates) {
                sel_pool.ids.push_back(pool.ids()[idx]);
                sel_pool.scores.push_back(pool.score(idx));
                const auto row = pool.embeddings().row(idx);
                sel_pool.embeddings.values.insert(sel_pool.embeddings.values.end(),
                                                  row.begin(), row.end());
            }

            const std::uint64_t round_seed =
                hash_combine(opts.seed, 0xB0000000ULL + round);
            SelectionManifest manifest;
            if (strategy == "mc_dropout") {
                manifest = top_k_uncertain(sel_pool, opts.budget);
            } else if (strategy == "coreset") {
                manifest = kcenter_greedy(sel_pool, opts.budget, opts.threads).manifest;
            } else if (strategy == "robust_coreset") {
                manifest = robust_kcenter(sel_pool, opts.budget,
                                          default_outlier_budget(keep), 64,
                                          opts.threads)
                               .manifest;
            } else if (strategy == "hybrid_naive") {
                manifest = hybrid_naive(sel_pool, opts.budget, opts.threads);
            } else if (strategy == "hybrid_clustering") {
                manifest =
                    hybrid_clustering(sel_pool, opts.budget, opts.linkage, opts.threads);
            } else {
                manifest = random_select(sel_pool, opts.budget, round_seed);
            }

            std::vector<std::string> selected;
            selected.reserve(manifest.selected.size());
            for (const auto& entry : manifest.selected) {
                reveal(index_of.at(entry.tile_id));
                selected.push_back(entry.tile_id);
            }
            record_round(round, std::move(selected));
        }
    }

    report.labels_revealed = ledger.reveal_count();
    report.final_accuracy = report.rounds.back().accuracy;
    return report;
}

// ---------------------------------------------------------------------------
// Strategy comparison across seeds
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    SyntheticPoolConfig pool;
    std::size_t test_tiles = 500;
    double preselect_fraction = 0.05;
    double initial_fraction = 0.02;
    Linkage linkage = Linkage::ward;
};

struct StrategySummary {
    std::string strategy;
    std::vector<double> final_accuracies;  // one per seed, input order
    double mean = 0.0;
    double stddev = 0.0;
};

struct ComparisonReport {
    std::size_t rounds = 0;
    std::size_t budget = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<StrategySummary> strategies;
    std::vector<LoopReport> runs;  // seed-major, then strategy order
};

inline ComparisonReport compare_strategies(const ScenarioConfig& scenario,
                                           const std::vector<std::string>& strategies,
                                           std::size_t rounds, std::size_t budget,
                                           const std::vector<std::uint64_t>& seeds,
                                           unsigned threads = 0) {
    if (strategies.size() < 2) {
        throw precondition_error("compare_strategies: need at least 2 strategies");
    }
    if (seeds.size() < 2) {
        throw precondition_error("compare_strategies: need at least 2 seeds");
    }
    scenario.pool.validate();
    if (scenario.test_tiles == 0) {
        throw precondition_error("compare_strategies: need a test split");
    }

    ComparisonReport report;
    report.rounds = rounds;
    report.budget = budget;
    report.seeds = seeds;
    report.strategies.resize(strategies.size());
    for (std::size_t s = 0; s < strategies.size(); ++s) {
        report.strategies[s].strategy = strategies[s];
    }

    for (const std::uint64_t seed : seeds) {
        SyntheticPoolConfig pool_cfg = scenario.pool;
        pool_cfg.seed = hash_combine(scenario.pool.seed, seed);
        if (!pool_cfg.mixture_seed.has_value()) {
            pool_cfg.mixture_seed = pool_cfg.seed;
        }
        // the held-out split shares the pool's class structure but draws
        // its own tiles
        SyntheticPoolConfig test_cfg = pool_cfg;
        test_cfg.n_tiles = scenario.test_tiles;
        test_cfg.seed = hash_combine(pool_cfg.seed, 0x7E575E7ULL);

        const SyntheticPool pool = generate_pool(pool_cfg, threads);
        const SyntheticPool test_pool = generate_pool(test_cfg, threads);

        for (std::size_t s = 0; s < strategies.size(); ++s) {
            LoopOptions opts;
            opts.rounds = rounds;
            opts.budget = budget;
            opts.seed = seed;
            opts.preselect_fraction = scenario.preselect_fraction;
            opts.initial_fraction = scenario.initial_fraction;
            opts.linkage = scenario.linkage;
            opts.threads = threads;
            LoopReport run = run_loop(pool, test_pool, strategies[s], opts);
            report.strategies[s].final_accuracies.push_back(run.final_accuracy);
            report.runs.push_back(std::move(run));
        }
    }

    for (auto& summary : report.strategies) {
        const auto& xs = summary.final_accuracies;
        double mean = 0.0;
        for (const double x : xs) {
            mean += x;
        }
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (const double x : xs) {
            var += (x - mean) * (x - mean);
        }
        var /= static_cast<double>(xs.size() - 1);
        summary.mean = mean;
        summary.stddev = std::sqrt(var);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json loop_report_to_json(const LoopReport& report) {
    nlohmann::ordered_json j;
    j["strategy"] = report.strategy;
    j["seed"] = report.seed;
    j["initial_labeled"] = report.initial_labeled;
    j["labels_revealed"] = report.labels_revealed;
    j["final_accuracy"] = report.final_accuracy;
    auto& rounds = j["rounds"] = nlohmann::ordered_json::array();
    for (const auto& r : report.rounds) {
        nlohmann::ordered_json jr;
        jr["round"] = r.round;
        jr["budget_spent"] = r.budget_spent;
        jr["labeled_size"] = r.labeled_size;
        jr["accuracy"] = r.accuracy;
        jr["selected"] = r.selected;
        rounds.push_back(std::move(jr));
    }
    return j;
}

inline nlohmann::ordered_json comparison_to_json(const ComparisonReport& report) {
    nlohmann::ordered_json j;
    j["rounds"] = report.rounds;
    j["budget"] = report.budget;
    j["seeds"] = report.seeds;
    auto& rows = j["strategies"] = nlohmann::ordered_json::array();
    for (const auto& s : report.strategies) {
        nlohmann::ordered_json row;
        row["strategy"] = s.strategy;
        row["mean_final_accuracy"] = s.mean;
        row["std_final_accuracy"] = s.stddev;
        row["final_accuracies"] = s.final_accuracies;
        rows.push_back(std::move(row));
    }
    return j;
}

inline void write_comparison_json(const ComparisonReport& report,
                                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    out << comparison_to_json(report).dump(2) << '\n';
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

inline void write_loop_reports_json(const std::vector<LoopReport>& reports,
                                    const std::filesystem::path& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        j.push_back(loop_report_to_json(r));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

// Accuracy-versus-budget curves, one row per (strategy, seed, round).
inline void write_rounds_csv(const std::vector<LoopReport>& reports,
                             const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    out << "strategy,seed,round,budget_spent,labeled_size,accuracy\n";
    for (const auto& report : reports) {
        for (const auto& r : report.rounds) {
            nlohmann::json acc = r.accuracy;
            out << report.strategy << ',' << report.seed << ',' << r.round << ','
                << r.budget_spent << ',' << r.labeled_size << ',' << acc.dump()
                << '\n';
        }
    }
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

inline std::string format_comparison_table(const ComparisonReport& report) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s %14s %14s %8s\n", "strategy",
                  "mean accuracy", "std", "seeds");
    out += line;
    for (const auto& s : report.strategies) {
        std::snprintf(line, sizeof(line), "%-20s %14.4f %14.4f %8zu\n",
                      s.strategy.c_str(), s.mean, s.stddev,
                      s.final_accuracies.size());
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config parsing (shared by the simulate and genpool subcommands)
// ---------------------------------------------------------------------------

inline SyntheticPoolConfig pool_config_from_json(const nlohmann::json& j) {
    SyntheticPoolConfig cfg;
    cfg.n_tiles = j.value("n_tiles", cfg.n_tiles);
    cfg.n_classes = j.value("n_classes", cfg.n_classes);
    cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
    cfg.map_height = j.value("map_height", cfg.map_height);
    cfg.map_width = j.value("map_width", cfg.map_width);
    cfg.stack_depth = j.value("stack_depth", cfg.stack_depth);
    cfg.noise_scale = j.value("noise_scale", cfg.noise_scale);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("mixture_seed")) {
        cfg.mixture_seed = j["mixture_seed"].get<std::uint64_t>();
    }
    if (j.contains("class_weights")) {
        cfg.class_weights = j["class_weights"].get<std::vector<double>>();
    }
    cfg.validate();
    return cfg;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    ScenarioConfig scenario;
    scenario.pool = pool_config_from_json(j);
    scenario.test_tiles = j.value("test_tiles", scenario.test_tiles);
    scenario.preselect_fraction =
        j.value("preselect_fraction", scenario.preselect_fraction);
    scenario.initial_fraction = j.value("initial_fraction", scenario.initial_fraction);
    if (j.contains("linkage")) {
        scenario.linkage = linkage_from_string(j["linkage"].get<std::string>());
    }
    return scenario;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open: " + path.string());
    }
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw io_error("malformed config JSON: " + path.string());
    }
    try {
        return scenario_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed config " + path.string() + ": " + e.what());
    }
}

}  // namespace alts
