// MC-dropout uncertainty scoring. A tile's score stack holds T stochastic
// segmentation maps; the uncertainty score is the mean over pixels of the
// per-pixel population variance of the T values. Mean-intensity ranking and
// the top-fraction pre-selection cut live here as well.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alts/common.hpp"
#include "alts/parallel.hpp"
#include "alts/tensor_store.hpp"

#if defined(__linux__)
#include <fcntl.h>
#include <sys/syscall.h>
#include <unistd.h>
#endif

namespace alts {

struct ScoreMapStack {
    std::uint32_t depth = 0;   // T, number of stochastic predictions
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<float> values;  // row-major [t][h][w]
    std::string tile_id;

    std::span<const float> map(std::uint32_t t) const {
        const std::size_t plane = static_cast<std::size_t>(height) * width;
        return {values.data() + static_cast<std::size_t>(t) * plane, plane};
    }
};

struct UncertaintyScore {
    std::string tile_id;
    double value = 0.0;
};

inline ScoreMapStack stack_from_tensor(const Tensor& t, std::string tile_id = {}) {
    if (t.dims.size() != 3) {
        throw precondition_error("score stack tensor must have dims [T,H,W], got ndim " +
                                 std::to_string(t.dims.size()));
    }
    ScoreMapStack s;
    s.depth = t.dims[0];
    s.height = t.dims[1];
    s.width = t.dims[2];
    s.values = t.data;
    s.tile_id = std::move(tile_id);
    return s;
}

namespace detail {

inline void require_unit_range(std::span<const float> values, const std::string& where) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float v = values[i];
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
            throw precondition_error(where + ": value out of [0,1] at index " +
                                     std::to_string(i));
        }
    }
}

inline void validate_stack(const ScoreMapStack& stack, const std::string& where) {
    const std::string who =
        stack.tile_id.empty() ? where : where + " (tile " + stack.tile_id + ")";
    if (stack.depth < 2) {
        throw precondition_error(who + ": need at least 2 maps for variance, got " +
                                 std::to_string(stack.depth));
    }
    const std::size_t expect =
        static_cast<std::size_t>(stack.depth) * stack.height * stack.width;
    if (stack.height == 0 || stack.width == 0 || stack.values.size() != expect) {
        throw precondition_error(who + ": value buffer does not match dimensions");
    }
    require_unit_range(stack.values, who);
}

}  // namespace detail

// Per-pixel population variance (divide by T) over the stack's T maps.
// Accumulates sums and squared sums in double; with values in [0,1] this is
// accurate to well below 1e-12.
inline std::vector<double> pixel_variance(const ScoreMapStack& stack) {
    detail::validate_stack(stack, "pixel_variance");
    const std::size_t plane = static_cast<std::size_t>(stack.height) * stack.width;
    std::vector<double> sum(plane, 0.0);
    std::vector<double> sum_sq(plane, 0.0);
    for (std::uint32_t t = 0; t < stack.depth; ++t) {
        const auto m = stack.map(t);
        for (std::size_t p = 0; p < plane; ++p) {
            const double v = m[p];
            sum[p] += v;
            sum_sq[p] += v * v;
        }
    }
    const double inv_t = 1.0 / static_cast<double>(stack.depth);
    std::vector<double> var(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        const double mean = sum[p] * inv_t;
        var[p] = std::max(0.0, sum_sq[p] * inv_t - mean * mean);
    }
    return var;
}

// The tile-level uncertainty: mean over pixels of the per-pixel variance.
// Bounded by 0.25 for in-range stacks.
inline double mc_dropout_score(const ScoreMapStack& stack) {
    const std::vector<double> var = pixel_variance(stack);
    double acc = 0.0;
    for (const double v : var) {
        acc += v;
    }
    return acc / static_cast<double>(var.size());
}

// Mean over all pixels of a segmentation map with values in [0,1].
inline double mean_intensity(std::span<const float> map) {
    if (map.empty()) {
        throw precondition_error("mean_intensity: empty map");
    }
    detail::require_unit_range(map, "mean_intensity");
    double acc = 0.0;
    for (const float v : map) {
        acc += v;
    }
    return acc / static_cast<double>(map.size());
}

// ---------------------------------------------------------------------------
// Score files: JSON lines of {"tile_id", "score"}.
// ---------------------------------------------------------------------------

inline void write_scores(const std::vector<UncertaintyScore>& scores,
                         const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    for (const auto& s : scores) {
        nlohmann::ordered_json j;
        j["tile_id"] = s.tile_id;
        j["score"] = s.value;
        out << j.dump() << '\n';
    }
    out.flush();
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

inline std::vector<UncertaintyScore> load_scores(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open: " + path.string());
    }
    std::vector<UncertaintyScore> scores;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("tile_id") ||
            !j.contains("score")) {
            throw io_error(path.string() + ": malformed score line " +
                           std::to_string(line_no));
        }
        scores.push_back({j["tile_id"].get<std::string>(), j["score"].get<double>()});
    }
    return scores;
}

// ---------------------------------------------------------------------------
// Pre-selection: keep the top fraction of the pool by mean intensity.
// ---------------------------------------------------------------------------

struct IntensityEntry {
    std::string tile_id;
    double intensity = 0.0;
};

// Sorts by intensity descending, ties broken by tile_id ascending.
inline void rank_by_intensity(std::vector<IntensityEntry>& items) {
    std::sort(items.begin(), items.end(),
              [](const IntensityEntry& a, const IntensityEntry& b) {
                  if (a.intensity != b.intensity) {
                      return a.intensity > b.intensity;
                  }
                  return a.tile_id < b.tile_id;
              });
}

inline SelectionManifest preselect_from_intensities(std::vector<IntensityEntry> items,
                                                    double fraction) {
    if (items.empty()) {
        throw precondition_error("preselect: empty catalog");
    }
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw precondition_error("preselect: fraction must be in (0,1]");
    }
    rank_by_intensity(items);
    const std::size_t count = fraction_count(fraction, items.size());

    SelectionManifest manifest;
    manifest.strategy = Strategy::preselect;
    manifest.budget = count;
    manifest.seed = 0;
    manifest.selected.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        manifest.selected.push_back({items[i].tile_id, items[i].intensity});
    }
    return manifest;
}

// Intensity source for one tile: the dedicated mean map when present,
// otherwise the first map of the stochastic stack.
inline double tile_mean_intensity(const TileRecord& rec,
                                  const std::filesystem::path& base) {
    if (!rec.mean_map_path.empty()) {
        const Tensor t = read_tensor(resolve_artifact_path(base, rec.mean_map_path));
        if (t.dims.size() != 2) {
            throw precondition_error("tile " + rec.tile_id +
                                     ": mean map must have dims [H,W]");
        }
        return mean_intensity(t.data);
    }
    if (!rec.score_stack_path.empty()) {
        const Tensor t = read_tensor(resolve_artifact_path(base, rec.score_stack_path));
        const ScoreMapStack stack = stack_from_tensor(t, rec.tile_id);
        return mean_intensity(stack.map(0));
    }
    throw precondition_error("tile " + rec.tile_id +
                             ": no mean map or score stack to rank by");
}

#if defined(__linux__)
namespace detail {

// Catalog-scale scans open hundreds of thousands of small files, and the
// per-syscall cost dominates. This reader opens one directory descriptor,
// resolves records with openat, and releases descriptors in batches via
// close_range. Single-threaded use only: the batch flush assumes no other
// code opens descriptors while a batch is in flight.
class DeferredCloseReader {
public:
    explicit DeferredCloseReader(const std::filesystem::path& base)
        : base_(base.empty() ? std::filesystem::path(".") : base) {
        dir_fd_ = ::open(base_.c_str(), O_RDONLY | O_DIRECTORY);
    }
    DeferredCloseReader(const DeferredCloseReader&) = delete;
    DeferredCloseReader& operator=(const DeferredCloseReader&) = delete;
    ~DeferredCloseReader() {
        flush();
        if (dir_fd_ >= 0) {
            ::close(dir_fd_);
        }
    }

    bool usable() const { return dir_fd_ >= 0; }

    void read_file(const std::string& rel, std::vector<unsigned char>& out) {
        const int fd = ::openat(dir_fd_, rel.c_str(), O_RDONLY);
        if (fd < 0) {
            throw io_error("cannot open: " + (base_ / rel).string());
        }
        fds_.push_back(fd);
        out.clear();
        unsigned char buf[65536];
        for (;;) {
            const ssize_t got = ::read(fd, buf, sizeof(buf));
            if (got < 0) {
                throw io_error("cannot read: " + (base_ / rel).string());
            }
            out.insert(out.end(), buf, buf + got);
            if (static_cast<std::size_t>(got) < sizeof(buf)) {
                break;
            }
        }
        if (fds_.size() >= 1024) {
            flush();
        }
    }

private:
    void flush() {
        if (fds_.empty()) {
            return;
        }
        const auto [lo, hi] = std::minmax_element(fds_.begin(), fds_.end());
        bool done = false;
#ifdef __NR_close_range
        if (static_cast<std::size_t>(*hi - *lo) + 1 == fds_.size()) {
            done = ::syscall(__NR_close_range, static_cast<unsigned>(*lo),
                             static_cast<unsigned>(*hi), 0u) == 0;
        }
#endif
        if (!done) {
            for (const int fd : fds_) {
                ::close(fd);
            }
        }
        fds_.clear();
    }

    std::filesystem::path base_;
    int dir_fd_ = -1;
    std::vector<int> fds_;
};

inline double tile_mean_intensity_batched(const TileRecord& rec,
                                          DeferredCloseReader& reader,
                                          std::vector<unsigned char>& scratch) {
    const auto load = [&](const std::string& path_str) {
        const std::filesystem::path p(path_str);
        if (p.is_absolute()) {
            return read_tensor(p);
        }
        reader.read_file(path_str, scratch);
        return parse_tensor(scratch, path_str);
    };
    if (!rec.mean_map_path.empty()) {
        const Tensor t = load(rec.mean_map_path);
        if (t.dims.size() != 2) {
            throw precondition_error("tile " + rec.tile_id +
                                     ": mean map must have dims [H,W]");
        }
        return mean_intensity(t.data);
    }
    if (!rec.score_stack_path.empty()) {
        const Tensor t = load(rec.score_stack_path);
        const ScoreMapStack stack = stack_from_tensor(t, rec.tile_id);
        return mean_intensity(stack.map(0));
    }
    throw precondition_error("tile " + rec.tile_id +
                             ": no mean map or score stack to rank by");
}

}  // namespace detail
#endif  // __linux__

// File-backed pre-selection over a catalog; per-tile loads run in parallel,
// or through the batched single-descriptor reader when one worker is asked
// for.
inline SelectionManifest preselect(const std::vector<TileRecord>& records,
                                   double fraction,
                                   const std::filesystem::path& base_dir = {},
                                   unsigned threads = 0) {
    if (records.empty()) {
        throw precondition_error("preselect: empty catalog");
    }
    std::vector<IntensityEntry> items(records.size());
#if defined(__linux__)
    if (effective_threads(threads) == 1) {
        detail::DeferredCloseReader reader(base_dir);
        if (reader.usable()) {
            std::vector<unsigned char> scratch;
            for (std::size_t i = 0; i < records.size(); ++i) {
                items[i].tile_id = records[i].tile_id;
                items[i].intensity =
                    detail::tile_mean_intensity_batched(records[i], reader, scratch);
            }
            return preselect_from_intensities(std::move(items), fraction);
        }
    }
#endif
    parallel_for(records.size(), threads, [&](std::size_t i) {
        items[i].tile_id = records[i].tile_id;
        items[i].intensity = tile_mean_intensity(records[i], base_dir);
    });
    return preselect_from_intensities(std::move(items), fraction);
}

}  // namespace alts
