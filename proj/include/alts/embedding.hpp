// Feature-map pooling: grid max pooling followed by global average pooling
// turns a decoder feature map (H x W x C) into a C-dimensional embedding.
// With the default 8x8 grid a 128x128x128 map becomes a 128-vector.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alts/common.hpp"
#include "alts/tensor_store.hpp"

namespace alts {

struct FeatureMap {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t channels = 0;
    std::vector<float> values;  // row-major [h][w][c]

    std::size_t index(std::uint32_t h, std::uint32_t w, std::uint32_t c) const {
        return (static_cast<std::size_t>(h) * width + w) * channels + c;
    }
    float at(std::uint32_t h, std::uint32_t w, std::uint32_t c) const {
        return values[index(h, w, c)];
    }
};

// Row-major N x C matrix of embeddings, one row per tile.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    std::span<const float> row(std::size_t i) const {
        return {values.data() + i * cols, cols};
    }
};

namespace detail {

inline void require_finite(const std::vector<float>& values, const std::string& where) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw precondition_error(where + ": non-finite value at index " +
                                     std::to_string(i));
        }
    }
}

inline void validate_feature_map(const FeatureMap& map, const std::string& where) {
    if (map.height == 0 || map.width == 0 || map.channels == 0) {
        throw precondition_error(where + ": empty feature map");
    }
    const std::size_t expect = static_cast<std::size_t>(map.height) * map.width *
                               map.channels;
    if (map.values.size() != expect) {
        throw precondition_error(where + ": value buffer does not match dimensions");
    }
    require_finite(map.values, where);
}

}  // namespace detail

inline FeatureMap feature_map_from_tensor(const Tensor& t) {
    if (t.dims.size() != 3) {
        throw precondition_error("feature map tensor must have dims [H,W,C], got ndim " +
                                 std::to_string(t.dims.size()));
    }
    FeatureMap map;
    map.height = t.dims[0];
    map.width = t.dims[1];
    map.channels = t.dims[2];
    map.values = t.data;
    return map;
}

// Non-overlapping max pooling onto a grid x grid output; window size is
// (H/grid) x (W/grid) with stride equal to the window size.
inline FeatureMap grid_max_pool(const FeatureMap& map, std::uint32_t grid) {
    detail::validate_feature_map(map, "grid_max_pool");
    if (grid == 0) {
        throw precondition_error("grid_max_pool: grid must be >= 1");
    }
    if (map.height % grid != 0 || map.width % grid != 0) {
        throw precondition_error("grid_max_pool: map " + std::to_string(map.height) +
                                 "x" + std::to_string(map.width) +
                                 " not divisible by grid " + std::to_string(grid));
    }
    const std::uint32_t wh = map.height / grid;
    const std::uint32_t ww = map.width / grid;

    FeatureMap out;
    out.height = grid;
    out.width = grid;
    out.channels = map.channels;
    out.values.assign(static_cast<std::size_t>(grid) * grid * map.channels,
                      -std::numeric_limits<float>::infinity());

    for (std::uint32_t h = 0; h < map.height; ++h) {
        const std::uint32_t oi = h / wh;
        for (std::uint32_t w = 0; w < map.width; ++w) {
            const std::uint32_t oj = w / ww;
            const float* src = map.values.data() + map.index(h, w, 0);
            float* dst = out.values.data() + out.index(oi, oj, 0);
            for (std::uint32_t c = 0; c < map.channels; ++c) {
                if (src[c] > dst[c]) {
                    dst[c] = src[c];
                }
            }
        }
    }
    return out;
}

// Per-channel arithmetic mean over all spatial positions. Accumulates in
// double, emits float.
inline std::vector<float> global_avg_pool(const FeatureMap& map) {
    detail::validate_feature_map(map, "global_avg_pool");
    std::vector<double> acc(map.channels, 0.0);
    for (std::uint32_t h = 0; h < map.height; ++h) {
        for (std::uint32_t w = 0; w < map.width; ++w) {
            const float* src = map.values.data() + map.index(h, w, 0);
            for (std::uint32_t c = 0; c < map.channels; ++c) {
                acc[c] += src[c];
            }
        }
    }
    const double positions = static_cast<double>(map.height) * map.width;
    std::vector<float> out(map.channels);
    for (std::uint32_t c = 0; c < map.channels; ++c) {
        out[c] = static_cast<float>(acc[c] / positions);
    }
    return out;
}

inline std::vector<float> embed_tile(const FeatureMap& map, std::uint32_t grid = 8) {
    return global_avg_pool(grid_max_pool(map, grid));
}

// ---------------------------------------------------------------------------
// Embedding files: one [N,C] tensor plus a JSON-lines sidecar of tile ids
// aligned by row.
// ---------------------------------------------------------------------------

inline void write_embeddings(const EmbeddingMatrix& matrix,
                             const std::vector<std::string>& ids,
                             const std::filesystem::path& tensor_path,
                             const std::filesystem::path& ids_path) {
    if (matrix.rows != ids.size()) {
        throw precondition_error("write_embeddings: " + std::to_string(matrix.rows) +
                                 " rows but " + std::to_string(ids.size()) + " ids");
    }
    if (matrix.rows == 0 || matrix.cols == 0) {
        throw precondition_error("write_embeddings: empty matrix");
    }
    write_tensor(tensor_path,
                 {static_cast<std::uint32_t>(matrix.rows),
                  static_cast<std::uint32_t>(matrix.cols)},
                 matrix.values);
    std::ofstream out(ids_path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + ids_path.string());
    }
    for (const auto& id : ids) {
        nlohmann::ordered_json j;
        j["tile_id"] = id;
        out << j.dump() << '\n';
    }
    out.flush();
    if (!out) {
        throw io_error("write failed: " + ids_path.string());
    }
}

inline std::vector<std::string> load_id_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open: " + path.string());
    }
    std::vector<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("tile_id")) {
            throw io_error(path.string() + ": malformed id line " +
                           std::to_string(line_no));
        }
        ids.push_back(j["tile_id"].get<std::string>());
    }
    return ids;
}

struct EmbeddingFile {
    EmbeddingMatrix matrix;
    std::vector<std::string> ids;
};

inline EmbeddingFile read_embeddings(const std::filesystem::path& tensor_path,
                                     const std::filesystem::path& ids_path) {
    const Tensor t = read_tensor(tensor_path);
    if (t.dims.size() != 2) {
        throw io_error("embedding tensor must have dims [N,C]: " + tensor_path.string());
    }
    EmbeddingFile file;
    file.matrix.rows = t.dims[0];
    file.matrix.cols = t.dims[1];
    file.matrix.values = t.data;
    file.ids = load_id_list(ids_path);
    if (file.ids.size() != file.matrix.rows) {
        throw io_error("embedding id list (" + std::to_string(file.ids.size()) +
                       ") does not match tensor rows (" +
                       std::to_string(file.matrix.rows) + "): " + ids_path.string());
    }
    return file;
}

}  // namespace alts
