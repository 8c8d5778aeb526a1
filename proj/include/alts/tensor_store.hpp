// Persistence layer: the ALTS binary tensor container, JSON-lines tile
// catalogs, and selection manifests. This is the interop boundary with
// upstream model pipelines, so the byte layout is fixed:
//
//   magic   : 4 ASCII bytes "ALTS"
//   version : u8, currently 1
//   dtype   : u8, 1 = 32-bit IEEE-754 float
//   ndim    : u8, 1..3
//   dims    : ndim x u32 little-endian, each >= 1
//   payload : product(dims) elements, row-major, little-endian
//
// Payloads are carried bit-faithfully; NaN/Inf bit patterns survive a
// write/read roundtrip untouched (scoring operations reject them later).
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#if defined(__unix__) || defined(__APPLE__)
#include <fcntl.h>
#include <unistd.h>
#endif

#include "alts/common.hpp"

namespace alts {

inline constexpr char kTensorMagic[4] = {'A', 'L', 'T', 'S'};
inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t elements() const {
        std::size_t n = 1;
        for (const auto d : dims) {
            n *= d;
        }
        return dims.empty() ? 0 : n;
    }
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t checked_element_count(const std::vector<std::uint32_t>& dims,
                                           const std::string& where) {
    if (dims.empty() || dims.size() > 3) {
        throw precondition_error(where + ": ndim must be 1, 2 or 3, got " +
                                 std::to_string(dims.size()));
    }
    std::uint64_t n = 1;
    for (const auto d : dims) {
        if (d == 0) {
            throw precondition_error(where + ": zero-sized dimension");
        }
        n *= d;
        if (n > (1ULL << 33)) {
            throw precondition_error(where + ": tensor too large");
        }
    }
    return n;
}

}  // namespace detail

inline void write_tensor(const std::filesystem::path& path,
                         const std::vector<std::uint32_t>& dims,
                         std::span<const float> data) {
    const std::uint64_t n = detail::checked_element_count(dims, "write_tensor");
    if (n != data.size()) {
        throw precondition_error("write_tensor: dims describe " + std::to_string(n) +
                                 " elements but data has " + std::to_string(data.size()));
    }

    std::string buffer;
    buffer.reserve(7 + 4 * dims.size() + 4 * data.size());
    buffer.append(kTensorMagic, 4);
    buffer.push_back(static_cast<char>(kTensorVersion));
    buffer.push_back(static_cast<char>(kDtypeFloat32));
    buffer.push_back(static_cast<char>(dims.size()));
    for (const auto d : dims) {
        detail::put_u32_le(buffer, d);
    }
    if constexpr (std::endian::native == std::endian::little) {
        buffer.append(reinterpret_cast<const char*>(data.data()),
                      data.size() * sizeof(float));
    } else {
        for (const float f : data) {
            detail::put_u32_le(buffer, std::bit_cast<std::uint32_t>(f));
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    out.flush();
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

// Parses the byte layout out of an in-memory buffer.
inline Tensor parse_tensor(std::span<const unsigned char> bytes,
                           const std::string& name) {
    if (bytes.size() < 7) {
        throw io_error("truncated header: " + name);
    }
    if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
        throw io_error("bad magic (not an ALTS tensor): " + name);
    }
    if (bytes[4] != kTensorVersion) {
        throw io_error("unsupported version " + std::to_string(bytes[4]) + ": " + name);
    }
    if (bytes[5] != kDtypeFloat32) {
        throw io_error("unsupported dtype code " + std::to_string(bytes[5]) + ": " +
                       name);
    }
    const unsigned ndim = bytes[6];
    if (ndim < 1 || ndim > 3) {
        throw io_error("invalid ndim " + std::to_string(ndim) + ": " + name);
    }
    const std::size_t header_size = 7 + 4 * static_cast<std::size_t>(ndim);
    if (bytes.size() < header_size) {
        throw io_error("truncated header: " + name);
    }

    Tensor t;
    t.dims.resize(ndim);
    for (unsigned i = 0; i < ndim; ++i) {
        t.dims[i] = detail::get_u32_le(bytes.data() + 7 + 4 * i);
        if (t.dims[i] == 0) {
            throw io_error("invalid zero dimension: " + name);
        }
    }
    const std::uint64_t n = detail::checked_element_count(t.dims, "read_tensor");
    const std::uint64_t payload_size = n * 4;
    const std::uint64_t available = bytes.size() - header_size;
    if (available < payload_size) {
        throw io_error("truncated payload (expected " + std::to_string(payload_size) +
                       " bytes, got " + std::to_string(available) + "): " + name);
    }
    if (available > payload_size) {
        throw io_error("trailing bytes after payload: " + name);
    }

    const unsigned char* payload = bytes.data() + header_size;
    t.data.resize(n);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(t.data.data(), payload, payload_size);
    } else {
        for (std::uint64_t i = 0; i < n; ++i) {
            t.data[i] = std::bit_cast<float>(detail::get_u32_le(payload + i * 4));
        }
    }
    return t;
}

inline Tensor read_tensor(const std::filesystem::path& path) {
#if defined(__unix__) || defined(__APPLE__)
    // Minimal-syscall path: catalogs reference hundreds of thousands of
    // small tensor files, and on sandboxed filesystems the per-syscall cost
    // dominates. One open, one read for small files, one close.
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) {
        throw io_error("cannot open: " + path.string());
    }
    std::vector<unsigned char> bytes;
    unsigned char buf[65536];
    for (;;) {
        const ssize_t got = ::read(fd, buf, sizeof(buf));
        if (got < 0) {
            ::close(fd);
            throw io_error("cannot read: " + path.string());
        }
        bytes.insert(bytes.end(), buf, buf + got);
        if (static_cast<std::size_t>(got) < sizeof(buf)) {
            break;  // regular-file short read means end of file
        }
    }
    ::close(fd);
    return parse_tensor(bytes, path.string());
#else
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open: " + path.string());
    }
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    if (size < 0) {
        throw io_error("cannot read: " + path.string());
    }
    std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (in.gcount() != size) {
        throw io_error("cannot read: " + path.string());
    }
    return parse_tensor(bytes, path.string());
#endif
}

// ---------------------------------------------------------------------------
// Tile catalogs (JSON lines, one TileRecord per line)
// ---------------------------------------------------------------------------

struct TileRecord {
    std::string tile_id;
    std::string source_image_id;
    std::string score_stack_path;   // empty = not available
    std::string feature_map_path;   // empty = not available
    std::string mean_map_path;      // optional
    std::string ground_truth_path;  // optional, simulator/eval only

    bool operator==(const TileRecord&) const = default;
};

inline std::string serialize_tile_record(const TileRecord& rec) {
    nlohmann::ordered_json j;
    j["tile_id"] = rec.tile_id;
    j["source_image_id"] = rec.source_image_id;
    if (!rec.score_stack_path.empty()) j["score_stack_path"] = rec.score_stack_path;
    if (!rec.feature_map_path.empty()) j["feature_map_path"] = rec.feature_map_path;
    if (!rec.mean_map_path.empty()) j["mean_map_path"] = rec.mean_map_path;
    if (!rec.ground_truth_path.empty()) j["ground_truth_path"] = rec.ground_truth_path;
    return j.dump();
}

inline std::vector<TileRecord> parse_catalog(std::istream& in, const std::string& name) {
    std::vector<TileRecord> records;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw io_error(name + ": malformed catalog line " + std::to_string(line_no));
        }
        TileRecord rec;
        try {
            rec.tile_id = j.at("tile_id").get<std::string>();
            rec.source_image_id = j.value("source_image_id", std::string{});
            rec.score_stack_path = j.value("score_stack_path", std::string{});
            rec.feature_map_path = j.value("feature_map_path", std::string{});
            rec.mean_map_path = j.value("mean_map_path", std::string{});
            rec.ground_truth_path = j.value("ground_truth_path", std::string{});
        } catch (const nlohmann::json::exception& e) {
            throw io_error(name + ": malformed catalog line " + std::to_string(line_no) +
                           " (" + e.what() + ")");
        }
        if (rec.tile_id.empty()) {
            throw io_error(name + ": empty tile_id at line " + std::to_string(line_no));
        }
        if (!seen.insert(rec.tile_id).second) {
            throw io_error(name + ": duplicate tile_id \"" + rec.tile_id + "\" at line " +
                           std::to_string(line_no));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<TileRecord> load_catalog(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open: " + path.string());
    }
    return parse_catalog(in, path.string());
}

inline void save_catalog(const std::vector<TileRecord>& records,
                         const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    for (const auto& rec : records) {
        out << serialize_tile_record(rec) << '\n';
    }
    out.flush();
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

// ---------------------------------------------------------------------------
// Selection manifests
// ---------------------------------------------------------------------------

enum class Strategy {
    preselect,
    mc_dropout,
    coreset,
    robust_coreset,
    hybrid_naive,
    hybrid_clustering,
    random,
};

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::preselect: return "preselect";
        case Strategy::mc_dropout: return "mc_dropout";
        case Strategy::coreset: return "coreset";
        case Strategy::robust_coreset: return "robust_coreset";
        case Strategy::hybrid_naive: return "hybrid_naive";
        case Strategy::hybrid_clustering: return "hybrid_clustering";
        case Strategy::random: return "random";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
    for (const Strategy v :
         {Strategy::preselect, Strategy::mc_dropout, Strategy::coreset,
          Strategy::robust_coreset, Strategy::hybrid_naive,
          Strategy::hybrid_clustering, Strategy::random}) {
        if (s == to_string(v)) {
            return v;
        }
    }
    throw precondition_error("unknown strategy \"" + s + "\"");
}

struct SelectionEntry {
    std::string tile_id;
    std::optional<double> score;

    bool operator==(const SelectionEntry&) const = default;
};

struct SelectionManifest {
    Strategy strategy = Strategy::random;
    std::uint64_t budget = 0;
    std::uint64_t seed = 0;
    std::string created_at;
    std::vector<SelectionEntry> selected;

    bool operator==(const SelectionManifest&) const = default;

    std::vector<std::string> tile_ids() const {
        std::vector<std::string> ids;
        ids.reserve(selected.size());
        for (const auto& e : selected) {
            ids.push_back(e.tile_id);
        }
        return ids;
    }
};

namespace detail {

inline void validate_manifest(const SelectionManifest& m, const std::string& where) {
    if (m.budget == 0) {
        throw precondition_error(where + ": budget must be positive");
    }
    if (m.selected.size() != m.budget) {
        throw precondition_error(where + ": has " + std::to_string(m.selected.size()) +
                                 " entries for budget " + std::to_string(m.budget));
    }
    std::unordered_set<std::string> seen;
    for (const auto& e : m.selected) {
        if (!seen.insert(e.tile_id).second) {
            throw precondition_error(where + ": duplicate tile_id \"" + e.tile_id + "\"");
        }
    }
}

}  // namespace detail

inline void save_manifest(const SelectionManifest& m, const std::filesystem::path& path) {
    detail::validate_manifest(m, "save_manifest");
    nlohmann::ordered_json j;
    j["strategy"] = to_string(m.strategy);
    j["budget"] = m.budget;
    j["seed"] = m.seed;
    j["created_at"] = m.created_at;
    auto& sel = j["selected"] = nlohmann::ordered_json::array();
    for (const auto& e : m.selected) {
        nlohmann::ordered_json entry;
        entry["tile_id"] = e.tile_id;
        if (e.score.has_value()) {
            entry["score"] = *e.score;
        } else {
            entry["score"] = nullptr;
        }
        sel.push_back(std::move(entry));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

inline SelectionManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open: " + path.string());
    }
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw io_error("malformed manifest JSON: " + path.string());
    }
    SelectionManifest m;
    try {
        m.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        m.budget = j.at("budget").get<std::uint64_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.created_at = j.value("created_at", std::string{});
        for (const auto& entry : j.at("selected")) {
            SelectionEntry e;
            e.tile_id = entry.at("tile_id").get<std::string>();
            const auto& score = entry.at("score");
            if (!score.is_null()) {
                e.score = score.get<double>();
            }
            m.selected.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed manifest " + path.string() + ": " + e.what());
    } catch (const precondition_error& e) {
        throw io_error("malformed manifest " + path.string() + ": " + e.what());
    }
    try {
        detail::validate_manifest(m, "load_manifest");
    } catch (const precondition_error& e) {
        throw io_error("invalid manifest " + path.string() + ": " + e.what());
    }
    return m;
}

// Resolves a catalog-relative artifact path against the catalog's directory.
inline std::filesystem::path resolve_artifact_path(const std::filesystem::path& base,
                                                   const std::string& path) {
    std::filesystem::path p(path);
    return p.is_absolute() ? p : base / p;
}

}  // namespace alts
