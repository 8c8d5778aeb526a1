// Detection-by-segmentation test protocol: threshold the probability maps,
// extract connected components, and count a ground-truth instance as
// detected when a single component covers at least half of its area. A
// component covering no instance at that level is a false positive.
// Sweeping the threshold yields a precision-recall curve.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alts/common.hpp"
#include "alts/parallel.hpp"
#include "alts/tensor_store.hpp"

namespace alts {

struct ProbMap {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<float> values;
};

struct BinaryMask {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<std::uint8_t> values;
};

struct PredictedComponent {
    std::vector<std::uint32_t> pixels;  // linear indices, ascending
};

struct GroundTruthInstance {
    int instance_id = 0;
    std::vector<std::uint32_t> pixels;  // linear indices, ascending
};

struct MatchCounts {
    std::size_t tp = 0;          // ground-truth instances detected
    std::size_t fp = 0;          // components validating no instance
    std::size_t fn = 0;          // ground-truth instances missed
    std::size_t components = 0;  // total predicted components
};

struct PRPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct PRCurve {
    std::vector<PRPoint> points;
};

inline ProbMap prob_map_from_tensor(const Tensor& t) {
    if (t.dims.size() != 2) {
        throw precondition_error("probability map tensor must have dims [H,W]");
    }
    ProbMap map;
    map.height = t.dims[0];
    map.width = t.dims[1];
    map.values = t.data;
    return map;
}

namespace detail {

inline void validate_prob_map(const ProbMap& map, const std::string& where) {
    const std::size_t expect = static_cast<std::size_t>(map.height) * map.width;
    if (map.height == 0 || map.width == 0 || map.values.size() != expect) {
        throw precondition_error(where + ": map buffer does not match dimensions");
    }
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const float v = map.values[i];
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
            throw precondition_error(where + ": value out of [0,1] at index " +
                                     std::to_string(i));
        }
    }
}

}  // namespace detail

inline BinaryMask threshold_map(const ProbMap& map, double t) {
    detail::validate_prob_map(map, "threshold_map");
    if (!(t >= 0.0) || t > 1.0) {
        throw precondition_error("threshold_map: threshold must be in [0,1]");
    }
    BinaryMask mask;
    mask.height = map.height;
    mask.width = map.width;
    mask.values.resize(map.values.size());
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        mask.values[i] = map.values[i] >= t ? 1 : 0;
    }
    return mask;
}

// Maximal connected components via two-pass union-find. Components are
// ordered by their smallest (row, col) pixel; pixel lists are ascending.
inline std::vector<PredictedComponent> connected_components(const BinaryMask& mask,
                                                            int connectivity = 8) {
    if (connectivity != 4 && connectivity != 8) {
        throw precondition_error("connected_components: connectivity must be 4 or 8");
    }
    const std::size_t h = mask.height;
    const std::size_t w = mask.width;
    if (mask.values.size() != h * w) {
        throw precondition_error("connected_components: mask buffer mismatch");
    }

    constexpr std::uint32_t none = 0xFFFFFFFFu;
    std::vector<std::uint32_t> parent;
    std::vector<std::uint32_t> label(h * w, none);

    auto find = [&](std::uint32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    auto unite = [&](std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) {
            if (b < a) {
                std::swap(a, b);
            }
            parent[b] = a;
        }
    };

    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t p = r * w + c;
            if (!mask.values[p]) {
                continue;
            }
            std::uint32_t lab = none;
            auto consider = [&](std::size_t rr, std::size_t cc) {
                const std::size_t q = rr * w + cc;
                if (label[q] == none) {
                    return;
                }
                if (lab == none) {
                    lab = label[q];
                } else {
                    unite(lab, label[q]);
                }
            };
            if (c > 0) consider(r, c - 1);
            if (r > 0) {
                consider(r - 1, c);
                if (connectivity == 8) {
                    if (c > 0) consider(r - 1, c - 1);
                    if (c + 1 < w) consider(r - 1, c + 1);
                }
            }
            if (lab == none) {
                lab = static_cast<std::uint32_t>(parent.size());
                parent.push_back(lab);
            }
            label[p] = lab;
        }
    }

    // Compact provisional labels in row-major first-encounter order; the
    // first pixel met is the component's smallest (row, col).
    std::vector<std::uint32_t> compact(parent.size(), none);
    std::vector<PredictedComponent> components;
    for (std::size_t p = 0; p < h * w; ++p) {
        if (label[p] == none) {
            continue;
        }
        const std::uint32_t root = find(label[p]);
        if (compact[root] == none) {
            compact[root] = static_cast<std::uint32_t>(components.size());
            components.emplace_back();
        }
        components[compact[root]].pixels.push_back(static_cast<std::uint32_t>(p));
    }
    return components;
}

// Integer-labeled instance map (0 = background, n = instance n) to instance
// pixel sets, ascending by label.
inline std::vector<GroundTruthInstance> gt_instances_from_labels(
    const std::vector<float>& labels, std::uint32_t height, std::uint32_t width) {
    if (labels.size() != static_cast<std::size_t>(height) * width) {
        throw precondition_error("gt_instances_from_labels: buffer mismatch");
    }
    std::map<int, GroundTruthInstance> by_label;
    for (std::size_t p = 0; p < labels.size(); ++p) {
        const float v = labels[p];
        if (!std::isfinite(v) || v < 0.0f || v != std::floor(v) || v > 1e9f) {
            throw precondition_error(
                "gt_instances_from_labels: labels must be non-negative integers");
        }
        const int lab = static_cast<int>(v);
        if (lab == 0) {
            continue;
        }
        auto& inst = by_label[lab];
        inst.instance_id = lab;
        inst.pixels.push_back(static_cast<std::uint32_t>(p));
    }
    std::vector<GroundTruthInstance> instances;
    instances.reserve(by_label.size());
    for (auto& [lab, inst] : by_label) {
        instances.push_back(std::move(inst));
    }
    return instances;
}

// 50%-area rule: an instance is detected when one component covers at least
// half of its pixels; a component is a false positive when it reaches that
// level for no instance. One component may validate several instances but
// counts once toward precision.
inline MatchCounts match_detections(std::uint32_t height, std::uint32_t width,
                                    const std::vector<PredictedComponent>& components,
                                    const std::vector<GroundTruthInstance>& instances) {
    const std::size_t grid = static_cast<std::size_t>(height) * width;
    constexpr std::uint32_t none = 0xFFFFFFFFu;
    std::vector<std::uint32_t> comp_of(grid, none);
    for (std::size_t c = 0; c < components.size(); ++c) {
        if (components[c].pixels.empty()) {
            throw precondition_error("match_detections: empty component");
        }
        for (const std::uint32_t p : components[c].pixels) {
            if (p >= grid) {
                throw precondition_error("match_detections: component pixel off grid");
            }
            if (comp_of[p] != none) {
                throw precondition_error("match_detections: components overlap");
            }
            comp_of[p] = static_cast<std::uint32_t>(c);
        }
    }

    std::vector<char> comp_validates(components.size(), 0);
    MatchCounts counts;
    counts.components = components.size();
    for (const auto& inst : instances) {
        if (inst.pixels.empty()) {
            throw precondition_error("match_detections: empty ground-truth instance");
        }
        std::map<std::uint32_t, std::size_t> overlap;
        for (const std::uint32_t p : inst.pixels) {
            if (p >= grid) {
                throw precondition_error("match_detections: instance pixel off grid");
            }
            const std::uint32_t c = comp_of[p];
            if (c != none) {
                ++overlap[c];
            }
        }
        bool detected = false;
        for (const auto& [c, n] : overlap) {
            if (2 * n >= inst.pixels.size()) {
                comp_validates[c] = 1;
                detected = true;
            }
        }
        if (detected) {
            ++counts.tp;
        } else {
            ++counts.fn;
        }
    }
    std::size_t validated = 0;
    for (const char v : comp_validates) {
        validated += v ? 1 : 0;
    }
    counts.fp = components.size() - validated;
    return counts;
}

// Precision-recall sweep over a threshold grid. Precision counts components
// (tp_det / (tp_det + fp), defined as 1 with no components); recall counts
// instances (tp / (tp + fn), defined as 1 with no instances).
inline PRCurve pr_curve(const std::vector<ProbMap>& maps,
                        const std::vector<std::vector<GroundTruthInstance>>& gt_sets,
                        const std::vector<double>& thresholds, int connectivity = 8,
                        unsigned threads = 0) {
    if (maps.size() != gt_sets.size()) {
        throw precondition_error("pr_curve: maps and ground truth sets misaligned");
    }
    if (maps.empty()) {
        throw precondition_error("pr_curve: no images");
    }
    if (thresholds.empty()) {
        throw precondition_error("pr_curve: empty threshold grid");
    }
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] >= 0.0) || thresholds[i] > 1.0) {
            throw precondition_error("pr_curve: threshold out of [0,1]");
        }
        if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
            throw precondition_error("pr_curve: thresholds must be strictly increasing");
        }
    }
    for (std::size_t i = 0; i < maps.size(); ++i) {
        detail::validate_prob_map(maps[i], "pr_curve: image " + std::to_string(i));
        const std::size_t grid =
            static_cast<std::size_t>(maps[i].height) * maps[i].width;
        for (const auto& inst : gt_sets[i]) {
            for (const std::uint32_t p : inst.pixels) {
                if (p >= grid) {
                    throw precondition_error("pr_curve: ground truth off grid in image " +
                                             std::to_string(i));
                }
            }
        }
    }

    PRCurve curve;
    curve.points.reserve(thresholds.size());
    for (const double t : thresholds) {
        std::vector<MatchCounts> per_image(maps.size());
        parallel_for(maps.size(), threads, [&](std::size_t i) {
            const BinaryMask mask = threshold_map(maps[i], t);
            const auto components = connected_components(mask, connectivity);
            per_image[i] =
                match_detections(maps[i].height, maps[i].width, components, gt_sets[i]);
        });
        MatchCounts total;
        for (const auto& c : per_image) {
            total.tp += c.tp;
            total.fp += c.fp;
            total.fn += c.fn;
            total.components += c.components;
        }
        PRPoint point;
        point.threshold = t;
        const std::size_t tp_det = total.components - total.fp;
        point.precision = total.components == 0
                              ? 1.0
                              : static_cast<double>(tp_det) /
                                    static_cast<double>(total.components);
        const std::size_t gt_total = total.tp + total.fn;
        point.recall = gt_total == 0 ? 1.0
                                     : static_cast<double>(total.tp) /
                                           static_cast<double>(gt_total);
        curve.points.push_back(point);
    }
    return curve;
}

inline std::vector<double> default_thresholds() {
    std::vector<double> grid;
    grid.reserve(19);
    for (int i = 1; i <= 19; ++i) {
        grid.push_back(static_cast<double>(5 * i) / 100.0);
    }
    return grid;
}

inline void write_pr_json(const PRCurve& curve, const std::filesystem::path& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& p : curve.points) {
        nlohmann::ordered_json point;
        point["threshold"] = p.threshold;
        point["precision"] = p.precision;
        point["recall"] = p.recall;
        j.push_back(std::move(point));
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

inline void write_pr_csv(const PRCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path.string());
    }
    out << "threshold,precision,recall\n";
    for (const auto& p : curve.points) {
        nlohmann::json t = p.threshold, prec = p.precision, rec = p.recall;
        out << t.dump() << ',' << prec.dump() << ',' << rec.dump() << '\n';
    }
    if (!out) {
        throw io_error("write failed: " + path.string());
    }
}

}  // namespace alts
