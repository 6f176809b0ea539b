#include "pointprop/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <random>
#include <set>

#include "pointprop/morphology.hpp"

namespace pointprop::metrics {

namespace {

template <typename A, typename B>
void require_same_dims(const A& a, const B& b, const char* what) {
    if (a.dims() != b.dims()) {
        throw DimensionMismatch(std::string(what) + ": dimensions differ");
    }
}

struct Confusion {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
};

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt) {
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0;
        const bool g = gt[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

/// Pixel counts per instance and per (gt, pred) overlapping pair.
struct OverlapTable {
    std::map<std::uint32_t, std::uint64_t> gt_area;
    std::map<std::uint32_t, std::uint64_t> pred_area;
    std::map<std::uint32_t, std::map<std::uint32_t, std::uint64_t>> gt_to_pred;
    std::map<std::uint32_t, std::map<std::uint32_t, std::uint64_t>> pred_to_gt;
    std::uint64_t gt_total = 0;
    std::uint64_t pred_total = 0;
};

OverlapTable tabulate(const InstanceMap& gt, const InstanceMap& pred) {
    OverlapTable t;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const auto g = gt[i];
        const auto p = pred[i];
        if (g != 0) {
            ++t.gt_area[g];
            ++t.gt_total;
        }
        if (p != 0) {
            ++t.pred_area[p];
            ++t.pred_total;
        }
        if (g != 0 && p != 0) {
            ++t.gt_to_pred[g][p];
            ++t.pred_to_gt[p][g];
        }
    }
    return t;
}

/// One side of object Dice: sum over `areas` of weight * Dice(obj, best match).
double weighted_side(const std::map<std::uint32_t, std::uint64_t>& areas, std::uint64_t total,
                     const std::map<std::uint32_t, std::uint64_t>& other_areas,
                     const std::map<std::uint32_t, std::map<std::uint32_t, std::uint64_t>>& overlaps) {
    if (total == 0) {
        return 0.0;
    }
    // Accumulate area * Dice and divide once, so a perfect match gives exactly 1.
    double sum = 0.0;
    for (const auto& [id, area] : areas) {
        const auto it = overlaps.find(id);
        if (it == overlaps.end()) {
            continue;  // no overlap: Dice 0
        }
        std::uint32_t best = 0;
        std::uint64_t best_overlap = 0;
        for (const auto& [other, count] : it->second) {
            if (count > best_overlap) {
                best_overlap = count;
                best = other;
            }
        }
        const double dice = 2.0 * static_cast<double>(best_overlap) /
                            static_cast<double>(area + other_areas.at(best));
        sum += static_cast<double>(area) * dice;
    }
    return sum / static_cast<double>(total);
}

}  // namespace

BinaryMask binarize(const ProbMap& prob, double threshold) {
    std::vector<std::uint8_t> out(prob.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = prob[i] >= threshold ? 1 : 0;
    }
    return BinaryMask(prob.dims(), std::move(out));
}

InstanceMap instances(const BinaryMask& mask, int min_area) {
    if (min_area < 0) {
        throw InvalidArgument("min_area must be non-negative");
    }
    const auto components = morph::label_components(mask, morph::Connectivity::Eight);
    std::vector<std::uint32_t> remap(components.count() + 1, 0);
    std::uint32_t next = 0;
    for (std::size_t id = 1; id <= components.count(); ++id) {
        if (components.areas[id - 1] >= static_cast<std::size_t>(min_area)) {
            remap[id] = ++next;
        }
    }
    std::vector<std::uint32_t> ids(mask.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = remap[static_cast<std::size_t>(components.labels[i])];
    }
    return InstanceMap(mask.dims(), std::move(ids));
}

BinaryMask foreground(const InstanceMap& map) {
    std::vector<std::uint8_t> out(map.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = map[i] != 0 ? 1 : 0;
    }
    return BinaryMask(map.dims(), std::move(out));
}

double pixel_accuracy(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_dims(pred, gt, "pixel_accuracy");
    const auto c = confusion(pred, gt);
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(pred.size());
}

double f1(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_dims(pred, gt, "f1");
    const auto c = confusion(pred, gt);
    const auto denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double dice_obj(const InstanceMap& gt, const InstanceMap& pred) {
    require_same_dims(gt, pred, "dice_obj");
    const auto t = tabulate(gt, pred);
    if (t.gt_total == 0 && t.pred_total == 0) {
        return 1.0;
    }
    return 0.5 * (weighted_side(t.gt_area, t.gt_total, t.pred_area, t.gt_to_pred) +
                  weighted_side(t.pred_area, t.pred_total, t.gt_area, t.pred_to_gt));
}

double aji(const InstanceMap& gt, const InstanceMap& pred) {
    require_same_dims(gt, pred, "aji");
    const auto t = tabulate(gt, pred);
    if (t.gt_total == 0 && t.pred_total == 0) {
        return 1.0;
    }
    std::uint64_t intersection = 0;
    std::uint64_t union_ = 0;
    std::set<std::uint32_t> used;
    for (const auto& [g, g_area] : t.gt_area) {
        std::uint32_t best = 0;
        std::uint64_t best_inter = 0, best_union = 1;
        if (const auto it = t.gt_to_pred.find(g); it != t.gt_to_pred.end()) {
            for (const auto& [p, inter] : it->second) {
                if (used.contains(p)) {
                    continue;
                }
                const std::uint64_t uni = g_area + t.pred_area.at(p) - inter;
                // inter/uni > best_inter/best_union, exact in integers; ties keep the lower id.
                if (best == 0 || inter * best_union > best_inter * uni) {
                    best = p;
                    best_inter = inter;
                    best_union = uni;
                }
            }
        }
        if (best == 0) {
            union_ += g_area;
        } else {
            intersection += best_inter;
            union_ += best_union;
            used.insert(best);
        }
    }
    for (const auto& [p, p_area] : t.pred_area) {
        if (!used.contains(p)) {
            union_ += p_area;
        }
    }
    return static_cast<double>(intersection) / static_cast<double>(union_);
}

MetricReport evaluate(const ProbMap& prob, const InstanceMap& gt, const EvalConfig& cfg) {
    require_same_dims(prob, gt, "evaluate");
    const BinaryMask pred_mask = binarize(prob, cfg.threshold);
    const InstanceMap pred = instances(pred_mask, cfg.min_area);
    const BinaryMask gt_mask = foreground(gt);
    return {pixel_accuracy(pred_mask, gt_mask), f1(pred_mask, gt_mask), dice_obj(gt, pred), aji(gt, pred)};
}

PointSet perturb_points(const PointSet& points, int max_shift, std::uint64_t seed, Dims dims) {
    if (max_shift < 0) {
        throw InvalidArgument("max_shift must be non-negative");
    }
    if (auto violation = validate(points, dims)) {
        throw InvalidArgument(*violation);
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> offset(-max_shift, max_shift);
    std::set<Point> taken;
    PointSet out;
    out.reserve(points.size());

    auto clamp_to_image = [&](Point p) {
        return Point{std::clamp(p.x, 0, dims.width - 1), std::clamp(p.y, 0, dims.height - 1)};
    };
    constexpr int kRedraws = 16;
    for (const auto& p : points) {
        Point candidate{};
        bool placed = false;
        for (int attempt = 0; attempt <= kRedraws && !placed; ++attempt) {
            const int dx = offset(rng);
            const int dy = offset(rng);
            candidate = clamp_to_image({p.x + dx, p.y + dy});
            placed = !taken.contains(candidate);
        }
        // Nudge: first free pixel on growing square rings, row by row.
        const int max_ring = std::max(dims.width, dims.height);
        for (int ring = 1; !placed && ring <= max_ring; ++ring) {
            for (int dy = -ring; dy <= ring && !placed; ++dy) {
                for (int dx = -ring; dx <= ring && !placed; ++dx) {
                    if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
                    const Point q{candidate.x + dx, candidate.y + dy};
                    if (q.x < 0 || q.y < 0 || q.x >= dims.width || q.y >= dims.height) continue;
                    if (!taken.contains(q)) {
                        candidate = q;
                        placed = true;
                    }
                }
            }
        }
        if (!placed) {
            throw InvalidArgument("no free pixel left for a perturbed point");
        }
        taken.insert(candidate);
        out.push_back(candidate);
    }
    return out;
}

double in_nucleus_ratio(const PointSet& points, const InstanceMap& gt) {
    if (points.empty()) {
        throw InvalidArgument("in_nucleus_ratio needs at least one point");
    }
    if (auto violation = validate(points, gt.dims())) {
        throw InvalidArgument(*violation);
    }
    std::size_t inside = 0;
    for (const auto& p : points) {
        if (gt.at(p.x, p.y) != 0) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(points.size());
}

double trilabel_accuracy(const TriLabelMap& labels, const BinaryMask& gt) {
    require_same_dims(labels, gt, "trilabel_accuracy");
    std::size_t counted = 0, correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label::kIgnored) continue;
        ++counted;
        if ((labels[i] == label::kNucleus) == (gt[i] != 0)) ++correct;
    }
    if (counted == 0) {
        throw InvalidArgument("trilabel_accuracy: every pixel is ignored");
    }
    return static_cast<double>(correct) / static_cast<double>(counted);
}

}  // namespace pointprop::metrics
