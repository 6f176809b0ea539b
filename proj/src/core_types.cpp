#include "pointprop/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace pointprop {

RgbImage::RgbImage(Dims dims, std::vector<double> samples, std::array<double, 3> illumination)
    : dims_(dims), samples_(std::move(samples)), illumination_(illumination) {
    if (dims.width < 1 || dims.height < 1) {
        throw InvalidArgument("image dimensions must be at least 1x1");
    }
    if (samples_.size() != 3 * dims.pixels()) {
        throw DimensionMismatch("rgb payload has " + std::to_string(samples_.size()) +
                                " samples, expected " + std::to_string(3 * dims.pixels()));
    }
}

namespace {

std::optional<std::string> check_unit_interval(std::span<const double> values,
                                               const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            return std::string("non-finite ") + what;
        }
        if (v < 0.0 || v > 1.0) {
            return std::string(what) + " out of [0,1]";
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> validate(const RgbImage& image) {
    if (auto v = check_unit_interval(image.samples(), "sample")) {
        return v;
    }
    for (double x0 : image.illumination()) {
        if (!std::isfinite(x0) || x0 <= 0.0) {
            return "illumination must be positive and finite";
        }
    }
    return std::nullopt;
}

std::optional<std::string> validate(const GrayImage& image) {
    return check_unit_interval(image.values(), "sample");
}

std::optional<std::string> validate(const ProbMap& map) {
    return check_unit_interval(map.values(), "probability");
}

std::optional<std::string> validate(const TriLabelMap& map) {
    for (auto code : map.values()) {
        if (code > label::kIgnored) {
            return "label code out of range";
        }
    }
    return std::nullopt;
}

std::optional<std::string> validate(const InstanceMap& map) {
    std::uint32_t max_id = 0;
    std::set<std::uint32_t> seen;
    for (auto id : map.values()) {
        if (id != 0) {
            seen.insert(id);
            max_id = std::max(max_id, id);
        }
    }
    if (seen.size() != max_id) {
        return "instance ids have gaps";
    }
    return std::nullopt;
}

std::optional<std::string> validate(const StainModel& model) {
    if (model.h_column != 0 && model.h_column != 1) {
        return "h_column must be 0 or 1";
    }
    for (int c = 0; c < 2; ++c) {
        double norm2 = 0.0;
        for (double v : model.column(c)) {
            if (!std::isfinite(v) || v < 0.0) {
                return "stain column has a negative or non-finite entry";
            }
            norm2 += v * v;
        }
        if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) {
            return "stain column is not unit norm";
        }
    }
    return std::nullopt;
}

std::optional<std::string> validate(const PointSet& points) {
    std::set<Point> seen;
    for (const auto& p : points) {
        if (!seen.insert(p).second) {
            return "duplicate point";
        }
    }
    return std::nullopt;
}

std::optional<std::string> validate(const PointSet& points, Dims dims) {
    for (const auto& p : points) {
        if (p.x < 0 || p.y < 0 || p.x >= dims.width || p.y >= dims.height) {
            return "point out of bounds";
        }
    }
    return validate(points);
}

InstanceMap canonicalize(const InstanceMap& map) {
    std::unordered_map<std::uint32_t, std::uint32_t> relabel;
    std::vector<std::uint32_t> out(map.size(), 0);
    for (std::size_t i = 0; i < map.size(); ++i) {
        auto id = map[i];
        if (id == 0) {
            continue;
        }
        auto [it, inserted] =
            relabel.try_emplace(id, static_cast<std::uint32_t>(relabel.size() + 1));
        out[i] = it->second;
    }
    return InstanceMap(map.dims(), std::move(out));
}

}  // namespace pointprop
