#pragma once

#include <cstdint>
#include <vector>

#include "pointprop/core_types.hpp"

namespace pointprop::morph {

enum class Connectivity { Four = 4, Eight = 8 };

struct Components {
    /// 0 for background, 1..count in raster order of each component's first pixel.
    std::vector<std::int32_t> labels;
    /// areas[id - 1] is the pixel count of component id.
    std::vector<std::size_t> areas;

    std::size_t count() const noexcept { return areas.size(); }
};

/// Two-pass union-find labeling of the non-zero pixels of `mask`.
Components label_components(const BinaryMask& mask, Connectivity connectivity);

/// Offsets (dx, dy) with dx^2 + dy^2 <= radius^2.
std::vector<Point> disk(int radius);

/// Pixels outside the image count as background.
BinaryMask erode(const BinaryMask& mask, const std::vector<Point>& element);
BinaryMask dilate(const BinaryMask& mask, const std::vector<Point>& element);
BinaryMask open(const BinaryMask& mask, int radius);

/// Sets every background pixel not 4-connected to the border.
BinaryMask fill_holes(const BinaryMask& mask);

/// Drops components smaller than min_area.
BinaryMask remove_small(const BinaryMask& mask, std::size_t min_area, Connectivity connectivity);

}  // namespace pointprop::morph
