#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pointprop/errors.hpp"

namespace pointprop {

/// Image extent in pixels.
struct Dims {
    int width = 0;
    int height = 0;

    std::size_t pixels() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Pixel coordinate: x is the column, y is the row, both 0-based.
struct Point {
    int x = 0;
    int y = 0;
    friend auto operator<=>(const Point&, const Point&) = default;
};

using PointSet = std::vector<Point>;

/// Immutable row-major single-channel grid. The tag keeps semantically
/// different maps (probabilities, tri-state labels, instance ids) apart.
template <typename T, typename Tag>
class Raster {
public:
    using value_type = T;

    Raster() = default;

    Raster(Dims dims, T fill) : dims_(dims) {
        check_dims(dims);
        data_.assign(dims.pixels(), fill);
    }

    Raster(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
        check_dims(dims);
        if (data_.size() != dims.pixels()) {
            throw DimensionMismatch("raster payload has " + std::to_string(data_.size()) +
                                    " samples, expected " + std::to_string(dims.pixels()));
        }
    }

    Dims dims() const noexcept { return dims_; }
    int width() const noexcept { return dims_.width; }
    int height() const noexcept { return dims_.height; }
    std::size_t size() const noexcept { return data_.size(); }

    T operator[](std::size_t i) const { return data_[i]; }
    T at(int x, int y) const {
        return data_[static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) +
                     static_cast<std::size_t>(x)];
    }
    std::span<const T> values() const noexcept { return data_; }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    static void check_dims(Dims dims) {
        if (dims.width < 1 || dims.height < 1) {
            throw InvalidArgument("raster dimensions must be at least 1x1");
        }
    }

    Dims dims_{};
    std::vector<T> data_;
};

struct ProbTag;
struct GrayTag;
struct TriLabelTag;
struct InstanceTag;
struct MaskTag;
struct DistanceTag;

/// Per-pixel probability of the nucleus class, in [0,1].
using ProbMap = Raster<double, ProbTag>;
/// Single-channel intensity image, in [0,1].
using GrayImage = Raster<double, GrayTag>;
/// Codes: 0 background, 1 nucleus, 2 ignored.
using TriLabelMap = Raster<std::uint8_t, TriLabelTag>;
/// 0 background, k >= 1 instance id.
using InstanceMap = Raster<std::uint32_t, InstanceTag>;
/// 0/1 foreground mask.
using BinaryMask = Raster<std::uint8_t, MaskTag>;
/// Clipped, scaled distance to the nearest annotated point, in [0,1].
using DistanceMap = Raster<double, DistanceTag>;

namespace label {
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kNucleus = 1;
inline constexpr std::uint8_t kIgnored = 2;
}  // namespace label

/// Three-channel color image with per-channel illumination (white point).
class RgbImage {
public:
    RgbImage() = default;
    RgbImage(Dims dims, std::vector<double> samples,
             std::array<double, 3> illumination = {1.0, 1.0, 1.0});

    Dims dims() const noexcept { return dims_; }
    int width() const noexcept { return dims_.width; }
    int height() const noexcept { return dims_.height; }
    std::size_t pixels() const noexcept { return dims_.pixels(); }

    /// Interleaved samples: pixel i channel c at [3*i + c].
    std::span<const double> samples() const noexcept { return samples_; }
    double sample(std::size_t pixel, int channel) const { return samples_[3 * pixel + channel]; }
    const std::array<double, 3>& illumination() const noexcept { return illumination_; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
    Dims dims_{};
    std::vector<double> samples_;
    std::array<double, 3> illumination_{1.0, 1.0, 1.0};
};

/// 3x2 stain appearance matrix (columns are unit optical-density colors)
/// plus the index of the hematoxylin column.
struct StainModel {
    /// Column-major: entry (row r, column c) at [3*c + r].
    std::array<double, 6> appearance{};
    int h_column = 0;

    std::array<double, 3> column(int c) const {
        return {appearance[3 * c], appearance[3 * c + 1], appearance[3 * c + 2]};
    }
    int e_column() const noexcept { return 1 - h_column; }
};

/// Returns the first violated invariant, or nullopt when the value is valid.
std::optional<std::string> validate(const RgbImage& image);
std::optional<std::string> validate(const GrayImage& image);
std::optional<std::string> validate(const ProbMap& map);
std::optional<std::string> validate(const TriLabelMap& map);
std::optional<std::string> validate(const InstanceMap& map);
std::optional<std::string> validate(const StainModel& model);
std::optional<std::string> validate(const PointSet& points);
/// Also checks that every point lies inside `dims`.
std::optional<std::string> validate(const PointSet& points, Dims dims);

/// Relabels instance ids to 1..K in raster order of first appearance.
InstanceMap canonicalize(const InstanceMap& map);

/// Throws InvalidArgument carrying the violation, if any.
template <typename T>
void require_valid(const T& value) {
    if (auto violation = validate(value)) {
        throw InvalidArgument(*violation);
    }
}

}  // namespace pointprop
