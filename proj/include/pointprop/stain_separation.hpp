#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pointprop/core_types.hpp"

namespace pointprop::stain {

/// Beer-Lambert optical densities, three per pixel, interleaved, all >= 0.
struct OdImage {
    Dims dims;
    std::vector<double> values;

    std::size_t pixels() const noexcept { return dims.pixels(); }
};

/// 2 x n stain concentrations. Row 0 belongs to the hematoxylin stain.
struct DensityMap {
    Dims dims;
    std::array<std::vector<double>, 2> rows;
};

/// Clip floor for intensities before taking the logarithm.
inline constexpr double kIntensityFloor = 1.0 / 255.0;

/// Conventional hematoxylin optical-density direction, used to decide which
/// recovered column is hematoxylin.
inline constexpr std::array<double, 3> kReferenceHematoxylin{0.650, 0.704, 0.286};

OdImage to_od(const RgbImage& image);

struct NmfConfig {
    int iters = 300;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    /// A pixel counts as tissue when its OD L2 norm exceeds this.
    double tissue_threshold = 0.15;
    /// Minimum share of tissue pixels.
    double tissue_fraction = 0.01;
    /// Columns closer than this (degrees) are treated as one stain.
    double min_column_angle_deg = 1.0;
};

struct StainEstimate {
    StainModel model;
    DensityMap density;
    /// ||OD_tissue - W D_tissue||_F^2 after initialization and every update.
    std::vector<double> objective_history;
    /// ||OD - W D||_F / ||OD||_F over all pixels.
    double relative_error = 0.0;
};

/// Factorizes tissue optical densities into two unit stain colors by
/// multiplicative-update NMF, then solves a non-negative least-squares
/// density for every pixel under the recovered colors.
///
/// Throws InsufficientTissue when too few pixels carry stain and
/// DegenerateFactorization when the data support only one stain.
StainEstimate estimate_stains(const OdImage& od, const NmfConfig& cfg = {});

enum class Component { Hematoxylin, Eosin };

/// Keeps only one stain's term of the Beer-Lambert model:
/// x_c = x0_c * exp(-W[c, s] * D[s, i]).
RgbImage reconstruct_component(const std::array<double, 3>& illumination, const StainModel& model,
                               const DensityMap& density, Component which);

/// Channel mean.
GrayImage collapse_to_gray(const RgbImage& image);

/// Angle between two non-zero vectors, in degrees.
double angle_deg(const std::array<double, 3>& a, const std::array<double, 3>& b);

/// Seven whitespace-separated numbers: W column-major, then h_column.
std::string format_stain_model(const StainModel& model);
StainModel parse_stain_model(const std::string& text);
void write_stain_model(const StainModel& model, const std::filesystem::path& path);
StainModel read_stain_model(const std::filesystem::path& path);

}  // namespace pointprop::stain
