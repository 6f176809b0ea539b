#pragma once

#include <cstdint>
#include <vector>

#include "pointprop/core_types.hpp"

namespace pointprop::coarse {

// ---------------------------------------------------------------------------
// Voronoi labels
// ---------------------------------------------------------------------------

struct VoronoiConfig {
    /// Disk radius around each point labelled as nucleus.
    int point_radius = 2;
    /// Target ridge width. The undilated ridge is two pixels wide (both sides
    /// of a cell boundary); wider values dilate it by (edge_width - 1) / 2
    /// pixels in Chebyshev distance. 0 disables the ridge.
    int edge_width = 2;
};

using CellMap = Raster<std::int32_t, struct CellTag>;

/// Index of the nearest point for every pixel (squared Euclidean distance,
/// ties toward the lower point index).
CellMap voronoi_cells(const PointSet& points, Dims dims);

/// Pixels whose cell differs from one of their 4-neighbors.
BinaryMask cell_ridges(const CellMap& cells);

TriLabelMap voronoi_label(const PointSet& points, Dims dims, const VoronoiConfig& cfg = {});

// ---------------------------------------------------------------------------
// Cluster labels
// ---------------------------------------------------------------------------

struct ClusterConfig {
    int k = 3;
    double rgb_weight = 1.0;
    double dist_weight = 0.5;
    double d_max = 20.0;
    int kmeans_iters = 100;
    double kmeans_tol = 1e-4;
    std::uint64_t seed = 0;
    int min_area = 20;
    int opening_radius = 1;
};

/// Throws InvalidArgument if the configuration breaks an invariant.
void check(const ClusterConfig& cfg);

/// min(distance to nearest point, d_max) / d_max.
DistanceMap distance_map(const PointSet& points, Dims dims, double d_max = 20.0);

/// Row-major feature matrix, `dim` values per pixel.
struct Features {
    int dim = 0;
    std::vector<double> values;

    std::size_t count() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
};

/// (w_rgb R, w_rgb G, w_rgb B, w_dist d) per pixel.
Features kmeans_features(const RgbImage& image, const DistanceMap& dmap, const ClusterConfig& cfg);

struct KMeansConfig {
    int k = 3;
    std::uint64_t seed = 0;
    int iters = 100;
    double tol = 1e-4;
};

struct KMeansResult {
    std::vector<int> assignments;
    Features centroids;
    /// Sum of squared distances to the assigned centroid after each assignment step.
    std::vector<double> objective_history;
    int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations. An emptied cluster is
/// re-seeded at the point farthest from its assigned centroid.
KMeansResult kmeans(const Features& features, const KMeansConfig& cfg);

/// Cluster with the smallest mean distance feature becomes nucleus, the
/// largest background, the rest ignored. Ties prefer the darker cluster as
/// nucleus, then the cluster whose first pixel comes first.
TriLabelMap classify_clusters(const std::vector<int>& assignments, int k, const DistanceMap& dmap,
                              const RgbImage& image);

/// Morphological cleanup of the nucleus class: drop small 8-connected
/// components, open with a disk, drop fragments the opening left below
/// min_area, then fill holes not reachable from the border.
TriLabelMap refine(const TriLabelMap& raw, const ClusterConfig& cfg);

TriLabelMap cluster_label(const RgbImage& image, const PointSet& points, const ClusterConfig& cfg = {});

}  // namespace pointprop::coarse
