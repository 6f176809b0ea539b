#include "pointprop/coarse_labels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "pointprop/morphology.hpp"

namespace pointprop::coarse {

namespace {

void require_points(const PointSet& points, Dims dims) {
    if (points.empty()) {
        throw InvalidArgument("point set is empty");
    }
    if (auto violation = validate(points, dims)) {
        throw InvalidArgument(*violation);
    }
}

std::size_t index_of(Dims dims, int x, int y) {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(dims.width) + static_cast<std::size_t>(x);
}

}  // namespace

// ---------------------------------------------------------------------------
// Voronoi
// ---------------------------------------------------------------------------

CellMap voronoi_cells(const PointSet& points, Dims dims) {
    require_points(points, dims);

    // Bucket grid sized for about one point per bucket; rings of buckets are
    // searched outward until no unseen bucket can hold a closer point.
    const double area = static_cast<double>(dims.pixels());
    const int bucket = std::max(1, static_cast<int>(std::ceil(std::sqrt(area / static_cast<double>(points.size())))));
    const int gw = (dims.width + bucket - 1) / bucket;
    const int gh = (dims.height + bucket - 1) / bucket;
    std::vector<std::vector<std::int32_t>> buckets(static_cast<std::size_t>(gw) * gh);
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        buckets[static_cast<std::size_t>(p.y / bucket) * gw + p.x / bucket].push_back(static_cast<std::int32_t>(k));
    }

    std::vector<std::int32_t> cells(dims.pixels());
    const int max_ring = std::max(gw, gh);
    for (int y = 0; y < dims.height; ++y) {
        for (int x = 0; x < dims.width; ++x) {
            const int bx = x / bucket;
            const int by = y / bucket;
            std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
            std::int32_t best = -1;
            auto scan = [&](int cx, int cy) {
                if (cx < 0 || cy < 0 || cx >= gw || cy >= gh) {
                    return;
                }
                for (auto k : buckets[static_cast<std::size_t>(cy) * gw + cx]) {
                    const std::int64_t dx = points[k].x - x;
                    const std::int64_t dy = points[k].y - y;
                    const std::int64_t d2 = dx * dx + dy * dy;
                    if (d2 < best_d2 || (d2 == best_d2 && k < best)) {
                        best_d2 = d2;
                        best = k;
                    }
                }
            };
            for (int ring = 0; ring <= max_ring; ++ring) {
                if (ring == 0) {
                    scan(bx, by);
                } else {
                    for (int d = -ring; d <= ring; ++d) {
                        scan(bx + d, by - ring);
                        scan(bx + d, by + ring);
                    }
                    for (int d = -ring + 1; d <= ring - 1; ++d) {
                        scan(bx - ring, by + d);
                        scan(bx + ring, by + d);
                    }
                }
                // Any bucket in ring + 1 is at least ring * bucket + 1 px away.
                const std::int64_t bound = static_cast<std::int64_t>(ring) * bucket + 1;
                if (best >= 0 && best_d2 < bound * bound) {
                    break;
                }
            }
            cells[index_of(dims, x, y)] = best;
        }
    }
    return CellMap(dims, std::move(cells));
}

BinaryMask cell_ridges(const CellMap& cells) {
    const Dims dims = cells.dims();
    std::vector<std::uint8_t> ridge(dims.pixels(), 0);
    for (int y = 0; y < dims.height; ++y) {
        for (int x = 0; x < dims.width; ++x) {
            const auto c = cells.at(x, y);
            const bool differs = (x > 0 && cells.at(x - 1, y) != c) ||
                                 (x + 1 < dims.width && cells.at(x + 1, y) != c) ||
                                 (y > 0 && cells.at(x, y - 1) != c) ||
                                 (y + 1 < dims.height && cells.at(x, y + 1) != c);
            ridge[index_of(dims, x, y)] = differs ? 1 : 0;
        }
    }
    return BinaryMask(dims, std::move(ridge));
}

TriLabelMap voronoi_label(const PointSet& points, Dims dims, const VoronoiConfig& cfg) {
    if (cfg.point_radius < 0 || cfg.edge_width < 0) {
        throw InvalidArgument("point_radius and edge_width must be non-negative");
    }
    const CellMap cells = voronoi_cells(points, dims);
    std::vector<std::uint8_t> codes(dims.pixels(), label::kIgnored);

    if (points.size() >= 2 && cfg.edge_width > 0) {
        BinaryMask ridge = cell_ridges(cells);
        const int grow = (cfg.edge_width - 1) / 2;
        if (grow > 0) {
            std::vector<Point> square;
            for (int dy = -grow; dy <= grow; ++dy) {
                for (int dx = -grow; dx <= grow; ++dx) {
                    square.push_back({dx, dy});
                }
            }
            ridge = morph::dilate(ridge, square);
        }
        for (std::size_t i = 0; i < codes.size(); ++i) {
            if (ridge[i] != 0) {
                codes[i] = label::kBackground;
            }
        }
    }

    const auto disk = morph::disk(cfg.point_radius);
    for (const auto& p : points) {
        for (const auto& d : disk) {
            const int x = p.x + d.x, y = p.y + d.y;
            if (x >= 0 && y >= 0 && x < dims.width && y < dims.height) {
                codes[index_of(dims, x, y)] = label::kNucleus;
            }
        }
    }
    return TriLabelMap(dims, std::move(codes));
}

// ---------------------------------------------------------------------------
// Distance map
// ---------------------------------------------------------------------------

namespace {

/// Exact 1-D squared distance transform by lower envelope of parabolas.
void squared_distance_1d(const std::vector<double>& f, std::vector<double>& d,
                         std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == inf) {
            continue;
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        auto intersect = [&](int r) {
            return ((f[q] + static_cast<double>(q) * q) - (f[r] + static_cast<double>(r) * r)) /
                   (2.0 * (q - r));
        };
        double s = intersect(v[k]);
        while (s <= z[k]) {  // z[0] = -inf ends the loop
            --k;
            s = intersect(v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    if (k < 0) {
        std::fill(d.begin(), d.end(), inf);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) {
            ++j;
        }
        const double dq = q - v[j];
        d[q] = dq * dq + f[v[j]];
    }
}

}  // namespace

DistanceMap distance_map(const PointSet& points, Dims dims, double d_max) {
    require_points(points, dims);
    if (!(d_max > 0.0)) {
        throw InvalidArgument("d_max must be positive");
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> grid(dims.pixels(), inf);
    for (const auto& p : points) {
        grid[index_of(dims, p.x, p.y)] = 0.0;
    }

    const int longest = std::max(dims.width, dims.height);
    std::vector<double> f(longest), d(longest), z(longest + 1);
    std::vector<int> v(longest);

    f.resize(dims.height);
    d.resize(dims.height);
    for (int x = 0; x < dims.width; ++x) {
        for (int y = 0; y < dims.height; ++y) f[y] = grid[index_of(dims, x, y)];
        squared_distance_1d(f, d, v, z);
        for (int y = 0; y < dims.height; ++y) grid[index_of(dims, x, y)] = d[y];
    }
    f.resize(dims.width);
    d.resize(dims.width);
    for (int y = 0; y < dims.height; ++y) {
        for (int x = 0; x < dims.width; ++x) f[x] = grid[index_of(dims, x, y)];
        squared_distance_1d(f, d, v, z);
        for (int x = 0; x < dims.width; ++x) grid[index_of(dims, x, y)] = d[x];
    }

    for (double& g : grid) {
        g = std::min(std::sqrt(g), d_max) / d_max;
    }
    return DistanceMap(dims, std::move(grid));
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

void check(const ClusterConfig& cfg) {
    if (cfg.k != 3) throw InvalidArgument("cluster count k must be 3");
    if (!(cfg.rgb_weight > 0.0) || !(cfg.dist_weight > 0.0)) throw InvalidArgument("feature weights must be positive");
    if (!(cfg.d_max > 0.0)) throw InvalidArgument("d_max must be positive");
    if (cfg.kmeans_iters < 1) throw InvalidArgument("kmeans_iters must be at least 1");
    if (!(cfg.kmeans_tol >= 0.0)) throw InvalidArgument("kmeans_tol must be non-negative");
    if (cfg.min_area < 0) throw InvalidArgument("min_area must be non-negative");
    if (cfg.opening_radius < 0) throw InvalidArgument("opening_radius must be non-negative");
}

Features kmeans_features(const RgbImage& image, const DistanceMap& dmap, const ClusterConfig& cfg) {
    if (image.dims() != dmap.dims()) {
        throw DimensionMismatch("image and distance map dimensions differ");
    }
    Features f{4, std::vector<double>(4 * image.pixels())};
    for (std::size_t i = 0; i < image.pixels(); ++i) {
        for (int c = 0; c < 3; ++c) {
            f.values[4 * i + c] = cfg.rgb_weight * image.sample(i, c);
        }
        f.values[4 * i + 3] = cfg.dist_weight * dmap[i];
    }
    return f;
}

namespace {

double squared_distance(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

bool has_k_distinct(const Features& f, int k) {
    std::vector<const double*> distinct;
    for (std::size_t i = 0; i < f.count() && static_cast<int>(distinct.size()) < k; ++i) {
        const double* row = &f.values[i * f.dim];
        const bool seen = std::any_of(distinct.begin(), distinct.end(), [&](const double* other) {
            return std::equal(row, row + f.dim, other);
        });
        if (!seen) {
            distinct.push_back(row);
        }
    }
    return static_cast<int>(distinct.size()) >= k;
}

}  // namespace

KMeansResult kmeans(const Features& features, const KMeansConfig& cfg) {
    if (cfg.k < 1) {
        throw InvalidArgument("k must be positive");
    }
    if (features.dim < 1 || features.values.size() % features.dim != 0) {
        throw InvalidArgument("malformed feature matrix");
    }
    if (!has_k_distinct(features, cfg.k)) {
        throw InvalidArgument("k-means needs at least " + std::to_string(cfg.k) + " distinct feature vectors");
    }
    const std::size_t n = features.count();
    const int dim = features.dim;
    const int k = cfg.k;
    auto row = [&](std::size_t i) { return &features.values[i * dim]; };

    std::mt19937_64 rng(cfg.seed);
    std::vector<double> centroids;
    centroids.reserve(static_cast<std::size_t>(k) * dim);

    // k-means++ seeding.
    {
        std::uniform_int_distribution<std::size_t> first(0, n - 1);
        const std::size_t pick = first(rng);
        centroids.insert(centroids.end(), row(pick), row(pick) + dim);
        std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
        for (int c = 1; c < k; ++c) {
            const double* last = &centroids[static_cast<std::size_t>(c - 1) * dim];
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                nearest[i] = std::min(nearest[i], squared_distance(row(i), last, dim));
                total += nearest[i];
            }
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            std::size_t chosen = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (nearest[i] <= 0.0) continue;
                chosen = i;
                target -= nearest[i];
                if (target <= 0.0) break;
            }
            centroids.insert(centroids.end(), row(chosen), row(chosen) + dim);
        }
    }

    KMeansResult result;
    result.assignments.assign(n, 0);
    std::vector<double> dist2(n);

    auto assign = [&]() {
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(row(i), &centroids[0], dim);
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(row(i), &centroids[static_cast<std::size_t>(c) * dim], dim);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            result.assignments[i] = best;
            dist2[i] = best_d;
            objective += best_d;
        }
        result.objective_history.push_back(objective);
    };

    std::vector<double> sums(static_cast<std::size_t>(k) * dim);
    std::vector<std::size_t> counts(k);
    for (int iter = 0; iter < cfg.iters; ++iter) {
        assign();
        result.iterations = iter + 1;

        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[result.assignments[i]];
        for (int c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            // Move the worst-fitting point (from a cluster that can spare it).
            std::size_t worst = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[result.assignments[i]] > 1 && (worst == n || dist2[i] > dist2[worst])) {
                    worst = i;
                }
            }
            --counts[result.assignments[worst]];
            result.assignments[worst] = c;
            dist2[worst] = 0.0;
            counts[c] = 1;
        }

        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* s = &sums[static_cast<std::size_t>(result.assignments[i]) * dim];
            for (int j = 0; j < dim; ++j) s[j] += row(i)[j];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            double moved = 0.0;
            for (int j = 0; j < dim; ++j) {
                const std::size_t idx = static_cast<std::size_t>(c) * dim + j;
                const double updated = sums[idx] / static_cast<double>(counts[c]);
                moved += (updated - centroids[idx]) * (updated - centroids[idx]);
                centroids[idx] = updated;
            }
            shift = std::max(shift, std::sqrt(moved));
        }
        if (shift < cfg.tol) {
            break;
        }
    }
    assign();

    result.centroids = Features{dim, std::move(centroids)};
    return result;
}

TriLabelMap classify_clusters(const std::vector<int>& assignments, int k, const DistanceMap& dmap,
                              const RgbImage& image) {
    if (assignments.size() != dmap.size() || image.dims() != dmap.dims()) {
        throw DimensionMismatch("assignments, distance map and image must match");
    }
    struct Stats {
        int id = 0;
        std::size_t count = 0;
        double dist = 0.0;
        double brightness = 0.0;
        std::size_t first_pixel = 0;
    };
    std::vector<Stats> stats(k);
    for (int c = 0; c < k; ++c) stats[c].id = c;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        const int c = assignments[i];
        if (c < 0 || c >= k) {
            throw InvalidArgument("cluster id out of range");
        }
        auto& s = stats[c];
        if (s.count == 0) s.first_pixel = i;
        ++s.count;
        s.dist += dmap[i];
        s.brightness += (image.sample(i, 0) + image.sample(i, 1) + image.sample(i, 2)) / 3.0;
    }
    std::erase_if(stats, [](const Stats& s) { return s.count == 0; });
    for (auto& s : stats) {
        s.dist /= static_cast<double>(s.count);
        s.brightness /= static_cast<double>(s.count);
    }
    std::sort(stats.begin(), stats.end(), [](const Stats& a, const Stats& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.brightness != b.brightness) return a.brightness < b.brightness;
        return a.first_pixel < b.first_pixel;
    });

    std::vector<std::uint8_t> code_of(k, label::kIgnored);
    code_of[stats.front().id] = label::kNucleus;
    if (stats.size() > 1) {
        code_of[stats.back().id] = label::kBackground;
    }
    std::vector<std::uint8_t> codes(assignments.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        codes[i] = code_of[assignments[i]];
    }
    return TriLabelMap(dmap.dims(), std::move(codes));
}

TriLabelMap refine(const TriLabelMap& raw, const ClusterConfig& cfg) {
    if (cfg.min_area < 0 || cfg.opening_radius < 0) {
        throw InvalidArgument("min_area and opening_radius must be non-negative");
    }
    std::vector<std::uint8_t> nucleus(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        nucleus[i] = raw[i] == label::kNucleus ? 1 : 0;
    }
    const auto min_area = static_cast<std::size_t>(cfg.min_area);
    BinaryMask mask(raw.dims(), std::move(nucleus));
    mask = morph::remove_small(mask, min_area, morph::Connectivity::Eight);
    mask = morph::open(mask, cfg.opening_radius);
    // The opening can split a component into fragments below min_area.
    mask = morph::remove_small(mask, min_area, morph::Connectivity::Eight);
    mask = morph::fill_holes(mask);

    std::vector<std::uint8_t> codes(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (mask[i] != 0) {
            codes[i] = label::kNucleus;
        } else if (raw[i] == label::kNucleus) {
            codes[i] = label::kIgnored;
        } else {
            codes[i] = raw[i];
        }
    }
    return TriLabelMap(raw.dims(), std::move(codes));
}

TriLabelMap cluster_label(const RgbImage& image, const PointSet& points, const ClusterConfig& cfg) {
    check(cfg);
    require_points(points, image.dims());
    const DistanceMap dmap = distance_map(points, image.dims(), cfg.d_max);
    const Features features = kmeans_features(image, dmap, cfg);
    const KMeansResult km = kmeans(features, {cfg.k, cfg.seed, cfg.kmeans_iters, cfg.kmeans_tol});
    const TriLabelMap raw = classify_clusters(km.assignments, cfg.k, dmap, image);
    const TriLabelMap refined = refine(raw, cfg);

    std::vector<std::uint8_t> codes(refined.values().begin(), refined.values().end());
    for (const auto& p : points) {
        codes[index_of(image.dims(), p.x, p.y)] = label::kNucleus;
    }
    return TriLabelMap(image.dims(), std::move(codes));
}

}  // namespace pointprop::coarse
