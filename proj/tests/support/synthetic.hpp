#pragma once

// Hand-rolled generators shared by the unit, property and acceptance tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "pointprop/core_types.hpp"

namespace testkit {

using namespace pointprop;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean, double sd) { return std::normal_distribution<double>(mean, sd)(engine_); }
    bool coin(double p = 0.5) { return uniform() < p; }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

inline Dims random_dims(Rng& rng, int lo, int hi) { return {rng.uniform_int(lo, hi), rng.uniform_int(lo, hi)}; }

/// Distinct points inside dims.
inline PointSet random_points(Rng& rng, Dims dims, int count) {
    std::set<Point> seen;
    PointSet out;
    while (static_cast<int>(out.size()) < count) {
        const Point p{rng.uniform_int(0, dims.width - 1), rng.uniform_int(0, dims.height - 1)};
        if (seen.insert(p).second) out.push_back(p);
    }
    return out;
}

/// Values in [0,1]; a share of them sit exactly on 0 or 1 to hit the clamp.
inline ProbMap random_probmap(Rng& rng, Dims dims, double extreme_share = 0.1) {
    std::vector<double> v(dims.pixels());
    for (auto& x : v) {
        if (rng.coin(extreme_share)) x = rng.coin() ? 0.0 : 1.0;
        else x = rng.uniform();
    }
    return ProbMap(dims, std::move(v));
}

inline TriLabelMap random_trilabel(Rng& rng, Dims dims) {
    std::vector<std::uint8_t> v(dims.pixels());
    for (auto& x : v) x = static_cast<std::uint8_t>(rng.uniform_int(0, 2));
    return TriLabelMap(dims, std::move(v));
}

inline RgbImage random_rgb(Rng& rng, Dims dims) {
    std::vector<double> v(dims.pixels() * 3);
    for (auto& x : v) x = rng.uniform();
    return RgbImage(dims, std::move(v));
}

/// Up to max_instances filled ellipses and rectangles painted in id order,
/// later shapes overwriting earlier ones. Ids may end up with gaps.
inline InstanceMap random_instances(Rng& rng, Dims dims, int max_instances) {
    std::vector<std::uint32_t> v(dims.pixels(), 0);
    const int count = rng.uniform_int(0, max_instances);
    for (int id = 1; id <= count; ++id) {
        const double cx = rng.uniform(0, dims.width), cy = rng.uniform(0, dims.height);
        const double rx = rng.uniform(1.0, std::max(1.5, dims.width / 3.0));
        const double ry = rng.uniform(1.0, std::max(1.5, dims.height / 3.0));
        const bool box = rng.coin(0.3);
        for (int y = 0; y < dims.height; ++y) {
            for (int x = 0; x < dims.width; ++x) {
                const double dx = (x - cx) / rx, dy = (y - cy) / ry;
                const bool inside = box ? (std::abs(dx) <= 1 && std::abs(dy) <= 1) : (dx * dx + dy * dy <= 1);
                if (inside) v[static_cast<std::size_t>(y) * dims.width + x] = static_cast<std::uint32_t>(id);
            }
        }
    }
    return InstanceMap(dims, std::move(v));
}

/// Random blobs: union of a few discs plus salt noise.
inline BinaryMask random_blobs(Rng& rng, Dims dims, int discs, double noise = 0.02) {
    std::vector<std::uint8_t> v(dims.pixels(), 0);
    for (int i = 0; i < discs; ++i) {
        const double cx = rng.uniform(0, dims.width), cy = rng.uniform(0, dims.height);
        const double r = rng.uniform(1.0, 6.0);
        for (int y = 0; y < dims.height; ++y)
            for (int x = 0; x < dims.width; ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) v[static_cast<std::size_t>(y) * dims.width + x] = 1;
    }
    for (auto& x : v)
        if (rng.coin(noise)) x = 1;
    return BinaryMask(dims, std::move(v));
}

inline std::array<double, 3> normalized(std::array<double, 3> v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

inline double angle_between(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    return std::acos(std::clamp(dot / (na * nb), -1.0, 1.0)) * 180.0 / 3.14159265358979323846;
}

/// Ground truth of a synthetic two-stain image.
struct TwoStainScene {
    RgbImage image;
    std::array<double, 3> h;  // unit OD color of the hematoxylin-like stain
    std::array<double, 3> e;
    std::vector<double> h_density;
    std::vector<double> e_density;
};

/// Dark discs (mostly stain h) on a stroma of stain e, with white gaps.
/// Stain colors are random non-negative unit vectors at least min_angle
/// apart; h is the one closer to the conventional hematoxylin direction.
inline TwoStainScene two_stain_scene(Rng& rng, Dims dims, double min_angle = 30.0) {
    const std::array<double, 3> ref{0.650, 0.704, 0.286};
    std::array<double, 3> a, b;
    do {
        a = normalized({rng.uniform(0.05, 1), rng.uniform(0.05, 1), rng.uniform(0.05, 1)});
        b = normalized({rng.uniform(0.05, 1), rng.uniform(0.05, 1), rng.uniform(0.05, 1)});
    } while (angle_between(a, b) < min_angle);
    if (angle_between(b, ref) < angle_between(a, ref)) std::swap(a, b);

    TwoStainScene s{{}, a, b, std::vector<double>(dims.pixels(), 0.0), std::vector<double>(dims.pixels(), 0.0)};
    const int nuclei = std::max(3, static_cast<int>(dims.pixels() / 300));
    std::vector<std::array<double, 3>> discs;
    for (int i = 0; i < nuclei; ++i) discs.push_back({rng.uniform(0, dims.width), rng.uniform(0, dims.height), rng.uniform(2.5, 6.0)});
    for (int y = 0; y < dims.height; ++y) {
        for (int x = 0; x < dims.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * dims.width + x;
            bool in_disc = false;
            for (const auto& d : discs) in_disc |= (x - d[0]) * (x - d[0]) + (y - d[1]) * (y - d[1]) <= d[2] * d[2];
            const double u = rng.uniform();
            if (in_disc) {
                s.h_density[i] = rng.uniform(0.6, 1.4);
                s.e_density[i] = u < 0.5 ? 0.0 : rng.uniform(0.0, 0.3);
            } else if (u < 0.15) {
                // white gap
            } else {
                s.e_density[i] = rng.uniform(0.2, 0.9);
                s.h_density[i] = u < 0.6 ? 0.0 : rng.uniform(0.0, 0.2);
            }
        }
    }
    std::vector<double> samples(dims.pixels() * 3);
    for (std::size_t i = 0; i < dims.pixels(); ++i) {
        for (int c = 0; c < 3; ++c) {
            samples[3 * i + c] = std::exp(-(a[c] * s.h_density[i] + b[c] * s.e_density[i]));
        }
    }
    s.image = RgbImage(dims, std::move(samples));
    return s;
}

/// Dark nuclei discs on a light pink background, with their centroids.
struct NucleiScene {
    RgbImage image;
    InstanceMap truth;
    PointSet centroids;
};

inline NucleiScene nuclei_scene(Rng& rng, Dims dims, int count, double r_lo = 4.0, double r_hi = 7.0,
                                double noise = 0.03) {
    std::vector<std::array<double, 3>> discs;
    int guard = 0;
    while (static_cast<int>(discs.size()) < count && guard++ < 10000) {
        const double r = rng.uniform(r_lo, r_hi);
        const double cx = std::round(rng.uniform(r + 1, dims.width - r - 2));
        const double cy = std::round(rng.uniform(r + 1, dims.height - r - 2));
        bool clear = true;
        for (const auto& d : discs) {
            const double gap = std::hypot(cx - d[0], cy - d[1]);
            clear &= gap > r + d[2] + 3;
        }
        if (clear) discs.push_back({cx, cy, r});
    }
    std::vector<std::uint32_t> ids(dims.pixels(), 0);
    std::vector<double> samples(dims.pixels() * 3);
    for (int y = 0; y < dims.height; ++y) {
        for (int x = 0; x < dims.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * dims.width + x;
            std::array<double, 3> rgb{0.93, 0.78, 0.85};
            for (std::size_t k = 0; k < discs.size(); ++k) {
                const auto& d = discs[k];
                if ((x - d[0]) * (x - d[0]) + (y - d[1]) * (y - d[1]) <= d[2] * d[2]) {
                    ids[i] = static_cast<std::uint32_t>(k + 1);
                    rgb = {0.30, 0.22, 0.50};
                }
            }
            for (int c = 0; c < 3; ++c) samples[3 * i + c] = std::clamp(rgb[c] + rng.normal(0, noise), 0.0, 1.0);
        }
    }
    NucleiScene s{RgbImage(dims, std::move(samples)), InstanceMap(dims, std::move(ids)), {}};
    for (const auto& d : discs) s.centroids.push_back({static_cast<int>(d[0]), static_cast<int>(d[1])});
    return s;
}

}  // namespace testkit
