#include "pointprop/stain_separation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pointprop/dataio.hpp"

namespace pointprop::stain {

using Vec3 = std::array<double, 3>;

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 od_at(const OdImage& od, std::size_t i) {
    return {od.values[3 * i], od.values[3 * i + 1], od.values[3 * i + 2]};
}

// 3x2 column-major matrix, column c = {w[3c], w[3c+1], w[3c+2]}.
using Mat32 = std::array<double, 6>;

Vec3 col(const Mat32& w, int c) { return {w[3 * c], w[3 * c + 1], w[3 * c + 2]}; }

/// Non-negative least squares min ||v - W h|| over h >= 0 for a 3x2 W.
std::array<double, 2> nnls2(const Mat32& w, const Vec3& v) {
    const Vec3 w0 = col(w, 0);
    const Vec3 w1 = col(w, 1);
    const double g00 = dot(w0, w0), g01 = dot(w0, w1), g11 = dot(w1, w1);
    const double b0 = dot(w0, v), b1 = dot(w1, v);
    const double det = g00 * g11 - g01 * g01;
    if (det > 1e-12 * g00 * g11) {
        const double h0 = (g11 * b0 - g01 * b1) / det;
        const double h1 = (g00 * b1 - g01 * b0) / det;
        if (h0 >= 0.0 && h1 >= 0.0) {
            return {h0, h1};
        }
    }
    // Optimum lies on a face of the orthant: compare the two single-column fits.
    const double only0 = g00 > 0.0 ? std::max(0.0, b0 / g00) : 0.0;
    const double only1 = g11 > 0.0 ? std::max(0.0, b1 / g11) : 0.0;
    // ||v - W h||^2 = |v|^2 - 2 b.h + h' G h
    const double cost0 = -2.0 * b0 * only0 + g00 * only0 * only0;
    const double cost1 = -2.0 * b1 * only1 + g11 * only1 * only1;
    return cost0 <= cost1 ? std::array<double, 2>{only0, 0.0} : std::array<double, 2>{0.0, only1};
}

double objective(const std::vector<Vec3>& v, const Mat32& w, const std::vector<std::array<double, 2>>& h) {
    double total = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        for (int r = 0; r < 3; ++r) {
            const double diff = v[j][r] - (w[r] * h[j][0] + w[3 + r] * h[j][1]);
            total += diff * diff;
        }
    }
    return total;
}

std::size_t farthest_in_angle(const std::vector<Vec3>& v, const Vec3& from) {
    const double from_norm = norm(from);
    std::size_t best = 0;
    double best_cos = 2.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double c = dot(v[j], from) / (norm(v[j]) * from_norm);
        if (c < best_cos) {
            best_cos = c;
            best = j;
        }
    }
    return best;
}

}  // namespace

double angle_deg(const Vec3& a, const Vec3& b) {
    const double c = std::clamp(dot(a, b) / (norm(a) * norm(b)), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

OdImage to_od(const RgbImage& image) {
    const auto& x0 = image.illumination();
    for (double v : x0) {
        if (!(v > 0.0)) {
            throw InvalidArgument("illumination must be positive");
        }
    }
    OdImage od{image.dims(), std::vector<double>(image.samples().size())};
    for (std::size_t i = 0; i < image.pixels(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double x = std::max(image.sample(i, c), kIntensityFloor);
            od.values[3 * i + c] = std::max(0.0, -std::log(x / x0[c]));
        }
    }
    return od;
}

StainEstimate estimate_stains(const OdImage& od, const NmfConfig& cfg) {
    if (od.values.size() != 3 * od.pixels() || od.pixels() == 0) {
        throw DimensionMismatch("optical density payload does not match dimensions");
    }
    if (cfg.iters < 1) {
        throw InvalidArgument("NMF needs at least one iteration");
    }

    std::vector<Vec3> tissue;
    for (std::size_t i = 0; i < od.pixels(); ++i) {
        const Vec3 v = od_at(od, i);
        if (norm(v) > cfg.tissue_threshold) {
            tissue.push_back(v);
        }
    }
    const double needed = std::max(2.0, cfg.tissue_fraction * static_cast<double>(od.pixels()));
    if (static_cast<double>(tissue.size()) < needed) {
        throw InsufficientTissue("only " + std::to_string(tissue.size()) + " of " +
                                 std::to_string(od.pixels()) + " pixels exceed the tissue threshold");
    }

    std::mt19937_64 rng(cfg.seed);

    // Initialize the colors at the two angular extremes of the tissue cone.
    std::uniform_int_distribution<std::size_t> pick(0, tissue.size() - 1);
    const Vec3 anchor = tissue[pick(rng)];
    const Vec3 first = tissue[farthest_in_angle(tissue, anchor)];
    const Vec3 second = tissue[farthest_in_angle(tissue, first)];
    Mat32 w{};
    for (int r = 0; r < 3; ++r) {
        w[r] = first[r] / norm(first);
        w[3 + r] = second[r] / norm(second);
    }

    std::vector<std::array<double, 2>> h(tissue.size());
    for (std::size_t j = 0; j < tissue.size(); ++j) {
        h[j] = nnls2(w, tissue[j]);
        // Multiplicative updates cannot leave an exact zero.
        h[j][0] = std::max(h[j][0], 1e-9);
        h[j][1] = std::max(h[j][1], 1e-9);
    }

    StainEstimate result;
    result.objective_history.push_back(objective(tissue, w, h));

    for (int iter = 0; iter < cfg.iters; ++iter) {
        // H <- H .* (W'V) ./ (W'W H)
        const Vec3 w0 = col(w, 0), w1 = col(w, 1);
        const double g00 = dot(w0, w0), g01 = dot(w0, w1), g11 = dot(w1, w1);
        for (std::size_t j = 0; j < tissue.size(); ++j) {
            const double num0 = dot(w0, tissue[j]);
            const double num1 = dot(w1, tissue[j]);
            const double den0 = g00 * h[j][0] + g01 * h[j][1];
            const double den1 = g01 * h[j][0] + g11 * h[j][1];
            if (den0 > 0.0) h[j][0] *= num0 / den0;
            if (den1 > 0.0) h[j][1] *= num1 / den1;
        }

        // W <- W .* (V H') ./ (W H H')
        double s00 = 0.0, s01 = 0.0, s11 = 0.0;
        Mat32 vh{};
        for (std::size_t j = 0; j < tissue.size(); ++j) {
            s00 += h[j][0] * h[j][0];
            s01 += h[j][0] * h[j][1];
            s11 += h[j][1] * h[j][1];
            for (int r = 0; r < 3; ++r) {
                vh[r] += tissue[j][r] * h[j][0];
                vh[3 + r] += tissue[j][r] * h[j][1];
            }
        }
        for (int r = 0; r < 3; ++r) {
            const double den0 = w[r] * s00 + w[3 + r] * s01;
            const double den1 = w[r] * s01 + w[3 + r] * s11;
            if (den0 > 0.0) w[r] *= vh[r] / den0;
            if (den1 > 0.0) w[3 + r] *= vh[3 + r] / den1;
        }

        // Unit columns; the scale moves into H so W H is unchanged.
        for (int c = 0; c < 2; ++c) {
            const double n = norm(col(w, c));
            if (n < 1e-6) {
                throw DegenerateFactorization("stain column " + std::to_string(c) +
                                              " collapsed to zero norm");
            }
            for (int r = 0; r < 3; ++r) {
                w[3 * c + r] /= n;
            }
            for (auto& hj : h) {
                hj[c] *= n;
            }
        }

        const double previous = result.objective_history.back();
        const double current = objective(tissue, w, h);
        result.objective_history.push_back(current);
        if (previous <= 0.0 || std::abs(previous - current) / previous < cfg.tol) {
            break;
        }
    }

    if (angle_deg(col(w, 0), col(w, 1)) < cfg.min_column_angle_deg) {
        throw DegenerateFactorization("recovered stain colors are parallel; the image shows a single stain");
    }

    // Hematoxylin first.
    if (dot(col(w, 1), kReferenceHematoxylin) > dot(col(w, 0), kReferenceHematoxylin)) {
        std::swap_ranges(w.begin(), w.begin() + 3, w.begin() + 3);
    }
    std::copy(w.begin(), w.end(), result.model.appearance.begin());
    result.model.h_column = 0;

    result.density.dims = od.dims;
    result.density.rows[0].resize(od.pixels());
    result.density.rows[1].resize(od.pixels());
    double residual = 0.0, total = 0.0;
    for (std::size_t i = 0; i < od.pixels(); ++i) {
        const Vec3 v = od_at(od, i);
        const auto d = nnls2(w, v);
        result.density.rows[0][i] = d[0];
        result.density.rows[1][i] = d[1];
        for (int r = 0; r < 3; ++r) {
            const double diff = v[r] - (w[r] * d[0] + w[3 + r] * d[1]);
            residual += diff * diff;
        }
        total += dot(v, v);
    }
    result.relative_error = total > 0.0 ? std::sqrt(residual / total) : 0.0;

    double mass0 = 0.0, mass1 = 0.0;
    for (std::size_t i = 0; i < od.pixels(); ++i) {
        mass0 += result.density.rows[0][i];
        mass1 += result.density.rows[1][i];
    }
    if (std::min(mass0, mass1) < 1e-3 * (mass0 + mass1)) {
        throw DegenerateFactorization("one recovered stain carries no density");
    }
    return result;
}

RgbImage reconstruct_component(const std::array<double, 3>& illumination, const StainModel& model,
                               const DensityMap& density, Component which) {
    require_valid(model);
    const int stain_col = which == Component::Hematoxylin ? model.h_column : model.e_column();
    // Density rows are indexed by appearance column.
    const auto& row = density.rows[static_cast<std::size_t>(stain_col)];
    if (row.size() != density.dims.pixels()) {
        throw DimensionMismatch("density row length does not match dimensions");
    }
    const Vec3 color = model.column(stain_col);
    std::vector<double> samples(3 * row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            samples[3 * i + c] = illumination[c] * std::exp(-color[c] * row[i]);
        }
    }
    return RgbImage(density.dims, std::move(samples), illumination);
}

GrayImage collapse_to_gray(const RgbImage& image) {
    std::vector<double> values(image.pixels());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = (image.sample(i, 0) + image.sample(i, 1) + image.sample(i, 2)) / 3.0;
    }
    return GrayImage(image.dims(), std::move(values));
}

std::string format_stain_model(const StainModel& model) {
    std::ostringstream out;
    out.precision(17);
    for (double v : model.appearance) {
        out << v << '\n';
    }
    out << model.h_column << '\n';
    return out.str();
}

StainModel parse_stain_model(const std::string& text) {
    std::istringstream in(text);
    StainModel model;
    for (double& v : model.appearance) {
        if (!(in >> v)) {
            throw FormatError("stain model needs 6 matrix entries and an h_column index");
        }
    }
    double h = 0.0;
    if (!(in >> h) || (h != 0.0 && h != 1.0)) {
        throw FormatError("stain model h_column must be 0 or 1");
    }
    std::string rest;
    if (in >> rest) {
        throw FormatError("unexpected trailing content in stain model");
    }
    model.h_column = static_cast<int>(h);
    require_valid(model);
    return model;
}

void write_stain_model(const StainModel& model, const std::filesystem::path& path) {
    io::atomic_write(path, format_stain_model(model));
}

StainModel read_stain_model(const std::filesystem::path& path) {
    auto bytes = io::read_bytes(path);
    return parse_stain_model(std::string(bytes.begin(), bytes.end()));
}

}  // namespace pointprop::stain
