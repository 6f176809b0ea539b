#pragma once

#include <cstdint>

#include "pointprop/core_types.hpp"

namespace pointprop::metrics {

struct MetricReport {
    double accuracy = 0.0;
    double f1 = 0.0;
    double dice_obj = 0.0;
    double aji = 0.0;
};

/// 1 where prob >= threshold.
BinaryMask binarize(const ProbMap& prob, double threshold = 0.5);

/// 8-connected components of `mask` with area >= min_area, ids 1..K in
/// raster order of each component's first pixel.
InstanceMap instances(const BinaryMask& mask, int min_area = 20);

BinaryMask foreground(const InstanceMap& map);

double pixel_accuracy(const BinaryMask& pred, const BinaryMask& gt);
/// Nucleus is the positive class; two empty masks score 1.
double f1(const BinaryMask& pred, const BinaryMask& gt);

/// Size-weighted two-sided object Dice; empty vs empty scores 1.
double dice_obj(const InstanceMap& gt, const InstanceMap& pred);

/// Aggregated Jaccard index with greedy one-to-one matching in gt id order.
double aji(const InstanceMap& gt, const InstanceMap& pred);

struct EvalConfig {
    double threshold = 0.5;
    int min_area = 20;
};

MetricReport evaluate(const ProbMap& prob, const InstanceMap& gt, const EvalConfig& cfg = {});

/// Shifts each point by an independent uniform integer offset in
/// [-max_shift, max_shift]^2, clamped to the image. A point landing on an
/// earlier output is redrawn up to 16 times, then moved to the nearest free
/// pixel in a fixed ring order.
PointSet perturb_points(const PointSet& points, int max_shift, std::uint64_t seed, Dims dims);

/// Share of points that fall on a ground-truth instance.
double in_nucleus_ratio(const PointSet& points, const InstanceMap& gt);

/// Agreement of the nucleus/background codes with `gt` over non-ignored pixels.
double trilabel_accuracy(const TriLabelMap& labels, const BinaryMask& gt);

}  // namespace pointprop::metrics
