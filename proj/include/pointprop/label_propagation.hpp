#pragma once

#include <optional>

#include "pointprop/core_types.hpp"

namespace pointprop::propagation {

/// Floor/ceiling applied to probabilities before any logarithm.
inline constexpr double kProbClamp = 1e-7;

/// Running average of a peer network's predictions for one image.
struct EmaState {
    /// Empty until the first prediction arrives.
    std::optional<ProbMap> average;
    int step = 0;
    /// Weight of the newest prediction, in (0, 1].
    double decay = 0.5;
    /// Epochs between updates; the caller owns the epoch loop.
    int period = 3;
};

/// average <- decay * pred + (1 - decay) * average. The first update adopts
/// the prediction unchanged.
EmaState ema_update(const EmaState& state, const ProbMap& pred);

/// Hard cluster labels where the cluster map is decided, the running
/// average on its ignored pixels.
ProbMap merge_pseudo(const ProbMap& ema, const TriLabelMap& cluster);

/// Binary cross entropy over the non-ignored pixels of `labels`.
/// Throws InvalidArgument when every pixel is ignored.
double partial_ce_loss(const ProbMap& pred, const TriLabelMap& labels);

enum class KlVariant {
    /// Bernoulli KL over both classes.
    Binary,
    /// Only the nucleus-class term p ln(p / y); not a divergence.
    PositiveOnly,
};

/// Mean per-pixel KL(pseudo || pred) over all pixels.
double kl_cot_loss(const ProbMap& pseudo, const ProbMap& pred, KlVariant variant = KlVariant::Binary);

/// Mean over pixels of the squared L2 color difference.
double colorization_loss(const RgbImage& pred, const RgbImage& target);

struct ScheduleConfig {
    double eta = 1.0;
    double epsilon = 0.1;
    double n_max = 1.0;
};

/// eta * (n / n_max)^2, rising from 0 to eta.
double schedule_alpha(double epoch, const ScheduleConfig& cfg);
/// epsilon * (1 - n / n_max)^2, falling from epsilon to 0.
double schedule_beta(double epoch, const ScheduleConfig& cfg);

/// Loss terms of one segmentation+colorization network.
struct LossTerms {
    double vor = 0.0;
    double clu = 0.0;
    double cot = 0.0;
    double color = 0.0;
};

double total_loss(const LossTerms& first, const LossTerms& second, double alpha, double beta);

}  // namespace pointprop::propagation
