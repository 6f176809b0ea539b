#include "pointprop/label_propagation.hpp"

#include <algorithm>
#include <cmath>

namespace pointprop::propagation {

namespace {

template <typename A, typename B>
void require_same_dims(const A& a, const B& b, const char* what) {
    if (a.dims() != b.dims()) {
        throw DimensionMismatch(std::string(what) + ": dimensions differ (" +
                                std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                                std::to_string(b.width()) + "x" + std::to_string(b.height()) + ")");
    }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

EmaState ema_update(const EmaState& state, const ProbMap& pred) {
    if (!(state.decay > 0.0 && state.decay <= 1.0)) {
        throw InvalidArgument("ema decay must be in (0, 1]");
    }
    EmaState next = state;
    next.step = state.step + 1;
    if (!state.average || state.step == 0) {
        next.average = pred;
        return next;
    }
    require_same_dims(*state.average, pred, "ema_update");
    const double keep = 1.0 - state.decay;
    std::vector<double> values(pred.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = state.decay * pred[i] + keep * (*state.average)[i];
    }
    next.average = ProbMap(pred.dims(), std::move(values));
    return next;
}

ProbMap merge_pseudo(const ProbMap& ema, const TriLabelMap& cluster) {
    require_same_dims(ema, cluster, "merge_pseudo");
    std::vector<double> out(ema.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        switch (cluster[i]) {
            case label::kBackground: out[i] = 0.0; break;
            case label::kNucleus: out[i] = 1.0; break;
            case label::kIgnored: out[i] = ema[i]; break;
            default: throw InvalidArgument("label code out of range");
        }
    }
    return ProbMap(ema.dims(), std::move(out));
}

double partial_ce_loss(const ProbMap& pred, const TriLabelMap& labels) {
    require_same_dims(pred, labels, "partial_ce_loss");
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto code = labels[i];
        if (code == label::kIgnored) {
            continue;
        }
        if (code > label::kIgnored) {
            throw InvalidArgument("label code out of range");
        }
        const double y = clamp_prob(pred[i]);
        sum += code == label::kNucleus ? std::log(y) : std::log(1.0 - y);
        ++counted;
    }
    if (counted == 0) {
        throw InvalidArgument("partial_ce_loss: every pixel is ignored");
    }
    return -sum / static_cast<double>(counted);
}

double kl_cot_loss(const ProbMap& pseudo, const ProbMap& pred, KlVariant variant) {
    require_same_dims(pseudo, pred, "kl_cot_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = clamp_prob(pseudo[i]);
        const double y = clamp_prob(pred[i]);
        double term = p * std::log(p / y);
        if (variant == KlVariant::Binary) {
            term += (1.0 - p) * std::log((1.0 - p) / (1.0 - y));
            // Each pixel's divergence is non-negative; only rounding can dip below.
            term = std::max(term, 0.0);
        }
        sum += term;
    }
    return sum / static_cast<double>(pred.size());
}

double colorization_loss(const RgbImage& pred, const RgbImage& target) {
    require_same_dims(pred, target, "colorization_loss");
    const auto a = pred.samples();
    const auto b = target.samples();
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.pixels());
}

namespace {

double progress(double epoch, const ScheduleConfig& cfg) {
    if (!(cfg.n_max >= 1.0)) {
        throw InvalidArgument("n_max must be at least 1");
    }
    if (!(cfg.eta >= 0.0) || !(cfg.epsilon >= 0.0)) {
        throw InvalidArgument("eta and epsilon must be non-negative");
    }
    if (!(epoch >= 0.0 && epoch <= cfg.n_max)) {
        throw InvalidArgument("epoch outside [0, n_max]");
    }
    return epoch / cfg.n_max;
}

}  // namespace

double schedule_alpha(double epoch, const ScheduleConfig& cfg) {
    const double t = progress(epoch, cfg);
    return cfg.eta * t * t;
}

double schedule_beta(double epoch, const ScheduleConfig& cfg) {
    const double t = 1.0 - progress(epoch, cfg);
    return cfg.epsilon * t * t;
}

double total_loss(const LossTerms& first, const LossTerms& second, double alpha, double beta) {
    auto one = [&](const LossTerms& t) { return t.vor + t.clu + alpha * t.cot + beta * t.color; };
    return one(first) + one(second);
}

}  // namespace pointprop::propagation
