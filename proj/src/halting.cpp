#include "lac/halting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lac/error.hpp"

namespace lac {

std::string_view to_string(ThresholdFormula f) {
    return f == ThresholdFormula::Original ? "original" : "modified";
}

std::string_view to_string(SkipMode m) {
    switch (m) {
        case SkipMode::Off: return "off";
        case SkipMode::Detect: return "detect";
        case SkipMode::MaskZero: return "mask-zero";
        case SkipMode::SkipIdentity: return "skip-identity";
        case SkipMode::HaltFrozen: return "halt-frozen";
    }
    return "off";
}

ThresholdFormula parse_formula(std::string_view name) {
    if (name == "original") return ThresholdFormula::Original;
    if (name == "modified") return ThresholdFormula::Modified;
    throw ConfigError("unknown threshold formula '" + std::string(name) + "'");
}

SkipMode parse_skip_mode(std::string_view name) {
    for (SkipMode m : {SkipMode::Off, SkipMode::Detect, SkipMode::MaskZero, SkipMode::SkipIdentity,
                       SkipMode::HaltFrozen}) {
        if (name == to_string(m)) return m;
    }
    throw ConfigError("unknown skip mode '" + std::string(name) + "'");
}

void HaltPolicy::validate(std::size_t layer_count) const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw ConfigError("alpha must lie in (0, 1], got " + std::to_string(alpha));
    }
    if (min_layers < 1 || min_layers > layer_count) {
        throw ConfigError("min_layers must lie in [1, " + std::to_string(layer_count) + "], got " +
                          std::to_string(min_layers));
    }
}

ProgressHistory::ProgressHistory(Shape unit_shape)
    : unit_shape_(std::move(unit_shape)),
      running_max_(shape_numel(unit_shape_), -std::numeric_limits<float>::infinity()),
      running_min_(shape_numel(unit_shape_), std::numeric_limits<float>::infinity()),
      halted_(shape_numel(unit_shape_), false) {}

void ProgressHistory::record(const Tensor& delta) {
    if (delta.shape() != unit_shape_) {
        throw ShapeError("progress history expects " + shape_to_string(unit_shape_) + ", got " +
                         shape_to_string(delta.shape()));
    }
    auto values = delta.data();
    deltas_.insert(deltas_.end(), values.begin(), values.end());
    for (std::size_t u = 0; u < values.size(); ++u) {
        running_max_[u] = std::max(running_max_[u], values[u]);
        running_min_[u] = std::min(running_min_[u], values[u]);
    }
    ++step_count_;
}

std::span<const float> ProgressHistory::deltas_at(std::size_t step) const {
    if (step >= step_count_) throw std::out_of_range("progress history step out of range");
    return std::span<const float>(deltas_).subspan(step * unit_count(), unit_count());
}

Tensor progress(const Tensor& norm_prev, const Tensor& norm_curr) {
    if (norm_prev.shape() != norm_curr.shape()) {
        throw ShapeError("progress: " + shape_to_string(norm_prev.shape()) + " vs " +
                         shape_to_string(norm_curr.shape()));
    }
    Tensor out(norm_curr.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = norm_curr[i] - norm_prev[i];
    return out;
}

float threshold_value(float max_delta, float min_delta, double alpha, ThresholdFormula formula) {
    const double range = static_cast<double>(max_delta) - static_cast<double>(min_delta);
    const double scaled = formula == ThresholdFormula::Original ? alpha * std::fabs(range) : alpha * range;
    return static_cast<float>(scaled);
}

Tensor threshold(const ProgressHistory& history, double alpha, ThresholdFormula formula) {
    if (history.step_count() == 0) throw ConfigError("threshold: empty progress history");
    Tensor out(history.unit_shape());
    for (std::size_t u = 0; u < history.unit_count(); ++u) {
        out[u] = threshold_value(history.running_max()[u], history.running_min()[u], alpha, formula);
    }
    return out;
}

namespace {

bool is_void(float delta, float lambda, std::size_t step, std::size_t min_layers) {
    return step > min_layers && delta < lambda;
}

}  // namespace

HaltDecision decide(const ProgressHistory& history, const Tensor& delta, const HaltPolicy& policy) {
    if (delta.shape() != history.unit_shape()) {
        throw ShapeError("decide: delta " + shape_to_string(delta.shape()) + " vs history " +
                         shape_to_string(history.unit_shape()));
    }
    HaltDecision decision{std::vector<bool>(history.unit_count(), false),
                          threshold(history, policy.alpha, policy.formula), delta};
    if (policy.skip_mode == SkipMode::Off) return decision;

    const std::size_t step = history.step_count();
    for (std::size_t u = 0; u < history.unit_count(); ++u) {
        if (policy.skip_mode == SkipMode::HaltFrozen && history.halted(u)) {
            decision.void_flags[u] = true;
            continue;
        }
        decision.void_flags[u] = is_void(delta[u], decision.threshold[u], step, policy.min_layers);
    }
    return decision;
}

std::vector<std::size_t> detect_voids_offline(std::span<const float> deltas, double alpha,
                                              ThresholdFormula formula, std::size_t min_layers) {
    std::vector<std::size_t> voids;
    float hi = -std::numeric_limits<float>::infinity();
    float lo = std::numeric_limits<float>::infinity();
    for (std::size_t t = 0; t < deltas.size(); ++t) {
        hi = std::max(hi, deltas[t]);
        lo = std::min(lo, deltas[t]);
        if (is_void(deltas[t], threshold_value(hi, lo, alpha, formula), t + 1, min_layers)) {
            voids.push_back(t);
        }
    }
    return voids;
}

}  // namespace lac
