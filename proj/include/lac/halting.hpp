#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "lac/tensor.hpp"

namespace lac {

/// Original: lambda = alpha * |max(D) - min(D)|.  Modified: lambda = alpha * (max(D) - min(D)).
/// Both are kept even though max >= min makes them numerically identical.
enum class ThresholdFormula { Original, Modified };

/// What run_stack does with a unit whose layer is flagged void.
enum class SkipMode {
    Off,           // plain forward pass, norms recorded, nothing flagged
    Detect,        // flag voids, keep every layer's output
    MaskZero,      // zero the unit's activations
    SkipIdentity,  // the layer acts as identity for the unit
    HaltFrozen,    // first void freezes the unit for the rest of the stack
};

std::string_view to_string(ThresholdFormula f);
std::string_view to_string(SkipMode m);
ThresholdFormula parse_formula(std::string_view name);
SkipMode parse_skip_mode(std::string_view name);

struct HaltPolicy {
    NormGranularity granularity = NormGranularity::PerToken;
    double alpha = 0.8;
    ThresholdFormula formula = ThresholdFormula::Modified;
    SkipMode skip_mode = SkipMode::Detect;
    // Leading layers that always execute; layer t (1-based) may only be void when t > min_layers.
    std::size_t min_layers = 1;

    /// Throws ConfigError unless 0 < alpha <= 1 and 1 <= min_layers <= layer_count.
    void validate(std::size_t layer_count) const;
};

/// Per-unit record of every progress value seen so far, with running extrema.
/// One instance per forward pass; not thread-safe.
class ProgressHistory {
public:
    explicit ProgressHistory(Shape unit_shape);

    /// Appends one delta per unit. Throws ShapeError on a unit-shape mismatch.
    void record(const Tensor& delta);

    const Shape& unit_shape() const { return unit_shape_; }
    std::size_t unit_count() const { return running_max_.size(); }
    std::size_t step_count() const { return step_count_; }

    std::span<const float> deltas_at(std::size_t step) const;
    std::span<const float> running_max() const { return running_max_; }
    std::span<const float> running_min() const { return running_min_; }

    bool halted(std::size_t unit) const { return halted_.at(unit); }
    void latch(std::size_t unit) { halted_.at(unit) = true; }

private:
    Shape unit_shape_;
    std::vector<float> deltas_;  // step-major, unit_count values per step
    std::vector<float> running_max_;
    std::vector<float> running_min_;
    std::vector<bool> halted_;
    std::size_t step_count_ = 0;
};

struct HaltDecision {
    std::vector<bool> void_flags;
    Tensor threshold;
    Tensor delta;
};

/// Elementwise progress: norm_curr - norm_prev.
Tensor progress(const Tensor& norm_prev, const Tensor& norm_curr);

/// Threshold for one unit given the extrema of its history. Both the live
/// controller and the offline detector go through this function.
float threshold_value(float max_delta, float min_delta, double alpha, ThresholdFormula formula);

/// Per-unit threshold lambda_t over the full history, shaped like the unit grid.
Tensor threshold(const ProgressHistory& history, double alpha, ThresholdFormula formula);

/// Void flags for the current step. `delta` must already be recorded into
/// `history`, so lambda_t is computed over delta_1..delta_t.
HaltDecision decide(const ProgressHistory& history, const Tensor& delta, const HaltPolicy& policy);

/// 0-based indices of the layers that `decide` (Detect mode) would flag for a
/// single unit whose progress sequence is `deltas`.
std::vector<std::size_t> detect_voids_offline(std::span<const float> deltas, double alpha,
                                              ThresholdFormula formula, std::size_t min_layers);

}  // namespace lac
