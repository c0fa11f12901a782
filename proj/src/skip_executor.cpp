#include "lac/skip_executor.hpp"

#include <algorithm>
#include <string>

#include "lac/error.hpp"

namespace lac {

LayerStack LayerStack::without(const std::vector<bool>& removed) const {
    if (removed.size() != layers_.size()) {
        throw ConfigError("layer removal mask has " + std::to_string(removed.size()) +
                          " entries for a stack of " + std::to_string(layers_.size()));
    }
    LayerStack kept;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (!removed[i]) kept.push_back(layers_[i]);
    }
    return kept;
}

namespace {

void require_hidden(const Tensor& h, const char* what) {
    if (h.rank() != 3) {
        throw ShapeError(std::string(what) + ": expected rank-3 hidden state, got " +
                         shape_to_string(h.shape()));
    }
}

void zero_rows(Tensor& h, std::size_t first_row, std::size_t row_count) {
    const std::size_t depth = h.dim(2);
    auto data = h.data().subspan(first_row * depth, row_count * depth);
    std::fill(data.begin(), data.end(), 0.0f);
}

Tensor apply_step(const StepFunction& layer, const Tensor& h, std::size_t index) {
    Tensor out = layer(h);
    if (out.shape() != h.shape()) {
        throw ShapeError("layer " + std::to_string(index + 1) + " changed hidden shape from " +
                         shape_to_string(h.shape()) + " to " + shape_to_string(out.shape()));
    }
    return out;
}

std::vector<float> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

Tensor mask_example(const Tensor& h, std::size_t example_index) {
    require_hidden(h, "mask_example");
    if (example_index >= h.dim(0)) {
        throw std::out_of_range("mask_example: example " + std::to_string(example_index) +
                                " out of range for batch " + std::to_string(h.dim(0)));
    }
    Tensor out = h;
    zero_rows(out, example_index * h.dim(1), h.dim(1));
    return out;
}

Tensor mask_token(const Tensor& h, std::size_t example_index, std::size_t token_index) {
    require_hidden(h, "mask_token");
    if (example_index >= h.dim(0) || token_index >= h.dim(1)) {
        throw std::out_of_range("mask_token: (" + std::to_string(example_index) + ", " +
                                std::to_string(token_index) + ") out of range for " +
                                shape_to_string(h.shape()));
    }
    Tensor out = h;
    zero_rows(out, example_index * h.dim(1) + token_index, 1);
    return out;
}

ExecutionOutcome run_stack(const LayerStack& stack, const Tensor& h0, const HaltPolicy& policy) {
    require_hidden(h0, "run_stack");
    policy.validate(std::max<std::size_t>(stack.size(), 1));

    const Shape& shape = h0.shape();
    const std::size_t batch = shape[0], length = shape[1], depth = shape[2];

    ExecutionOutcome outcome;
    outcome.unit_shape = norm_shape(shape, policy.granularity);
    ProgressHistory history(outcome.unit_shape);

    Tensor hidden = h0;
    Tensor input_norm = l2_norm(hidden, policy.granularity);

    for (std::size_t t = 0; t < stack.size(); ++t) {
        Tensor candidate = apply_step(stack[t], hidden, t);
        Tensor candidate_norm = l2_norm(candidate, policy.granularity);
        Tensor delta = progress(input_norm, candidate_norm);
        history.record(delta);
        HaltDecision decision = decide(history, delta, policy);

        outcome.input_norms.push_back(to_vector(input_norm));
        outcome.norms.push_back(to_vector(candidate_norm));
        outcome.deltas.push_back(to_vector(delta));
        outcome.thresholds.push_back(to_vector(decision.threshold));

        const bool any_void = std::find(decision.void_flags.begin(), decision.void_flags.end(), true) !=
                              decision.void_flags.end();
        const bool rewrites = policy.skip_mode == SkipMode::MaskZero ||
                              policy.skip_mode == SkipMode::SkipIdentity ||
                              policy.skip_mode == SkipMode::HaltFrozen;

        if (any_void && rewrites) {
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t l = 0; l < length; ++l) {
                    const std::size_t unit = unit_index(policy.granularity, shape, b, l);
                    if (!decision.void_flags[unit]) continue;
                    const std::size_t row = b * length + l;
                    if (policy.skip_mode == SkipMode::MaskZero) {
                        zero_rows(candidate, row, 1);
                    } else {
                        auto src = hidden.data().subspan(row * depth, depth);
                        std::copy(src.begin(), src.end(), candidate.data().begin() + row * depth);
                    }
                }
            }
            if (policy.skip_mode == SkipMode::HaltFrozen) {
                for (std::size_t u = 0; u < history.unit_count(); ++u) {
                    if (decision.void_flags[u]) history.latch(u);
                }
            }
        }

        outcome.void_flags.push_back(std::move(decision.void_flags));
        hidden = std::move(candidate);
        input_norm = any_void && rewrites ? l2_norm(hidden, policy.granularity) : std::move(candidate_norm);
    }

    outcome.final_hidden = std::move(hidden);
    return outcome;
}

Tensor run_with_fixed_voids(const LayerStack& stack, const Tensor& h0, const std::vector<bool>& void_layers) {
    require_hidden(h0, "run_with_fixed_voids");
    if (void_layers.size() != stack.size()) {
        throw ConfigError("void mask has " + std::to_string(void_layers.size()) + " entries for " +
                          std::to_string(stack.size()) + " layers");
    }
    Tensor hidden = h0;
    for (std::size_t t = 0; t < stack.size(); ++t) {
        Tensor candidate = apply_step(stack[t], hidden, t);
        if (!void_layers[t]) hidden = std::move(candidate);
    }
    return hidden;
}

}  // namespace lac
