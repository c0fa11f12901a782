#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "lac/halting.hpp"
#include "lac/tensor.hpp"

namespace lac {

/// One step S_t mapping a hidden state to a hidden state of the same shape.
using StepFunction = std::function<Tensor(const Tensor&)>;

class LayerStack {
public:
    LayerStack() = default;
    explicit LayerStack(std::vector<StepFunction> layers) : layers_(std::move(layers)) {}

    void push_back(StepFunction layer) { layers_.push_back(std::move(layer)); }
    std::size_t size() const { return layers_.size(); }
    const StepFunction& operator[](std::size_t i) const { return layers_[i]; }

    /// Stack with every layer whose `removed` flag is set dropped.
    LayerStack without(const std::vector<bool>& removed) const;

private:
    std::vector<StepFunction> layers_;
};

/// Everything run_stack observed. Outer index is the layer (0-based), inner
/// index is the halting unit at the policy's granularity.
struct ExecutionOutcome {
    Tensor final_hidden;
    Shape unit_shape;
    std::vector<std::vector<bool>> void_flags;
    std::vector<std::vector<float>> input_norms;
    std::vector<std::vector<float>> norms;  // norm of the layer's candidate output
    std::vector<std::vector<float>> deltas;
    std::vector<std::vector<float>> thresholds;

    std::size_t layer_count() const { return void_flags.size(); }
};

/// Copy of h with example i set to zero.
Tensor mask_example(const Tensor& h, std::size_t example_index);
/// Copy of h with token (example_index, token_index) set to zero.
Tensor mask_token(const Tensor& h, std::size_t example_index, std::size_t token_index);

/// Runs the stack once, measuring progress at every layer and applying the
/// policy's skip mode to void units. Every layer executes regardless of mode.
ExecutionOutcome run_stack(const LayerStack& stack, const Tensor& h0, const HaltPolicy& policy);

/// Runs the stack with a predetermined set of layers acting as identity for
/// every unit; no controller involved.
Tensor run_with_fixed_voids(const LayerStack& stack, const Tensor& h0, const std::vector<bool>& void_layers);

}  // namespace lac
