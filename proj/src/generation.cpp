#include <algorithm>
#include <stdexcept>

#include "lac/error.hpp"
#include "lac/toy_model.hpp"

namespace lac {

namespace {

Tensor last_row(const Tensor& logits) {
    const std::size_t vocab = logits.dim(1);
    auto row = logits.data().subspan((logits.dim(0) - 1) * vocab, vocab);
    return Tensor({vocab}, std::vector<float>(row.begin(), row.end()));
}

// Lowest index wins ties.
int argmax(const Tensor& logits) {
    auto v = logits.data();
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Forwards `tokens` at state.position, advancing the state. Returns the full logits.
Tensor forward_chunk(GenerationState& state, const ToyModel& model, std::span<const int> tokens,
                     const HaltPolicy& policy, Phase phase, std::vector<TraceRecord>& records) {
    const Tensor h0 = model.embed(tokens, state.position);
    const LayerStack stack = model.layer_stack(state.cache, state.position);
    const ExecutionOutcome outcome = run_stack(stack, h0, policy);

    auto produced = records_from_outcome(outcome, h0.shape(), tokens, state.position, phase, state.sequence_id, policy);
    records.insert(records.end(), std::make_move_iterator(produced.begin()), std::make_move_iterator(produced.end()));

    state.tokens.insert(state.tokens.end(), tokens.begin(), tokens.end());
    state.phases.insert(state.phases.end(), tokens.size(), phase);
    state.position += tokens.size();

    Tensor logits = model.logits(outcome.final_hidden);
    state.last_logits = last_row(logits);
    return logits;
}

}  // namespace

PromptRun run_prompt(const ToyModel& model, std::span<const int> prompt, const HaltPolicy& policy,
                     std::string sequence_id) {
    if (prompt.empty()) throw ConfigError("run_prompt: empty prompt");
    if (prompt.size() > model.config().max_seq) {
        throw ConfigError("run_prompt: prompt of " + std::to_string(prompt.size()) + " tokens exceeds max_seq " +
                          std::to_string(model.config().max_seq));
    }
    policy.validate(model.layer_count());

    PromptRun run;
    run.state.sequence_id = std::move(sequence_id);
    run.state.cache = model.make_cache();
    run.logits = forward_chunk(run.state, model, prompt, policy, Phase::PP, run.records);
    return run;
}

Generation generate(GenerationState& state, const ToyModel& model, const HaltPolicy& policy, std::size_t max_new) {
    if (state.last_logits.size() == 0) throw ConfigError("generate: state has not processed a prompt");
    policy.validate(model.layer_count());

    Generation out;
    for (std::size_t i = 0; i < max_new; ++i) {
        const int next = argmax(state.last_logits);
        if (next == kEndOfText) break;
        if (state.position >= model.config().max_seq) {
            throw std::out_of_range("generate: position " + std::to_string(state.position) +
                                    " reached max_seq " + std::to_string(model.config().max_seq));
        }
        const int token[] = {next};
        forward_chunk(state, model, token, policy, Phase::RG, out.records);
        out.tokens.push_back(next);
    }
    return out;
}

}  // namespace lac
