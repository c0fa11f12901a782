#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lac/halting.hpp"
#include "lac/skip_executor.hpp"
#include "lac/tensor.hpp"
#include "lac/tensor_file.hpp"
#include "lac/trace.hpp"

namespace lac {

struct ModelConfig {
    std::size_t layer_count = 4;
    std::size_t depth = 8;
    std::size_t head_count = 2;
    std::size_t ffn_dim = 32;
    std::size_t vocab_size = 256;
    std::size_t max_seq = 256;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct BlockWeights {
    Tensor attn_gain;  // [depth]
    Tensor wq, wk, wv, wo;  // [depth, depth], used as x @ W
    Tensor ffn_gain;  // [depth]
    Tensor w_up;  // [depth, ffn_dim]
    Tensor w_down;  // [ffn_dim, depth]
};

/// Keys and values of every position seen so far, one buffer per layer.
struct KvCache {
    std::size_t max_seq = 0;
    std::size_t depth = 0;
    std::vector<std::vector<float>> keys;
    std::vector<std::vector<float>> values;

    KvCache() = default;
    KvCache(std::size_t layer_count, std::size_t max_seq, std::size_t depth);
};

/// Byte-level decoder-only pre-LN transformer. Each block (attention + FFN
/// with residuals) is one step of the layer stack. Unembedding is tied to
/// the token embedding.
class ToyModel {
public:
    /// Deterministic weights from Xoshiro256(config.seed); see docs/formats.md for draw order.
    static ToyModel build(const ModelConfig& config);
    static ToyModel from_tensor_file(const TensorFile& file);
    static ToyModel load(const std::filesystem::path& path);

    TensorFile to_tensor_file() const;
    void save(const std::filesystem::path& path) const;

    const ModelConfig& config() const { return config_; }
    std::size_t layer_count() const { return blocks_.size(); }
    BlockWeights& block(std::size_t i) { return blocks_.at(i); }
    const BlockWeights& block(std::size_t i) const { return blocks_.at(i); }

    /// Copy of the model with the flagged blocks dropped.
    ToyModel without_layers(const std::vector<bool>& removed) const;

    KvCache make_cache() const { return KvCache(layer_count(), config_.max_seq, config_.depth); }

    /// Token + position embedding of `tokens` starting at `position`: [1, n, depth].
    Tensor embed(std::span<const int> tokens, std::size_t position) const;

    /// One block over a [1, n, depth] chunk at `position`; writes K/V into the cache.
    Tensor block_forward(std::size_t layer, const Tensor& hidden, KvCache& cache, std::size_t position) const;

    /// Stack of block closures bound to `cache` for a chunk starting at `position`.
    LayerStack layer_stack(KvCache& cache, std::size_t position) const;

    /// Final norm + tied unembedding: [1, n, depth] -> [n, vocab].
    Tensor logits(const Tensor& hidden) const;

private:
    ModelConfig config_;
    Tensor token_embedding_;  // [vocab, depth]
    Tensor position_embedding_;  // [max_seq, depth]
    std::vector<BlockWeights> blocks_;
    Tensor final_gain_;  // [depth]
};

inline constexpr int kEndOfText = 0x03;

std::vector<int> encode_bytes(std::string_view text);
std::string decode_bytes(std::span<const int> tokens);

struct GenerationState {
    std::string sequence_id;
    std::vector<int> tokens;
    std::vector<Phase> phases;
    KvCache cache;
    std::size_t position = 0;
    Tensor last_logits;  // [vocab], logits after the most recent forward
};

struct PromptRun {
    GenerationState state;
    std::vector<TraceRecord> records;
    Tensor logits;  // [prompt_len, vocab]
};

/// Forwards the whole prompt as one grid under `policy`; one PP record per token.
PromptRun run_prompt(const ToyModel& model, std::span<const int> prompt, const HaltPolicy& policy,
                     std::string sequence_id = "seq-0");

struct Generation {
    std::vector<int> tokens;
    std::vector<TraceRecord> records;
};

/// Greedy decoding. Each generated token is forwarded once (filling the cache
/// and producing the next logits) and gets one RG record. Stops after
/// `max_new` tokens or when the end-of-text byte is predicted.
Generation generate(GenerationState& state, const ToyModel& model, const HaltPolicy& policy, std::size_t max_new);

}  // namespace lac
