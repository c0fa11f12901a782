#include "lac/toy_model.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "lac/error.hpp"
#include "lac/rng.hpp"

namespace lac {

void ModelConfig::validate() const {
    if (layer_count == 0 || depth == 0 || head_count == 0 || ffn_dim == 0 || vocab_size == 0 || max_seq == 0) {
        throw ConfigError("model config: all extents must be positive");
    }
    if (depth % head_count != 0) {
        throw ConfigError("model config: depth " + std::to_string(depth) + " not divisible by " +
                          std::to_string(head_count) + " heads");
    }
}

KvCache::KvCache(std::size_t layer_count, std::size_t max_seq_, std::size_t depth_)
    : max_seq(max_seq_),
      depth(depth_),
      keys(layer_count, std::vector<float>(max_seq_ * depth_, 0.0f)),
      values(layer_count, std::vector<float>(max_seq_ * depth_, 0.0f)) {}

namespace {

Tensor draw(Xoshiro256& rng, Shape shape, float bound) {
    Tensor t(std::move(shape));
    for (float& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

float fan_in_bound(std::size_t fan_in) { return 1.0f / std::sqrt(static_cast<float>(fan_in)); }

float gelu(float x) {
    constexpr float kSqrt2OverPi = 0.7978845608f;
    return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

std::string block_name(std::size_t i, const char* leaf) { return "blocks." + std::to_string(i) + "." + leaf; }

std::map<std::string, Shape> expected_shapes(const ModelConfig& c) {
    const std::size_t d = c.depth;
    std::map<std::string, Shape> shapes{
        {"token_embedding", {c.vocab_size, d}},
        {"position_embedding", {c.max_seq, d}},
        {"final_norm.gain", {d}},
    };
    for (std::size_t i = 0; i < c.layer_count; ++i) {
        shapes[block_name(i, "attn_norm.gain")] = {d};
        for (const char* leaf : {"wq", "wk", "wv", "wo"}) shapes[block_name(i, leaf)] = {d, d};
        shapes[block_name(i, "ffn_norm.gain")] = {d};
        shapes[block_name(i, "w_up")] = {d, c.ffn_dim};
        shapes[block_name(i, "w_down")] = {c.ffn_dim, d};
    }
    return shapes;
}

}  // namespace

ToyModel ToyModel::build(const ModelConfig& config) {
    config.validate();
    Xoshiro256 rng(config.seed);
    ToyModel m;
    m.config_ = config;
    const std::size_t d = config.depth;
    m.token_embedding_ = draw(rng, {config.vocab_size, d}, 1.0f);
    m.position_embedding_ = draw(rng, {config.max_seq, d}, 0.1f);
    for (std::size_t i = 0; i < config.layer_count; ++i) {
        BlockWeights b;
        b.attn_gain = Tensor::ones({d});
        b.wq = draw(rng, {d, d}, fan_in_bound(d));
        b.wk = draw(rng, {d, d}, fan_in_bound(d));
        b.wv = draw(rng, {d, d}, fan_in_bound(d));
        b.wo = draw(rng, {d, d}, fan_in_bound(d));
        b.ffn_gain = Tensor::ones({d});
        b.w_up = draw(rng, {d, config.ffn_dim}, fan_in_bound(d));
        b.w_down = draw(rng, {config.ffn_dim, d}, fan_in_bound(config.ffn_dim));
        m.blocks_.push_back(std::move(b));
    }
    m.final_gain_ = Tensor::ones({d});
    return m;
}

TensorFile ToyModel::to_tensor_file() const {
    TensorFile file;
    file.metadata = {
        {"layer_count", std::to_string(config_.layer_count)},
        {"depth", std::to_string(config_.depth)},
        {"head_count", std::to_string(config_.head_count)},
        {"ffn_dim", std::to_string(config_.ffn_dim)},
        {"vocab_size", std::to_string(config_.vocab_size)},
        {"max_seq", std::to_string(config_.max_seq)},
        {"seed", std::to_string(config_.seed)},
    };
    file.tensors.emplace("token_embedding", token_embedding_);
    file.tensors.emplace("position_embedding", position_embedding_);
    file.tensors.emplace("final_norm.gain", final_gain_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const BlockWeights& b = blocks_[i];
        file.tensors.emplace(block_name(i, "attn_norm.gain"), b.attn_gain);
        file.tensors.emplace(block_name(i, "wq"), b.wq);
        file.tensors.emplace(block_name(i, "wk"), b.wk);
        file.tensors.emplace(block_name(i, "wv"), b.wv);
        file.tensors.emplace(block_name(i, "wo"), b.wo);
        file.tensors.emplace(block_name(i, "ffn_norm.gain"), b.ffn_gain);
        file.tensors.emplace(block_name(i, "w_up"), b.w_up);
        file.tensors.emplace(block_name(i, "w_down"), b.w_down);
    }
    return file;
}

ToyModel ToyModel::from_tensor_file(const TensorFile& file) {
    auto meta = [&](const char* key) -> std::size_t {
        auto it = file.metadata.find(key);
        if (it == file.metadata.end()) throw FormatError(std::string("model file: missing metadata '") + key + "'");
        try {
            return static_cast<std::size_t>(std::stoull(it->second));
        } catch (const std::exception&) {
            throw FormatError(std::string("model file: metadata '") + key + "' is not an integer");
        }
    };
    ModelConfig config;
    config.layer_count = meta("layer_count");
    config.depth = meta("depth");
    config.head_count = meta("head_count");
    config.ffn_dim = meta("ffn_dim");
    config.vocab_size = meta("vocab_size");
    config.max_seq = meta("max_seq");
    config.seed = meta("seed");
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("model file: ") + e.what());
    }

    const std::map<std::string, Shape> layout = expected_shapes(config);
    for (const auto& [name, tensor] : file.tensors) {
        auto it = layout.find(name);
        if (it == layout.end()) throw FormatError("model file: unknown tensor name '" + name + "'");
        if (it->second != tensor.shape()) {
            throw FormatError("model file: tensor '" + name + "' has shape " + shape_to_string(tensor.shape()) +
                              ", expected " + shape_to_string(it->second));
        }
    }
    auto take = [&](const std::string& name) -> Tensor {
        auto it = file.tensors.find(name);
        if (it == file.tensors.end()) throw FormatError("model file: missing tensor '" + name + "'");
        return it->second;
    };

    ToyModel m;
    m.config_ = config;
    m.token_embedding_ = take("token_embedding");
    m.position_embedding_ = take("position_embedding");
    m.final_gain_ = take("final_norm.gain");
    for (std::size_t i = 0; i < config.layer_count; ++i) {
        BlockWeights b;
        b.attn_gain = take(block_name(i, "attn_norm.gain"));
        b.wq = take(block_name(i, "wq"));
        b.wk = take(block_name(i, "wk"));
        b.wv = take(block_name(i, "wv"));
        b.wo = take(block_name(i, "wo"));
        b.ffn_gain = take(block_name(i, "ffn_norm.gain"));
        b.w_up = take(block_name(i, "w_up"));
        b.w_down = take(block_name(i, "w_down"));
        m.blocks_.push_back(std::move(b));
    }
    return m;
}

ToyModel ToyModel::load(const std::filesystem::path& path) { return from_tensor_file(load_tensor_file(path)); }

void ToyModel::save(const std::filesystem::path& path) const { save_tensor_file(path, to_tensor_file()); }

ToyModel ToyModel::without_layers(const std::vector<bool>& removed) const {
    if (removed.size() != blocks_.size()) throw ConfigError("without_layers: mask size does not match layer count");
    ToyModel m = *this;
    m.blocks_.clear();
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (!removed[i]) m.blocks_.push_back(blocks_[i]);
    }
    if (m.blocks_.empty()) throw ConfigError("without_layers: cannot remove every layer");
    m.config_.layer_count = m.blocks_.size();
    return m;
}

Tensor ToyModel::embed(std::span<const int> tokens, std::size_t position) const {
    const std::size_t d = config_.depth;
    if (position + tokens.size() > config_.max_seq) {
        throw std::out_of_range("position " + std::to_string(position + tokens.size()) + " exceeds max_seq " +
                                std::to_string(config_.max_seq));
    }
    Tensor h({1, tokens.size(), d});
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const int tok = tokens[i];
        if (tok < 0 || static_cast<std::size_t>(tok) >= config_.vocab_size) {
            throw std::out_of_range("token id " + std::to_string(tok) + " outside vocabulary");
        }
        for (std::size_t k = 0; k < d; ++k) {
            h.at(0, i, k) = token_embedding_[static_cast<std::size_t>(tok) * d + k] +
                            position_embedding_[(position + i) * d + k];
        }
    }
    return h;
}

Tensor ToyModel::block_forward(std::size_t layer, const Tensor& hidden, KvCache& cache, std::size_t position) const {
    const BlockWeights& w = blocks_.at(layer);
    const std::size_t d = config_.depth;
    if (hidden.rank() != 3 || hidden.dim(0) != 1 || hidden.dim(2) != d) {
        throw ShapeError("block_forward: expected [1, n, " + std::to_string(d) + "], got " +
                         shape_to_string(hidden.shape()));
    }
    const std::size_t n = hidden.dim(1);
    if (position + n > cache.max_seq) {
        throw std::out_of_range("kv cache overflow: position " + std::to_string(position + n) + " > " +
                                std::to_string(cache.max_seq));
    }

    const Tensor flat = hidden.reshaped({n, d});
    const Tensor x = layer_norm_pre(flat, w.attn_gain);
    const Tensor q = matmul(x, w.wq);
    const Tensor k = matmul(x, w.wk);
    const Tensor v = matmul(x, w.wv);

    std::vector<float>& keys = cache.keys.at(layer);
    std::vector<float>& values = cache.values.at(layer);
    std::copy(k.data().begin(), k.data().end(), keys.begin() + static_cast<std::ptrdiff_t>(position * d));
    std::copy(v.data().begin(), v.data().end(), values.begin() + static_cast<std::ptrdiff_t>(position * d));

    const std::size_t heads = config_.head_count;
    const std::size_t head_dim = d / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
    Tensor attended({n, d});
    std::vector<float> scores(position + n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t visible = position + i + 1;  // causal
        for (std::size_t hd = 0; hd < heads; ++hd) {
            const std::size_t off = hd * head_dim;
            float peak = -INFINITY;
            for (std::size_t j = 0; j < visible; ++j) {
                float s = 0.0f;
                for (std::size_t c = 0; c < head_dim; ++c) s += q[i * d + off + c] * keys[j * d + off + c];
                scores[j] = s * scale;
                peak = std::max(peak, scores[j]);
            }
            float total = 0.0f;
            for (std::size_t j = 0; j < visible; ++j) {
                scores[j] = std::exp(scores[j] - peak);
                total += scores[j];
            }
            for (std::size_t j = 0; j < visible; ++j) {
                const float a = scores[j] / total;
                for (std::size_t c = 0; c < head_dim; ++c) attended[i * d + off + c] += a * values[j * d + off + c];
            }
        }
    }

    Tensor resid = flat;
    const Tensor attn_out = matmul(attended, w.wo);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] += attn_out[i];

    Tensor up = matmul(layer_norm_pre(resid, w.ffn_gain), w.w_up);
    for (float& u : up.data()) u = gelu(u);
    const Tensor down = matmul(up, w.w_down);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] += down[i];

    return resid.reshaped({1, n, d});
}

LayerStack ToyModel::layer_stack(KvCache& cache, std::size_t position) const {
    LayerStack stack;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        stack.push_back([this, i, &cache, position](const Tensor& h) { return block_forward(i, h, cache, position); });
    }
    return stack;
}

Tensor ToyModel::logits(const Tensor& hidden) const {
    const std::size_t d = config_.depth;
    if (hidden.rank() != 3 || hidden.dim(0) != 1 || hidden.dim(2) != d) {
        throw ShapeError("logits: expected [1, n, " + std::to_string(d) + "], got " + shape_to_string(hidden.shape()));
    }
    const std::size_t n = hidden.dim(1);
    const Tensor x = layer_norm_pre(hidden.reshaped({n, d}), final_gain_);
    Tensor out({n, config_.vocab_size});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < config_.vocab_size; ++t) {
            float s = 0.0f;
            for (std::size_t k = 0; k < d; ++k) s += x[i * d + k] * token_embedding_[t * d + k];
            out[i * config_.vocab_size + t] = s;
        }
    }
    return out;
}

std::vector<int> encode_bytes(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(static_cast<unsigned char>(c));
    return out;
}

std::string decode_bytes(std::span<const int> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) out.push_back(static_cast<char>(t & 0xff));
    return out;
}

}  // namespace lac
