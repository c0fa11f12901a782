#include "lac/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <utility>

#include "lac/error.hpp"
#include "lac/rng.hpp"

namespace lac {

std::string shape_to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_to_string(shape_) + " holds " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
    }
}

Tensor Tensor::full(Shape shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0f;
    return t;
}

Tensor Tensor::random_uniform(Shape shape, std::uint64_t seed, float lo, float hi) {
    Tensor t(std::move(shape));
    Xoshiro256 rng(seed);
    for (auto& v : t.data_) v = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return a.size() == 0 ||
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

bool all_finite(const Tensor& t) {
    for (float v : t.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string_view to_string(NormGranularity g) {
    switch (g) {
        case NormGranularity::PerBatch: return "batch";
        case NormGranularity::PerExample: return "example";
        case NormGranularity::PerToken: return "token";
    }
    return "token";
}

NormGranularity parse_granularity(std::string_view name) {
    if (name == "batch") return NormGranularity::PerBatch;
    if (name == "example") return NormGranularity::PerExample;
    if (name == "token") return NormGranularity::PerToken;
    throw ConfigError("unknown granularity '" + std::string(name) + "'");
}

namespace {

void require_hidden(const Shape& shape, std::string_view what) {
    if (shape.size() != 3) {
        throw ShapeError(std::string(what) + ": expected rank-3 (batch, length, depth), got " +
                         shape_to_string(shape));
    }
}

}  // namespace

Shape norm_shape(const Shape& hidden, NormGranularity g) {
    require_hidden(hidden, "norm_shape");
    switch (g) {
        case NormGranularity::PerBatch: return {1};
        case NormGranularity::PerExample: return {hidden[0], 1};
        case NormGranularity::PerToken: return {hidden[0], hidden[1], 1};
    }
    return {1};
}

std::size_t unit_index(NormGranularity g, const Shape& hidden, std::size_t b, std::size_t l) {
    switch (g) {
        case NormGranularity::PerBatch: return 0;
        case NormGranularity::PerExample: return b;
        case NormGranularity::PerToken: return b * hidden[1] + l;
    }
    return 0;
}

Tensor l2_norm(const Tensor& h, NormGranularity g) {
    require_hidden(h.shape(), "l2_norm");
    if (!all_finite(h)) throw NumericError("l2_norm: input contains NaN or Inf");

    const std::size_t batch = h.dim(0), length = h.dim(1), depth = h.dim(2);
    const Shape out_shape = norm_shape(h.shape(), g);
    std::vector<double> sums(shape_numel(out_shape), 0.0);

    auto in = h.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t l = 0; l < length; ++l) {
            const float* row = in.data() + (b * length + l) * depth;
            double acc = 0.0;
            for (std::size_t d = 0; d < depth; ++d) acc += static_cast<double>(row[d]) * row[d];
            sums[unit_index(g, h.shape(), b, l)] += acc;
        }
    }

    std::vector<float> out(sums.size());
    for (std::size_t i = 0; i < sums.size(); ++i) out[i] = static_cast<float>(std::sqrt(sums[i]));
    return Tensor(out_shape, std::move(out));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    auto ad = a.data();
    auto bd = b.data();
    auto cd = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = cd.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const float aip = ad[i * k + p];
            const float* brow = bd.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

Tensor layer_norm_pre(const Tensor& h, const Tensor& gain, float eps) {
    if (h.rank() == 0 || gain.rank() != 1 || gain.dim(0) != h.shape().back()) {
        throw ShapeError("layer_norm_pre: gain " + shape_to_string(gain.shape()) +
                         " does not match depth of " + shape_to_string(h.shape()));
    }
    const std::size_t depth = gain.dim(0);
    Tensor out(h.shape());
    if (depth == 0) return out;
    auto in = h.data();
    auto g = gain.data();
    auto o = out.data();
    for (std::size_t row = 0; row < h.size() / depth; ++row) {
        const float* x = in.data() + row * depth;
        double ss = 0.0;
        for (std::size_t d = 0; d < depth; ++d) ss += static_cast<double>(x[d]) * x[d];
        const float inv = static_cast<float>(1.0 / std::sqrt(ss / depth + eps));
        for (std::size_t d = 0; d < depth; ++d) o[row * depth + d] = x[d] * inv * g[d];
    }
    return out;
}

}  // namespace lac
