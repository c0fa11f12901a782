#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lac {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major float32 tensor with an explicit shape.
///
/// The only invariant is that the product of the extents equals the number
/// of stored values; no strides, no views.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, float value);
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0f); }
    static Tensor identity(std::size_t n);
    /// Values uniform in [lo, hi) drawn from Xoshiro256(seed).
    static Tensor random_uniform(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // Rank-3 accessors for hidden states laid out as (batch, length, depth).
    float& at(std::size_t b, std::size_t l, std::size_t d) {
        return data_[(b * shape_[1] + l) * shape_[2] + d];
    }
    float at(std::size_t b, std::size_t l, std::size_t d) const {
        return data_[(b * shape_[1] + l) * shape_[2] + d];
    }

    Tensor reshaped(Shape shape) const;

private:
    Shape shape_;
    std::vector<float> data_;
};

/// Same shape and identical bit patterns in every element.
bool bitwise_equal(const Tensor& a, const Tensor& b);
float max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

enum class NormGranularity { PerBatch, PerExample, PerToken };

std::string_view to_string(NormGranularity g);
NormGranularity parse_granularity(std::string_view name);

/// L2 norm of a (batch, length, depth) hidden state reduced at the given
/// granularity. Output shapes: PerBatch [1], PerExample [B,1], PerToken [B,L,1].
/// Sums are accumulated in double.
Tensor l2_norm(const Tensor& h, NormGranularity g);

/// Shape of the norm tensor l2_norm would produce for a hidden state of `hidden`.
Shape norm_shape(const Shape& hidden, NormGranularity g);

/// Index of the halting unit that owns token (b, l) at granularity g.
std::size_t unit_index(NormGranularity g, const Shape& hidden, std::size_t b, std::size_t l);

Tensor matmul(const Tensor& a, const Tensor& b);

/// RMS normalization over the last axis followed by an elementwise gain:
/// y = x / sqrt(mean(x^2) + eps) * gain.
Tensor layer_norm_pre(const Tensor& h, const Tensor& gain, float eps = 1e-5f);

}  // namespace lac
