#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <unistd.h>
#include <string>

#include "lac/toy_model.hpp"

namespace lac::testing {

inline std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("lac_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Tensor transpose(const Tensor& m) {
    Tensor t({m.dim(1), m.dim(0)});
    for (std::size_t i = 0; i < m.dim(0); ++i)
        for (std::size_t j = 0; j < m.dim(1); ++j) t[j * m.dim(0) + i] = m[i * m.dim(1) + j];
    return t;
}

// Attention output off and FFN tied (w_down = scale * w_up^T). With x = h / rms(h) and
// z = x W_up, the block adds f with h.f = rms(h) * scale * sum(z * gelu(z)), and
// z * gelu(z) >= 0, so a positive scale always grows the norm and a small negative
// scale always shrinks it.
inline void make_tied_block(BlockWeights& b, float scale) {
    b.wo = Tensor::zeros(b.wo.shape());
    b.w_down = transpose(b.w_up);
    for (float& v : b.w_down.data()) v *= scale;
}

inline ToyModel monotone_model(ModelConfig config) {
    ToyModel m = ToyModel::build(config);
    for (std::size_t i = 0; i < m.layer_count(); ++i) make_tied_block(m.block(i), 1.0f);
    return m;
}

}  // namespace lac::testing
