#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lac/tensor.hpp"

namespace lac {

/// Contents of a LACTNSR1 container: named float32 tensors plus string metadata.
///
/// Layout (all integers little-endian):
///   bytes 0..7    magic "LACTNSR1"
///   bytes 8..11   uint32 header length N
///   next N bytes  UTF-8 JSON header
///   remainder     float32 payload
/// The header maps each tensor name to {"dtype":"f32","shape":[...],"offset":o}
/// where o is a byte offset into the payload. The reserved key "__metadata__"
/// holds a flat string->string object.
struct TensorFile {
    std::map<std::string, std::string> metadata;
    std::map<std::string, Tensor> tensors;
};

inline constexpr std::string_view kTensorFileMagic = "LACTNSR1";

std::string encode_tensor_file(const TensorFile& file);
TensorFile decode_tensor_file(std::string_view bytes);

void save_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile load_tensor_file(const std::filesystem::path& path);

}  // namespace lac
