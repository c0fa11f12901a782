#include "lac/tensor_file.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "lac/error.hpp"

namespace lac {

namespace {

using json = nlohmann::json;

constexpr std::size_t kPreambleSize = 12;

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_le(std::string_view bytes, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return v;
}

void put_f32_le(std::string& out, float f) {
    put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace

std::string encode_tensor_file(const TensorFile& file) {
    json header = json::object();
    if (!file.metadata.empty()) header["__metadata__"] = file.metadata;

    // std::map iteration gives name order, which is also payload order.
    std::size_t offset = 0;
    for (const auto& [name, tensor] : file.tensors) {
        if (name == "__metadata__") throw ConfigError("tensor name '__metadata__' is reserved");
        header[name] = {{"dtype", "f32"}, {"shape", tensor.shape()}, {"offset", offset}};
        offset += tensor.size() * sizeof(float);
    }

    const std::string header_text = header.dump();
    std::string out;
    out.reserve(kPreambleSize + header_text.size() + offset);
    out.append(kTensorFileMagic);
    put_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
    out.append(header_text);
    for (const auto& [name, tensor] : file.tensors) {
        for (float v : tensor.data()) put_f32_le(out, v);
    }
    return out;
}

TensorFile decode_tensor_file(std::string_view bytes) {
    if (bytes.size() < kPreambleSize || bytes.substr(0, kTensorFileMagic.size()) != kTensorFileMagic) {
        throw FormatError("tensor file: bad magic");
    }
    const std::size_t header_len = get_u32_le(bytes, 8);
    if (bytes.size() < kPreambleSize + header_len) {
        throw FormatError("tensor file: header length " + std::to_string(header_len) +
                          " exceeds file size " + std::to_string(bytes.size()));
    }

    json header;
    try {
        header = json::parse(bytes.substr(kPreambleSize, header_len));
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("tensor file: malformed header: ") + e.what());
    }
    if (!header.is_object()) throw FormatError("tensor file: header is not a JSON object");

    const std::string_view payload = bytes.substr(kPreambleSize + header_len);
    TensorFile file;
    std::size_t declared = 0;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") {
            for (const auto& [key, value] : entry.items()) file.metadata[key] = value.get<std::string>();
            continue;
        }
        try {
            if (entry.at("dtype").get<std::string>() != "f32") {
                throw FormatError("tensor file: '" + name + "' has unsupported dtype");
            }
            Shape shape = entry.at("shape").get<Shape>();
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            const std::size_t count = shape_numel(shape);
            const std::size_t nbytes = count * sizeof(float);
            if (offset + nbytes > payload.size()) {
                throw FormatError("tensor file: payload length mismatch for '" + name + "' (needs " +
                                  std::to_string(offset + nbytes) + " bytes, payload has " +
                                  std::to_string(payload.size()) + ")");
            }
            std::vector<float> data(count);
            for (std::size_t i = 0; i < count; ++i) {
                data[i] = std::bit_cast<float>(get_u32_le(payload, offset + i * sizeof(float)));
            }
            file.tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
            declared += nbytes;
        } catch (const json::exception& e) {
            throw FormatError("tensor file: bad entry '" + name + "': " + e.what());
        }
    }
    if (declared != payload.size()) {
        throw FormatError("tensor file: payload length mismatch (header declares " +
                          std::to_string(declared) + " bytes, payload has " +
                          std::to_string(payload.size()) + ")");
    }
    return file;
}

void save_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
    const std::string bytes = encode_tensor_file(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

TensorFile load_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor_file(bytes);
}

}  // namespace lac
