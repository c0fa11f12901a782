#include "lac/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "lac/error.hpp"

namespace lac {

std::string_view to_string(Phase p) { return p == Phase::PP ? "PP" : "RG"; }

Phase parse_phase(std::string_view name) {
    if (name == "PP") return Phase::PP;
    if (name == "RG") return Phase::RG;
    throw FormatError("unknown phase '" + std::string(name) + "'");
}

std::size_t TraceRecord::active_layers() const {
    return static_cast<std::size_t>(std::count(layer_flags.begin(), layer_flags.end(), true));
}

std::vector<TraceRecord> records_from_outcome(const ExecutionOutcome& outcome, const Shape& hidden_shape,
                                              std::span<const int> token_ids, std::size_t first_token_index,
                                              Phase phase, const std::string& sequence_id,
                                              const HaltPolicy& policy) {
    if (hidden_shape.size() != 3) throw ShapeError("records_from_outcome: hidden shape must be rank 3");
    const std::size_t batch = hidden_shape[0], length = hidden_shape[1];
    if (token_ids.size() != batch * length) {
        throw ShapeError("records_from_outcome: " + std::to_string(token_ids.size()) + " token ids for a " +
                         shape_to_string(hidden_shape) + " grid");
    }
    const std::size_t layers = outcome.layer_count();
    std::vector<TraceRecord> records;
    records.reserve(batch * length);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t l = 0; l < length; ++l) {
            const std::size_t unit = unit_index(policy.granularity, hidden_shape, b, l);
            TraceRecord r;
            r.sequence_id = sequence_id;
            r.token_index = first_token_index + l;
            r.phase = phase;
            r.token_id = token_ids[b * length + l];
            r.alpha = policy.alpha;
            r.formula = std::string(to_string(policy.formula));
            r.skip_mode = std::string(to_string(policy.skip_mode));
            r.layer_flags.reserve(layers);
            for (std::size_t t = 0; t < layers; ++t) {
                r.layer_flags.push_back(!outcome.void_flags[t][unit]);
                r.layer_norms.push_back(outcome.norms[t][unit]);
                r.layer_deltas.push_back(outcome.deltas[t][unit]);
            }
            records.push_back(std::move(r));
        }
    }
    return records;
}

void validate_record(const TraceRecord& r) {
    if (r.layer_norms.size() != r.layer_flags.size() || r.layer_deltas.size() != r.layer_flags.size()) {
        throw FormatError("trace record " + r.sequence_id + "/" + std::to_string(r.token_index) +
                          ": flag/norm/delta lengths differ (" + std::to_string(r.layer_flags.size()) + "/" +
                          std::to_string(r.layer_norms.size()) + "/" + std::to_string(r.layer_deltas.size()) + ")");
    }
}

namespace {

using json = nlohmann::json;

void append_number(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    out += buf;
}

void append_floats(std::string& out, const std::vector<float>& values) {
    out += '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        append_number(out, values[i]);
    }
    out += ']';
}

}  // namespace

std::string format_trace_line(const TraceRecord& r) {
    validate_record(r);
    std::string line = "{\"sequence_id\":" + json(r.sequence_id).dump();
    line += ",\"token_index\":" + std::to_string(r.token_index);
    line += ",\"phase\":\"" + std::string(to_string(r.phase)) + "\"";
    line += ",\"token_id\":" + std::to_string(r.token_id);
    line += ",\"layer_flags\":[";
    for (std::size_t i = 0; i < r.layer_flags.size(); ++i) {
        if (i) line += ',';
        line += r.layer_flags[i] ? '1' : '0';
    }
    line += "],\"layer_norms\":";
    append_floats(line, r.layer_norms);
    line += ",\"layer_deltas\":";
    append_floats(line, r.layer_deltas);
    line += ",\"alpha\":";
    append_number(line, r.alpha);
    line += ",\"formula\":" + json(r.formula).dump();
    line += ",\"skip_mode\":" + json(r.skip_mode).dump();
    line += "}\n";
    return line;
}

std::size_t write_trace(std::span<const TraceRecord> records, std::ostream& sink) {
    std::size_t written = 0;
    for (const TraceRecord& r : records) {
        const std::string line = format_trace_line(r);
        sink.write(line.data(), static_cast<std::streamsize>(line.size()));
        if (!sink) throw std::runtime_error("trace sink write failed");
        written += line.size();
    }
    return written;
}

std::vector<TraceRecord> read_trace(std::istream& source) {
    std::vector<TraceRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            TraceRecord r;
            r.sequence_id = j.at("sequence_id").get<std::string>();
            r.token_index = j.at("token_index").get<std::size_t>();
            r.phase = parse_phase(j.at("phase").get<std::string>());
            r.token_id = j.at("token_id").get<int>();
            for (const auto& flag : j.at("layer_flags")) {
                r.layer_flags.push_back(flag.is_boolean() ? flag.get<bool>() : flag.get<int>() != 0);
            }
            r.layer_norms = j.at("layer_norms").get<std::vector<float>>();
            r.layer_deltas = j.at("layer_deltas").get<std::vector<float>>();
            r.alpha = j.at("alpha").get<double>();
            r.formula = j.at("formula").get<std::string>();
            r.skip_mode = j.at("skip_mode").get<std::string>();
            validate_record(r);
            records.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw FormatError("trace line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

GrayImage render_bitmap(std::span<const TraceRecord> records, std::optional<Phase> phase) {
    std::vector<const TraceRecord*> columns;
    for (const TraceRecord& r : records) {
        if (!phase || r.phase == *phase) columns.push_back(&r);
    }
    if (columns.empty()) throw ConfigError("render_bitmap: no records to render");

    const std::size_t layers = columns.front()->layer_count();
    for (const TraceRecord* r : columns) {
        if (r->layer_count() != layers) throw ConfigError("render_bitmap: records have mixed layer counts");
        if (r->sequence_id != columns.front()->sequence_id) {
            throw ConfigError("render_bitmap: records span several sequences");
        }
    }
    std::stable_sort(columns.begin(), columns.end(),
                     [](const TraceRecord* a, const TraceRecord* b) { return a->token_index < b->token_index; });

    GrayImage image{columns.size(), layers, std::vector<std::uint8_t>(columns.size() * layers, 0)};
    for (std::size_t col = 0; col < columns.size(); ++col) {
        for (std::size_t t = 0; t < layers; ++t) {
            const std::size_t row = layers - 1 - t;
            image.pixels[row * image.width + col] = columns[col]->layer_flags[t] ? 255 : 0;
        }
    }
    return image;
}

std::string to_pgm(const GrayImage& image) {
    std::string out = "P2\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    for (std::size_t row = 0; row < image.height; ++row) {
        for (std::size_t col = 0; col < image.width; ++col) {
            if (col) out += ' ';
            out += std::to_string(image.at(row, col));
        }
        out += '\n';
    }
    return out;
}

GrayImage parse_pgm(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    bool comment = false;
    for (char c : text) {
        if (c == '#') comment = true;
        if (c == '\n') comment = false;
        cleaned += comment ? ' ' : c;
    }
    std::istringstream in(cleaned);
    std::string magic;
    long long width = -1, height = -1, maxval = -1;
    in >> magic >> width >> height >> maxval;
    if (!in || magic != "P2") throw FormatError("pgm: expected P2 header");
    if (width < 0 || height < 0 || maxval != 255) throw FormatError("pgm: unsupported dimensions or maxval");

    GrayImage image{static_cast<std::size_t>(width), static_cast<std::size_t>(height), {}};
    image.pixels.reserve(image.width * image.height);
    for (std::size_t i = 0; i < image.width * image.height; ++i) {
        long long v = -1;
        if (!(in >> v)) throw FormatError("pgm: expected " + std::to_string(image.width * image.height) +
                                          " pixels, got " + std::to_string(i));
        if (v < 0 || v > 255) throw FormatError("pgm: pixel value out of range");
        image.pixels.push_back(static_cast<std::uint8_t>(v));
    }
    std::string extra;
    if (in >> extra) throw FormatError("pgm: trailing data after pixels");
    return image;
}

}  // namespace lac
