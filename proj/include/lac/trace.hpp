#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lac/halting.hpp"
#include "lac/skip_executor.hpp"

namespace lac {

/// PP: prompt tokens forwarded as one grid. RG: generated tokens, one per forward.
enum class Phase { PP, RG };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view name);

/// Per-token view of one forward pass: which layers were active, the
/// post-layer norm and the progress each layer made.
struct TraceRecord {
    std::string sequence_id;
    std::size_t token_index = 0;
    Phase phase = Phase::PP;
    int token_id = 0;
    std::vector<bool> layer_flags;  // true = activated
    std::vector<float> layer_norms;
    std::vector<float> layer_deltas;
    double alpha = 0.0;
    std::string formula;
    std::string skip_mode;

    std::size_t layer_count() const { return layer_flags.size(); }
    std::size_t active_layers() const;

    bool operator==(const TraceRecord&) const = default;
};

/// One record per (batch, length) position of the executed grid, in row-major
/// order. `token_ids` has one id per position; token_index counts from
/// `first_token_index` along the length axis.
std::vector<TraceRecord> records_from_outcome(const ExecutionOutcome& outcome, const Shape& hidden_shape,
                                              std::span<const int> token_ids, std::size_t first_token_index,
                                              Phase phase, const std::string& sequence_id,
                                              const HaltPolicy& policy);

/// Checks the record's internal invariants; throws FormatError.
void validate_record(const TraceRecord& record);

/// Writes one JSON object per line with a fixed key order. Returns bytes written.
std::size_t write_trace(std::span<const TraceRecord> records, std::ostream& sink);
std::string format_trace_line(const TraceRecord& record);

/// Parses a JSONL trace. Blank lines are skipped; errors carry the line number.
std::vector<TraceRecord> read_trace(std::istream& source);

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, top row first

    std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
    bool operator==(const GrayImage&) const = default;
};

/// Token x layer activation map for one sequence. Columns follow token_index;
/// the last layer is the top row so layer 1 sits at the bottom. Active = 255.
GrayImage render_bitmap(std::span<const TraceRecord> records, std::optional<Phase> phase = std::nullopt);

/// ASCII PGM (P2), maxval 255, one image row per text line.
std::string to_pgm(const GrayImage& image);
GrayImage parse_pgm(std::string_view text);

}  // namespace lac
