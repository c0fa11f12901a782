#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lac/halting.hpp"
#include "lac/trace.hpp"

namespace lac {

struct PhaseUsage {
    std::size_t token_count = 0;
    std::vector<double> frequency;  // per layer, fraction of tokens with the layer active
    std::vector<double> normalized;  // frequency / max frequency of this phase
    double average_usage = 0.0;  // mean over tokens of active_layers / layer_count
};

/// Usage statistics split by phase. A phase with no tokens is absent.
struct LayerUsageReport {
    std::size_t layer_count = 0;
    std::optional<PhaseUsage> pp;
    std::optional<PhaseUsage> rg;
    double alpha = 0.0;
    std::string formula;

    const std::optional<PhaseUsage>& phase(Phase p) const { return p == Phase::PP ? pp : rg; }
};

struct PhaseProfile {
    std::size_t token_count = 0;
    std::vector<double> mean_norm;
    std::vector<double> mean_delta;
};

struct NormProfile {
    std::size_t layer_count = 0;
    std::optional<PhaseProfile> pp;
    std::optional<PhaseProfile> rg;

    const std::optional<PhaseProfile>& phase(Phase p) const { return p == Phase::PP ? pp : rg; }
};

LayerUsageReport usage_report(std::span<const TraceRecord> records);
NormProfile norm_profile(std::span<const TraceRecord> records);

/// Copies of `records` whose flags are recomputed offline from layer_deltas.
std::vector<TraceRecord> redetect(std::span<const TraceRecord> records, double alpha, ThresholdFormula formula,
                                  std::size_t min_layers);

struct SweepPoint {
    double alpha = 0.0;
    LayerUsageReport report;
};

std::vector<SweepPoint> alpha_sweep(std::span<const TraceRecord> records, std::span<const double> alphas,
                                    ThresholdFormula formula, std::size_t min_layers);

/// One row of the per-layer CSV; absent phases leave their columns empty.
struct LayerRow {
    std::size_t layer_index = 0;  // 1-based
    std::optional<double> pp_frequency, rg_frequency;
    std::optional<double> pp_mean_norm, rg_mean_norm;
    std::optional<double> pp_mean_delta, rg_mean_delta;

    bool operator==(const LayerRow&) const = default;
};

inline constexpr std::string_view kLayerCsvHeader =
    "layer_index,pp_frequency,rg_frequency,pp_mean_norm,rg_mean_norm,pp_mean_delta,rg_mean_delta";

std::vector<LayerRow> layer_rows(const LayerUsageReport& usage, const NormProfile& profile);
std::string layers_csv(const LayerUsageReport& usage, const NormProfile& profile);
std::vector<LayerRow> parse_layers_csv(std::string_view text);

std::string normalized_usage_csv(const LayerUsageReport& usage);
std::string summary_json(const LayerUsageReport& usage);

/// Writes layers.csv, usage_normalized.csv and summary.json into `dir`.
void export_reports(const LayerUsageReport& usage, const NormProfile& profile, const std::filesystem::path& dir);

/// Shortest decimal form (at least 9 significant digits) that parses back to `v`.
std::string format_number(double v);

}  // namespace lac
