#include "lac/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lac/error.hpp"

namespace lac {

std::string format_number(double v) {
    char buf[32];
    for (int digits = 9; digits < 17; ++digits) {
        std::snprintf(buf, sizeof buf, "%.*g", digits, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::size_t common_layer_count(std::span<const TraceRecord> records, const char* what) {
    if (records.empty()) throw ConfigError(std::string(what) + ": no records");
    const std::size_t layers = records.front().layer_count();
    for (const TraceRecord& r : records) {
        if (r.layer_count() != layers) throw ConfigError(std::string(what) + ": records have mixed layer counts");
    }
    return layers;
}

PhaseUsage usage_for(std::span<const TraceRecord> records, Phase phase, std::size_t layers) {
    PhaseUsage u;
    std::vector<std::size_t> counts(layers, 0);
    double usage_sum = 0.0;
    for (const TraceRecord& r : records) {
        if (r.phase != phase) continue;
        ++u.token_count;
        for (std::size_t t = 0; t < layers; ++t) counts[t] += r.layer_flags[t] ? 1 : 0;
        usage_sum += layers ? static_cast<double>(r.active_layers()) / static_cast<double>(layers) : 0.0;
    }
    if (u.token_count == 0) return u;
    u.average_usage = usage_sum / static_cast<double>(u.token_count);
    for (std::size_t c : counts) u.frequency.push_back(static_cast<double>(c) / static_cast<double>(u.token_count));
    const double peak = u.frequency.empty() ? 0.0 : *std::max_element(u.frequency.begin(), u.frequency.end());
    for (double f : u.frequency) u.normalized.push_back(peak > 0.0 ? f / peak : 0.0);
    return u;
}

PhaseProfile profile_for(std::span<const TraceRecord> records, Phase phase, std::size_t layers) {
    PhaseProfile p;
    p.mean_norm.assign(layers, 0.0);
    p.mean_delta.assign(layers, 0.0);
    for (const TraceRecord& r : records) {
        if (r.phase != phase) continue;
        validate_record(r);
        ++p.token_count;
        for (std::size_t t = 0; t < layers; ++t) {
            p.mean_norm[t] += r.layer_norms[t];
            p.mean_delta[t] += r.layer_deltas[t];
        }
    }
    for (std::size_t t = 0; t < layers && p.token_count; ++t) {
        p.mean_norm[t] /= static_cast<double>(p.token_count);
        p.mean_delta[t] /= static_cast<double>(p.token_count);
    }
    return p;
}

}  // namespace

LayerUsageReport usage_report(std::span<const TraceRecord> records) {
    LayerUsageReport report;
    report.layer_count = common_layer_count(records, "usage_report");
    report.alpha = records.front().alpha;
    report.formula = records.front().formula;
    for (Phase phase : {Phase::PP, Phase::RG}) {
        PhaseUsage u = usage_for(records, phase, report.layer_count);
        if (u.token_count == 0) continue;
        (phase == Phase::PP ? report.pp : report.rg) = std::move(u);
    }
    return report;
}

NormProfile norm_profile(std::span<const TraceRecord> records) {
    NormProfile profile;
    profile.layer_count = common_layer_count(records, "norm_profile");
    for (Phase phase : {Phase::PP, Phase::RG}) {
        PhaseProfile p = profile_for(records, phase, profile.layer_count);
        if (p.token_count == 0) continue;
        (phase == Phase::PP ? profile.pp : profile.rg) = std::move(p);
    }
    return profile;
}

std::vector<TraceRecord> redetect(std::span<const TraceRecord> records, double alpha, ThresholdFormula formula,
                                  std::size_t min_layers) {
    std::vector<TraceRecord> out;
    out.reserve(records.size());
    for (const TraceRecord& r : records) {
        if (r.layer_deltas.size() != r.layer_count() || r.layer_deltas.empty()) {
            throw ConfigError("alpha sweep: record " + r.sequence_id + "/" + std::to_string(r.token_index) +
                              " is missing layer deltas");
        }
        TraceRecord copy = r;
        copy.alpha = alpha;
        copy.formula = std::string(to_string(formula));
        copy.skip_mode = std::string(to_string(SkipMode::Detect));
        std::fill(copy.layer_flags.begin(), copy.layer_flags.end(), true);
        for (std::size_t t : detect_voids_offline(r.layer_deltas, alpha, formula, min_layers)) {
            copy.layer_flags[t] = false;
        }
        out.push_back(std::move(copy));
    }
    return out;
}

std::vector<SweepPoint> alpha_sweep(std::span<const TraceRecord> records, std::span<const double> alphas,
                                    ThresholdFormula formula, std::size_t min_layers) {
    std::vector<SweepPoint> points;
    for (double alpha : alphas) {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha sweep: alpha must lie in (0, 1]");
        if (min_layers < 1) throw ConfigError("alpha sweep: min_layers must be at least 1");
        const auto flagged = redetect(records, alpha, formula, min_layers);
        points.push_back({alpha, usage_report(flagged)});
    }
    return points;
}

std::vector<LayerRow> layer_rows(const LayerUsageReport& usage, const NormProfile& profile) {
    if (usage.layer_count != profile.layer_count) throw ConfigError("usage and norm profile disagree on layer count");
    std::vector<LayerRow> rows;
    for (std::size_t t = 0; t < usage.layer_count; ++t) {
        LayerRow row;
        row.layer_index = t + 1;
        if (usage.pp) row.pp_frequency = usage.pp->frequency[t];
        if (usage.rg) row.rg_frequency = usage.rg->frequency[t];
        if (profile.pp) {
            row.pp_mean_norm = profile.pp->mean_norm[t];
            row.pp_mean_delta = profile.pp->mean_delta[t];
        }
        if (profile.rg) {
            row.rg_mean_norm = profile.rg->mean_norm[t];
            row.rg_mean_delta = profile.rg->mean_delta[t];
        }
        rows.push_back(row);
    }
    return rows;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::optional<double> parse_cell(const std::string& text, std::size_t line_no) {
    if (text.empty()) return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw FormatError("layers csv line " + std::to_string(line_no) + ": bad number '" + text + "'");
    }
}

}  // namespace

std::string layers_csv(const LayerUsageReport& usage, const NormProfile& profile) {
    std::string out(kLayerCsvHeader);
    out += '\n';
    for (const LayerRow& r : layer_rows(usage, profile)) {
        out += std::to_string(r.layer_index) + ',' + cell(r.pp_frequency) + ',' + cell(r.rg_frequency) + ',' +
               cell(r.pp_mean_norm) + ',' + cell(r.rg_mean_norm) + ',' + cell(r.pp_mean_delta) + ',' +
               cell(r.rg_mean_delta) + '\n';
    }
    return out;
}

std::vector<LayerRow> parse_layers_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != kLayerCsvHeader) throw FormatError("layers csv: unexpected header");
    std::vector<LayerRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        if (fields.size() != 7) {
            throw FormatError("layers csv line " + std::to_string(line_no) + ": expected 7 fields, got " +
                              std::to_string(fields.size()));
        }
        LayerRow row;
        const auto index = parse_cell(fields[0], line_no);
        if (!index) throw FormatError("layers csv line " + std::to_string(line_no) + ": missing layer_index");
        row.layer_index = static_cast<std::size_t>(*index);
        row.pp_frequency = parse_cell(fields[1], line_no);
        row.rg_frequency = parse_cell(fields[2], line_no);
        row.pp_mean_norm = parse_cell(fields[3], line_no);
        row.rg_mean_norm = parse_cell(fields[4], line_no);
        row.pp_mean_delta = parse_cell(fields[5], line_no);
        row.rg_mean_delta = parse_cell(fields[6], line_no);
        rows.push_back(row);
    }
    return rows;
}

std::string normalized_usage_csv(const LayerUsageReport& usage) {
    std::string out = "layer_index,pp_normalized,rg_normalized\n";
    for (std::size_t t = 0; t < usage.layer_count; ++t) {
        out += std::to_string(t + 1) + ',' + (usage.pp ? format_number(usage.pp->normalized[t]) : "") + ',' +
               (usage.rg ? format_number(usage.rg->normalized[t]) : "") + '\n';
    }
    return out;
}

std::string summary_json(const LayerUsageReport& usage) {
    using ojson = nlohmann::ordered_json;
    ojson j;
    j["layer_count"] = usage.layer_count;
    j["alpha"] = usage.alpha;
    j["formula"] = usage.formula;
    j["normalization"] = "per phase: layer frequency divided by the highest layer frequency of that phase";
    ojson phases = ojson::object();
    ojson table = ojson::object();
    for (Phase p : {Phase::PP, Phase::RG}) {
        const auto& u = usage.phase(p);
        if (!u) continue;
        phases[std::string(to_string(p))] = {{"tokens", u->token_count}, {"average_usage", u->average_usage}};
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", u->average_usage);
        table[std::string(to_string(p))] = buf;
    }
    j["phases"] = phases;
    j["table"] = table;
    return j.dump(2) + "\n";
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

void export_reports(const LayerUsageReport& usage, const NormProfile& profile, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "layers.csv", layers_csv(usage, profile));
    write_text(dir / "usage_normalized.csv", normalized_usage_csv(usage));
    write_text(dir / "summary.json", summary_json(usage));
}

}  // namespace lac
