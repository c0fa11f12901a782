#include "lac/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "lac/analysis.hpp"
#include "lac/error.hpp"
#include "lac/suites.hpp"
#include "lac/toy_model.hpp"
#include "lac/trace.hpp"

namespace lac::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunSpec {
    std::string seed_model;
    std::string weights;
    std::string prompt;
    std::string prompt_file;
    std::string suite;
    double alpha = 0.8;
    std::string granularity = "token";
    std::string formula = "modified";
    std::string mode = "detect";
    std::size_t min_layers = 1;
    std::size_t max_new = 8;
    std::string out = ".";
    std::uint64_t seed = 0;
    std::size_t suite_size = 16;
};

struct Sequence {
    std::string id;
    std::vector<int> prompt;
};

struct SequenceResult {
    std::vector<TraceRecord> records;
    std::vector<int> generated;
};

void add_model_options(CLI::App& cmd, RunSpec& spec) {
    cmd.add_option("--seed-model", spec.seed_model, "Synthetic model, e.g. d8,h2,l4[,f32][,s256]");
    cmd.add_option("--weights", spec.weights, "LACTNSR1 weight file");
    cmd.add_option("--prompt", spec.prompt, "Literal prompt text");
    cmd.add_option("--prompt-file", spec.prompt_file, "One prompt per non-empty line");
    cmd.add_option("--suite", spec.suite, "Synthetic suite: copy or sorted (comma-separated for compare)");
    cmd.add_option("--suite-size", spec.suite_size, "Items per synthetic suite");
    cmd.add_option("--max-new", spec.max_new, "Tokens to generate per sequence");
    cmd.add_option("--seed", spec.seed, "Seed for synthetic weights and suites");
}

void add_policy_options(CLI::App& cmd, RunSpec& spec) {
    cmd.add_option("--alpha", spec.alpha, "Threshold scale in (0, 1]");
    cmd.add_option("--granularity", spec.granularity, "batch | example | token");
    cmd.add_option("--formula", spec.formula, "original | modified");
    cmd.add_option("--mode", spec.mode, "off | detect | mask-zero | skip-identity | halt-frozen");
    cmd.add_option("--min-layers", spec.min_layers, "Leading layers that always execute");
}

HaltPolicy policy_from(const RunSpec& spec) {
    HaltPolicy p;
    try {
        p.granularity = parse_granularity(spec.granularity);
        p.formula = parse_formula(spec.formula);
        p.skip_mode = parse_skip_mode(spec.mode);
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    if (!(spec.alpha > 0.0 && spec.alpha <= 1.0)) throw UsageError("--alpha must lie in (0, 1]");
    if (spec.min_layers < 1) throw UsageError("--min-layers must be at least 1");
    p.alpha = spec.alpha;
    p.min_layers = spec.min_layers;
    return p;
}

ModelConfig parse_seed_model(const std::string& text, std::uint64_t seed) {
    ModelConfig c;
    c.seed = seed;
    bool ffn_given = false;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        if (part.size() < 2) throw UsageError("bad --seed-model component '" + part + "'");
        std::size_t value = 0;
        try {
            std::size_t used = 0;
            value = std::stoul(part.substr(1), &used);
            if (used != part.size() - 1) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw UsageError("bad --seed-model component '" + part + "'");
        }
        switch (part[0]) {
            case 'd': c.depth = value; break;
            case 'h': c.head_count = value; break;
            case 'l': c.layer_count = value; break;
            case 'f': c.ffn_dim = value; ffn_given = true; break;
            case 's': c.max_seq = value; break;
            default: throw UsageError("unknown --seed-model key '" + part.substr(0, 1) + "'");
        }
    }
    if (!ffn_given) c.ffn_dim = 4 * c.depth;
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    return c;
}

ToyModel model_from(const RunSpec& spec) {
    const bool seeded = !spec.seed_model.empty();
    const bool loaded = !spec.weights.empty();
    if (seeded == loaded) throw UsageError("give exactly one of --seed-model or --weights");
    if (seeded) return ToyModel::build(parse_seed_model(spec.seed_model, spec.seed));
    return ToyModel::load(spec.weights);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        if (!part.empty()) parts.push_back(part);
    }
    return parts;
}

std::vector<Sequence> sequences_from(const RunSpec& spec) {
    const int sources = !spec.prompt.empty() + !spec.prompt_file.empty() + !spec.suite.empty();
    if (sources != 1) throw UsageError("give exactly one of --prompt, --prompt-file or --suite");
    std::vector<Sequence> seqs;
    if (!spec.prompt.empty()) {
        seqs.push_back({"seq-0", encode_bytes(spec.prompt)});
    } else if (!spec.prompt_file.empty()) {
        std::ifstream in(spec.prompt_file);
        if (!in) throw std::runtime_error("cannot open prompt file '" + spec.prompt_file + "'");
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            seqs.push_back({"seq-" + std::to_string(seqs.size()), encode_bytes(line)});
        }
        if (seqs.empty()) throw std::runtime_error("prompt file '" + spec.prompt_file + "' has no prompts");
    } else {
        for (const std::string& name : split_list(spec.suite)) {
            std::vector<SuiteItem> items;
            try {
                items = make_suite(name, spec.seed, spec.suite_size);
            } catch (const ConfigError& e) {
                throw UsageError(e.what());
            }
            for (std::size_t i = 0; i < items.size(); ++i) {
                seqs.push_back({name + "-" + std::to_string(i), encode_bytes(items[i].prompt)});
            }
        }
    }
    return seqs;
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LAC_VOID_THREADS")) {
        try {
            workers = std::max<std::size_t>(1, std::stoul(env));
        } catch (const std::exception&) {
            throw UsageError("LAC_VOID_THREADS must be a positive integer");
        }
    }
    return std::min(workers, std::max<std::size_t>(jobs, 1));
}

// Sequences are independent; results are merged in input order so output is
// identical for any worker count.
std::vector<SequenceResult> run_sequences(const ToyModel& model, const std::vector<Sequence>& seqs,
                                          const HaltPolicy& policy, std::size_t max_new) {
    for (const Sequence& s : seqs) {
        if (s.prompt.size() + max_new > model.config().max_seq) {
            throw std::runtime_error(s.id + ": prompt (" + std::to_string(s.prompt.size()) + ") + max_new (" +
                                     std::to_string(max_new) + ") exceeds max_seq " +
                                     std::to_string(model.config().max_seq));
        }
    }
    std::vector<SequenceResult> results(seqs.size());
    std::vector<std::exception_ptr> errors(seqs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < seqs.size(); i = next++) {
            try {
                PromptRun run = run_prompt(model, seqs[i].prompt, policy, seqs[i].id);
                Generation gen = generate(run.state, model, policy, max_new);
                results[i].records = std::move(run.records);
                results[i].records.insert(results[i].records.end(), gen.records.begin(), gen.records.end());
                results[i].generated = std::move(gen.tokens);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t workers = worker_count(seqs.size());
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

std::vector<TraceRecord> flatten(const std::vector<SequenceResult>& results) {
    std::vector<TraceRecord> all;
    for (const auto& r : results) all.insert(all.end(), r.records.begin(), r.records.end());
    return all;
}

void write_trace_file(const fs::path& path, const std::vector<TraceRecord>& records) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    write_trace(records, out);
}

std::vector<TraceRecord> read_trace_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trace '" + path.string() + "'");
    return read_trace(in);
}

std::string fixed(double v, int decimals) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string usage_text(const LayerUsageReport& report, Phase p) {
    const auto& u = report.phase(p);
    return u ? fixed(u->average_usage, 3) : "-";
}

// Records grouped by sequence id, in first-appearance order.
std::vector<std::pair<std::string, std::vector<TraceRecord>>> by_sequence(const std::vector<TraceRecord>& records) {
    std::vector<std::pair<std::string, std::vector<TraceRecord>>> groups;
    for (const TraceRecord& r : records) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r.sequence_id; });
        if (it == groups.end()) {
            groups.push_back({r.sequence_id, {}});
            it = groups.end() - 1;
        }
        it->second.push_back(r);
    }
    return groups;
}

std::vector<std::string> decode_outputs(const std::vector<SequenceResult>& results, std::size_t first, std::size_t n) {
    std::vector<std::string> outputs;
    for (std::size_t i = first; i < first + n; ++i) outputs.push_back(decode_bytes(results[i].generated));
    return outputs;
}

int cmd_trace(const RunSpec& spec, std::ostream& out) {
    const HaltPolicy policy = policy_from(spec);
    const auto seqs = sequences_from(spec);
    const ToyModel model = model_from(spec);
    const auto results = run_sequences(model, seqs, policy, spec.max_new);
    const fs::path path = fs::path(spec.out) / "trace.jsonl";
    write_trace_file(path, flatten(results));
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto report = usage_report(results[i].records);
        out << seqs[i].id << " pp_tokens=" << (report.pp ? report.pp->token_count : 0)
            << " rg_tokens=" << (report.rg ? report.rg->token_count : 0) << " pp_usage=" << usage_text(report, Phase::PP)
            << " rg_usage=" << usage_text(report, Phase::RG) << "\n";
    }
    out << "wrote " << path.string() << "\n";
    return kExitOk;
}

std::vector<double> parse_alphas(const std::string& text) {
    std::vector<double> alphas;
    for (const std::string& part : split_list(text)) {
        double a = 0.0;
        try {
            std::size_t used = 0;
            a = std::stod(part, &used);
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw UsageError("bad alpha '" + part + "'");
        }
        if (!(a > 0.0 && a <= 1.0)) throw UsageError("alpha " + part + " outside (0, 1]");
        alphas.push_back(a);
    }
    if (alphas.empty()) throw UsageError("--alphas needs at least one value");
    return alphas;
}

int cmd_sweep(const RunSpec& spec, const std::string& alpha_text, const std::string& trace_path, bool mode_given,
              std::ostream& out) {
    const std::vector<double> alphas = parse_alphas(alpha_text);
    HaltPolicy policy = policy_from(spec);

    std::vector<TraceRecord> records;
    std::optional<ToyModel> model;
    std::vector<Sequence> seqs;
    if (!trace_path.empty()) {
        records = read_trace_file(trace_path);
    } else {
        seqs = sequences_from(spec);
        model = model_from(spec);
        HaltPolicy full = policy;
        full.skip_mode = SkipMode::Off;
        records = flatten(run_sequences(*model, seqs, full, spec.max_new));
        write_trace_file(fs::path(spec.out) / "sweep_trace.jsonl", records);
    }

    const auto points = alpha_sweep(records, alphas, policy.formula, policy.min_layers);

    std::string csv = "alpha,pp_usage,rg_usage,task_score\n";
    for (const SweepPoint& p : points) {
        std::string score;
        if (model && !spec.suite.empty()) {
            HaltPolicy live = policy;
            live.alpha = p.alpha;
            if (!mode_given) live.skip_mode = SkipMode::SkipIdentity;
            const auto results = run_sequences(*model, seqs, live, spec.max_new);
            double total = 0.0;
            std::size_t offset = 0;
            const auto names = split_list(spec.suite);
            for (const std::string& name : names) {
                const auto items = make_suite(name, spec.seed, spec.suite_size);
                total += score_suite(items, decode_outputs(results, offset, items.size()));
                offset += items.size();
            }
            score = format_number(total / static_cast<double>(names.size()));
        }
        const auto pp = p.report.pp ? format_number(p.report.pp->average_usage) : std::string();
        const auto rg = p.report.rg ? format_number(p.report.rg->average_usage) : std::string();
        csv += format_number(p.alpha) + "," + pp + "," + rg + "," + score + "\n";
        out << "alpha=" << fixed(p.alpha, 2) << " pp_usage=" << usage_text(p.report, Phase::PP)
            << " rg_usage=" << usage_text(p.report, Phase::RG) << (score.empty() ? "" : " score=" + score) << "\n";
    }
    fs::create_directories(spec.out);
    const fs::path path = fs::path(spec.out) / "sweep.csv";
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    file << csv;
    out << "wrote " << path.string() << "\n";
    return kExitOk;
}

std::string file_stem_for(const std::string& id) {
    std::string stem;
    for (char c : id) stem += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return stem;
}

int cmd_report(const std::string& trace_path, const std::string& out_dir, std::ostream& out) {
    const auto records = read_trace_file(trace_path);
    const auto usage = usage_report(records);
    const auto profile = norm_profile(records);
    const fs::path dir(out_dir);
    export_reports(usage, profile, dir);
    std::size_t bitmaps = 0;
    for (const auto& [id, recs] : by_sequence(records)) {
        for (Phase p : {Phase::PP, Phase::RG}) {
            const bool present = std::any_of(recs.begin(), recs.end(), [&](const TraceRecord& r) { return r.phase == p; });
            if (!present) continue;
            std::string name = file_stem_for(id) + "_" + (p == Phase::PP ? "pp" : "rg") + ".pgm";
            std::ofstream file(dir / name, std::ios::binary | std::ios::trunc);
            if (!file) throw std::runtime_error("cannot write bitmap '" + (dir / name).string() + "'");
            file << to_pgm(render_bitmap(recs, p));
            ++bitmaps;
        }
    }
    out << "layers=" << usage.layer_count << " pp_usage=" << usage_text(usage, Phase::PP)
        << " rg_usage=" << usage_text(usage, Phase::RG) << " bitmaps=" << bitmaps << "\n";
    out << "wrote " << (dir / "layers.csv").string() << ", " << (dir / "usage_normalized.csv").string() << ", "
        << (dir / "summary.json").string() << "\n";
    return kExitOk;
}

struct CompareRow {
    std::string suite;
    double full_score = 0.0;
    double skip_score = 0.0;
    LayerUsageReport skip_usage;
};

int cmd_compare(const RunSpec& spec, bool mode_given, std::ostream& out) {
    if (spec.suite.empty()) throw UsageError("compare needs --suite");
    HaltPolicy skip = policy_from(spec);
    if (!mode_given) skip.skip_mode = SkipMode::SkipIdentity;
    HaltPolicy full = skip;
    full.skip_mode = SkipMode::Off;

    const auto names = split_list(spec.suite);
    std::vector<std::vector<SuiteItem>> suites;
    for (const std::string& name : names) {
        try {
            suites.push_back(make_suite(name, spec.seed, spec.suite_size));
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    const ToyModel model = model_from(spec);

    std::vector<CompareRow> rows;
    for (std::size_t s = 0; s < names.size(); ++s) {
        std::vector<Sequence> seqs;
        for (std::size_t i = 0; i < suites[s].size(); ++i) {
            seqs.push_back({names[s] + "-" + std::to_string(i), encode_bytes(suites[s][i].prompt)});
        }
        const auto full_results = run_sequences(model, seqs, full, spec.max_new);
        const auto skip_results = run_sequences(model, seqs, skip, spec.max_new);
        CompareRow row;
        row.suite = names[s];
        row.full_score = score_suite(suites[s], decode_outputs(full_results, 0, seqs.size()));
        row.skip_score = score_suite(suites[s], decode_outputs(skip_results, 0, seqs.size()));
        row.skip_usage = usage_report(flatten(skip_results));
        rows.push_back(std::move(row));
    }

    const std::string model_name = spec.weights.empty() ? "toy-" + spec.seed_model : fs::path(spec.weights).stem().string();
    const std::size_t layers = model.layer_count();
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    const std::size_t label_w = std::max<std::size_t>(model_name.size() + 12, 24);

    out << "alpha=" << fixed(skip.alpha, 2) << " mode=" << to_string(skip.skip_mode) << " granularity="
        << to_string(skip.granularity) << " formula=" << to_string(skip.formula) << "\n";
    out << pad("Model", label_w);
    for (const auto& r : rows) out << pad(r.suite, 28);
    out << "\n" << pad("", label_w);
    for (std::size_t i = 0; i < rows.size(); ++i) out << pad("Not Skipped", 14) << pad("Skipped", 14);
    out << "\n" << pad(model_name, label_w);
    for (const auto& r : rows) out << pad(fixed(r.full_score, 2), 14) << pad(fixed(r.skip_score, 2), 14);
    out << "\n" << pad("Usage", label_w);
    for (const auto& r : rows) out << pad(r.suite, 28);
    out << "\n" << pad("", label_w);
    for (std::size_t i = 0; i < rows.size(); ++i) out << pad("PP", 14) << pad("RG", 14);
    out << "\n" << pad(model_name + "(Layers=" + std::to_string(layers) + ")", label_w);
    for (const auto& r : rows) {
        const auto& pp = r.skip_usage.pp;
        const auto& rg = r.skip_usage.rg;
        out << pad(pp ? fixed(pp->average_usage, 2) : "-", 14) << pad(rg ? fixed(rg->average_usage, 2) : "-", 14);
    }
    out << "\n";

    std::string csv = "suite,not_skipped_score,skipped_score,pp_usage,rg_usage\n";
    for (const auto& r : rows) {
        csv += r.suite + "," + format_number(r.full_score) + "," + format_number(r.skip_score) + "," +
               (r.skip_usage.pp ? format_number(r.skip_usage.pp->average_usage) : "") + "," +
               (r.skip_usage.rg ? format_number(r.skip_usage.rg->average_usage) : "") + "\n";
    }
    fs::create_directories(spec.out);
    std::ofstream file(fs::path(spec.out) / "compare.csv", std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write compare.csv");
    file << csv;
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Detect and skip unactivated layers with L2 adaptive computation", "lac-void"};
    app.require_subcommand(1);

    RunSpec trace_spec, sweep_spec, compare_spec;
    std::string alphas = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
    std::string sweep_trace, report_trace, report_out = "report";

    auto* trace = app.add_subcommand("trace", "Run PP + RG and write trace.jsonl");
    add_model_options(*trace, trace_spec);
    add_policy_options(*trace, trace_spec);
    trace->add_option("--out", trace_spec.out, "Output directory");

    auto* sweep = app.add_subcommand("sweep", "Offline alpha sweep over a full forward pass; writes sweep.csv");
    add_model_options(*sweep, sweep_spec);
    add_policy_options(*sweep, sweep_spec);
    sweep->add_option("--out", sweep_spec.out, "Output directory");
    sweep->add_option("--alphas", alphas, "Comma-separated alpha values");
    sweep->add_option("--trace", sweep_trace, "Sweep an existing trace instead of running a model");

    auto* report = app.add_subcommand("report", "Usage/norm CSVs, summary JSON and PGM bitmaps from a trace");
    report->add_option("--trace", report_trace, "Trace file")->required();
    report->add_option("--out", report_out, "Output directory");

    auto* compare = app.add_subcommand("compare", "Skip-vs-full scores and usage on synthetic suites");
    add_model_options(*compare, compare_spec);
    add_policy_options(*compare, compare_spec);
    compare->add_option("--out", compare_spec.out, "Output directory");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (trace->parsed()) return cmd_trace(trace_spec, out);
        if (sweep->parsed()) return cmd_sweep(sweep_spec, alphas, sweep_trace, sweep->count("--mode") > 0, out);
        if (report->parsed()) return cmd_report(report_trace, report_out, out);
        if (compare->parsed()) return cmd_compare(compare_spec, compare->count("--mode") > 0, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace lac::cli
