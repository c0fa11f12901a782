// Acceptance checks: one PASS/FAIL line per criterion, each with a time limit.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lac/analysis.hpp"
#include "lac/cli.hpp"
#include "lac/halting.hpp"
#include "lac/rng.hpp"
#include "lac/skip_executor.hpp"
#include "lac/toy_model.hpp"
#include "lac/trace.hpp"
#include "support.hpp"

using namespace lac;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double limit_s;
    std::function<Verdict()> body;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

StepFunction norm_step(float increment) {
    return [increment](const Tensor& h) {
        Tensor out = h;
        const std::size_t depth = h.dim(2);
        for (std::size_t row = 0; row < h.size() / depth; ++row) {
            double ss = 0.0;
            for (std::size_t d = 0; d < depth; ++d) ss += double(h[row * depth + d]) * h[row * depth + d];
            const double n = std::sqrt(ss);
            const double scale = n > 0.0 ? (n + increment) / n : 1.0;
            for (std::size_t d = 0; d < depth; ++d) out[row * depth + d] = float(h[row * depth + d] * scale);
        }
        return out;
    };
}

StepFunction random_step(std::size_t depth, std::uint64_t seed) {
    auto w = std::make_shared<Tensor>(Tensor::random_uniform({depth, depth}, seed, -0.8f, 0.8f));
    return [w, depth](const Tensor& h) {
        const Tensor flat = h.reshaped({h.size() / depth, depth});
        Tensor z = matmul(flat, *w);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = flat[i] + std::tanh(z[i]);
        return z.reshaped(h.shape());
    };
}

Tensor run_plain(const LayerStack& stack, Tensor h) {
    for (std::size_t i = 0; i < stack.size(); ++i) h = stack[i](h);
    return h;
}

HaltPolicy policy(SkipMode mode, double alpha, NormGranularity g = NormGranularity::PerToken) {
    HaltPolicy p;
    p.skip_mode = mode;
    p.alpha = alpha;
    p.granularity = g;
    return p;
}

bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }

std::vector<int> random_prompt(Xoshiro256& rng, std::size_t len) {
    std::vector<int> t;
    for (std::size_t i = 0; i < len; ++i) t.push_back(static_cast<int>(32 + rng.below(95)));
    return t;
}

int run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    return cli::run(args, out, err);
}

Verdict granularity_consistency() {
    Xoshiro256 rng(1);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const Shape shape{1 + rng.below(4), 1 + rng.below(16), 1 + rng.below(64)};
        const Tensor h = Tensor::random_uniform(shape, rng.next(), -3.0f, 3.0f);
        const double batch = l2_norm(h, NormGranularity::PerBatch)[0];
        double ex = 0.0, tok = 0.0;
        const Tensor per_example = l2_norm(h, NormGranularity::PerExample);
        const Tensor per_token = l2_norm(h, NormGranularity::PerToken);
        for (float v : per_example.data()) ex += double(v) * v;
        for (float v : per_token.data()) tok += double(v) * v;
        const double b2 = batch * batch;
        worst = std::max({worst, std::fabs(b2 - ex) / b2, std::fabs(b2 - tok) / b2});
    }
    return {worst <= 1e-5, "max relative error " + fmt("%.3g", worst)};
}

Verdict formula_equivalence() {
    Xoshiro256 rng(2);
    std::size_t mismatches = 0;
    for (int k = 0; k < 100000; ++k) {
        const std::size_t units = 1 + rng.below(4);
        ProgressHistory hist({units});
        const std::size_t steps = 1 + rng.below(8);
        for (std::size_t s = 0; s < steps; ++s) {
            Tensor d({units});
            for (auto& v : d.data()) v = static_cast<float>(rng.uniform(-10.0, 10.0));
            hist.record(d);
        }
        const double alpha = rng.uniform(1e-3, 1.0);
        const Tensor a = threshold(hist, alpha, ThresholdFormula::Original);
        const Tensor b = threshold(hist, alpha, ThresholdFormula::Modified);
        mismatches += !bitwise_equal(a, b);
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatching histories of 100000"};
}

Verdict alpha_monotonicity() {
    Xoshiro256 rng(3);
    std::size_t nest_fail = 0, usage_fail = 0;
    for (int k = 0; k < 1000; ++k) {
        std::vector<float> deltas(1 + rng.below(32));
        for (auto& v : deltas) v = static_cast<float>(rng.uniform(-2.0, 6.0));
        std::vector<double> alphas(10);
        for (auto& a : alphas) a = rng.uniform(1e-3, 1.0);
        std::sort(alphas.begin(), alphas.end());
        for (auto formula : {ThresholdFormula::Original, ThresholdFormula::Modified}) {
            std::vector<bool> prev(deltas.size(), false);
            std::size_t prev_count = 0;
            for (double a : alphas) {
                std::vector<bool> cur(deltas.size(), false);
                const auto voids = detect_voids_offline(deltas, a, formula, 1);
                for (auto v : voids) cur[v] = true;
                for (std::size_t t = 0; t < deltas.size(); ++t) nest_fail += prev[t] && !cur[t];
                usage_fail += voids.size() < prev_count;
                prev = cur;
                prev_count = voids.size();
            }
        }
    }
    return {nest_fail == 0 && usage_fail == 0,
            "nesting violations " + std::to_string(nest_fail) + ", usage increases " + std::to_string(usage_fail)};
}

Verdict explicit_removal() {
    LayerStack stack;
    for (std::uint64_t i = 0; i < 4; ++i) stack.push_back(random_step(8, 500 + i));
    const Tensor h0 = Tensor::random_uniform({2, 5, 8}, 77);
    float worst = 0.0f;
    for (unsigned mask = 0; mask < 16; ++mask) {
        std::vector<bool> voids(4);
        for (unsigned t = 0; t < 4; ++t) voids[t] = (mask >> t) & 1u;
        worst = std::max(worst, max_abs_diff(run_with_fixed_voids(stack, h0, voids), run_plain(stack.without(voids), h0)));
    }
    return {worst < 1e-5f, "16 subsets, max abs diff " + fmt("%.3g", worst)};
}

Verdict frozen_and_mask() {
    const std::vector<float> increments{-2.0f, -0.5f, 0.0f, 0.01f, 1.0f, 5.0f};
    const std::vector<double> alphas{0.1, 0.5, 0.8, 1.0};
    const Tensor h0 = Tensor::random_uniform({2, 3, 4}, 9, -1.0f, 1.0f);
    std::size_t cases = 0, failures = 0;
    for (float a : increments)
        for (float b : increments)
            for (float c : increments) {
                LayerStack base;
                base.push_back(norm_step(a));
                base.push_back(norm_step(b));
                base.push_back(norm_step(c));
                for (auto g : {NormGranularity::PerBatch, NormGranularity::PerExample, NormGranularity::PerToken}) {
                    for (double alpha : alphas) {
                        auto seen = std::make_shared<std::vector<Tensor>>();
                        LayerStack stack;
                        for (std::size_t i = 0; i < 3; ++i) {
                            StepFunction inner = base[i];
                            stack.push_back([inner, seen](const Tensor& h) {
                                seen->push_back(h);
                                return inner(h);
                            });
                        }
                        // HaltFrozen: from the first void layer on, a unit is void and its slice is frozen.
                        const auto frozen = run_stack(stack, h0, policy(SkipMode::HaltFrozen, alpha, g));
                        seen->push_back(frozen.final_hidden);
                        ++cases;
                        for (std::size_t b_ = 0; b_ < 2; ++b_)
                            for (std::size_t l = 0; l < 3; ++l) {
                                const std::size_t unit = unit_index(g, h0.shape(), b_, l);
                                std::size_t first = 3;
                                for (std::size_t t = 0; t < 3 && first == 3; ++t)
                                    if (frozen.void_flags[t][unit]) first = t;
                                for (std::size_t t = first; t < 3; ++t) failures += !frozen.void_flags[t][unit];
                                for (std::size_t t = first + 1; t <= 3; ++t)
                                    for (std::size_t d = 0; d < 4; ++d) {
                                        const std::size_t i = (b_ * 3 + l) * 4 + d;
                                        failures += !same_bits((*seen)[first][i], (*seen)[t][i]);
                                    }
                            }

                        // MaskZero: void units enter the next layer zeroed; masking twice equals once.
                        seen->clear();
                        const auto masked = run_stack(stack, h0, policy(SkipMode::MaskZero, alpha, g));
                        seen->push_back(masked.final_hidden);
                        ++cases;
                        for (std::size_t t = 0; t < 3; ++t)
                            for (std::size_t b_ = 0; b_ < 2; ++b_)
                                for (std::size_t l = 0; l < 3; ++l) {
                                    if (!masked.void_flags[t][unit_index(g, h0.shape(), b_, l)]) continue;
                                    for (std::size_t d = 0; d < 4; ++d)
                                        failures += (*seen)[t + 1][(b_ * 3 + l) * 4 + d] != 0.0f;
                                }
                        for (const Tensor& s : *seen)
                            for (std::size_t b_ = 0; b_ < 2; ++b_) {
                                const Tensor once = mask_example(s, b_);
                                failures += !bitwise_equal(mask_example(once, b_), once);
                                for (std::size_t l = 0; l < 3; ++l) {
                                    const Tensor t1 = mask_token(s, b_, l);
                                    failures += !bitwise_equal(mask_token(t1, b_, l), t1);
                                }
                            }
                    }
                }
            }
    return {failures == 0, std::to_string(cases) + " scripted runs, " + std::to_string(failures) + " violations"};
}

Verdict detect_non_interference() {
    ModelConfig c;
    c.layer_count = 4;
    c.depth = 16;
    c.head_count = 2;
    c.ffn_dim = 64;
    c.max_seq = 64;
    const ToyModel m = ToyModel::build(c);
    Xoshiro256 rng(4);
    std::size_t differing = 0;
    for (int k = 0; k < 50; ++k) {
        const auto prompt = random_prompt(rng, 1 + rng.below(20));
        auto off = run_prompt(m, prompt, policy(SkipMode::Off, 0.8));
        auto det = run_prompt(m, prompt, policy(SkipMode::Detect, 0.8));
        bool same = bitwise_equal(off.logits, det.logits);
        const auto g_off = generate(off.state, m, policy(SkipMode::Off, 0.8), 6);
        const auto g_det = generate(det.state, m, policy(SkipMode::Detect, 0.8), 6);
        same = same && g_off.tokens == g_det.tokens && bitwise_equal(off.state.last_logits, det.state.last_logits);
        differing += !same;
    }
    return {differing == 0, std::to_string(differing) + " of 50 prompts differ"};
}

Verdict norm_growth() {
    ModelConfig c;
    c.layer_count = 8;
    c.depth = 16;
    c.head_count = 2;
    c.ffn_dim = 64;
    c.max_seq = 64;
    const ToyModel m = ToyModel::build(c);
    Xoshiro256 rng(5);
    std::vector<double> sum(8, 0.0);
    std::size_t tokens = 0;
    for (int k = 0; k < 100; ++k) {
        const auto run = run_prompt(m, random_prompt(rng, 1 + rng.below(24)), policy(SkipMode::Off, 0.8));
        for (const auto& r : run.records) {
            ++tokens;
            for (std::size_t t = 0; t < 8; ++t) sum[t] += r.layer_norms[t];
        }
    }
    int growing = 0;
    for (std::size_t t = 0; t + 1 < 8; ++t) growing += sum[t + 1] >= sum[t];
    const double frac = growing / 7.0;
    std::string profile;
    for (double s : sum) profile += (profile.empty() ? "" : " ") + fmt("%.2f", s / tokens);
    return {frac >= 0.9, std::to_string(growing) + "/7 pairs non-decreasing; mean norms " + profile};
}

Verdict round_trips() {
    ModelConfig c;
    c.layer_count = 6;
    c.depth = 8;
    c.head_count = 2;
    c.ffn_dim = 32;
    c.max_seq = 64;
    const ToyModel m = ToyModel::build(c);
    Xoshiro256 rng(6);
    std::vector<TraceRecord> all;
    std::size_t failures = 0, checked_images = 0;
    for (int k = 0; k < 10; ++k) {
        const auto p = policy(SkipMode::Detect, 0.5);
        auto run = run_prompt(m, random_prompt(rng, 1 + rng.below(12)), p, "seq-" + std::to_string(k));
        auto gen = generate(run.state, m, p, 8);
        std::vector<TraceRecord> seq = run.records;
        seq.insert(seq.end(), gen.records.begin(), gen.records.end());
        for (auto phase : {Phase::PP, Phase::RG}) {
            std::size_t flags = 0, cols = 0;
            for (const auto& r : seq)
                if (r.phase == phase) flags += r.active_layers(), ++cols;
            if (cols == 0) continue;
            const GrayImage img = render_bitmap(seq, phase);
            const GrayImage back = parse_pgm(to_pgm(img));
            std::size_t white = 0;
            for (auto px : back.pixels) white += px == 255;
            failures += !(back == img) + (white != flags) + (img.width != cols);
            ++checked_images;
        }
        all.insert(all.end(), seq.begin(), seq.end());
    }
    std::stringstream io;
    write_trace(all, io);
    failures += !(read_trace(io) == all);

    const auto usage = usage_report(all);
    const auto prof = norm_profile(all);
    failures += !(parse_layers_csv(layers_csv(usage, prof)) == layer_rows(usage, prof));
    return {failures == 0, std::to_string(all.size()) + " records, " + std::to_string(checked_images) +
                               " bitmaps, " + std::to_string(failures) + " mismatches"};
}

Verdict trace_determinism() {
    const auto a = testing::fresh_dir("acc_det_a");
    const auto b = testing::fresh_dir("acc_det_b");
    const std::vector<std::string> base{"trace", "--seed-model", "d16,h2,l6", "--suite", "copy,sorted", "--suite-size", "8",
                                        "--mode", "skip-identity", "--max-new", "8", "--out"};
    auto args_a = base, args_b = base;
    args_a.push_back(a.string());
    args_b.push_back(b.string());
    if (run_cli(args_a) != 0 || run_cli(args_b) != 0) return {false, "trace command failed"};
    const std::string ta = testing::slurp(a / "trace.jsonl");
    const std::string tb = testing::slurp(b / "trace.jsonl");
    return {!ta.empty() && ta == tb, std::to_string(ta.size()) + " bytes, identical=" + (ta == tb ? "yes" : "no")};
}

Verdict compare_consistency_floor() {
    const auto dir = testing::fresh_dir("acc_compare");
    ModelConfig c;
    c.layer_count = 6;
    c.depth = 16;
    c.head_count = 2;
    c.ffn_dim = 64;
    c.max_seq = 64;
    testing::monotone_model(c).save(dir / "monotone.lac");
    if (run_cli({"compare", "--weights", (dir / "monotone.lac").string(), "--suite", "copy,sorted", "--alpha", "1e-6",
                 "--mode", "skip-identity", "--out", dir.string()}) != 0)
        return {false, "compare command failed"};
    std::ifstream in(dir / "compare.csv");
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0, failures = 0;
    std::string detail;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
        if (cells.size() != 5) return {false, "malformed compare.csv row"};
        ++rows;
        // Usage 1 confirms no layer was void, so skipped and full runs must agree exactly.
        failures += cells[3] != "1" || cells[4] != "1" || cells[1] != cells[2];
        detail += " " + cells[0] + "=" + cells[1] + "/" + cells[2];
    }
    return {rows == 2 && failures == 0, "not skipped/skipped:" + detail + ", usage 1.0"};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"granularity consistency", 5, granularity_consistency},
        {"threshold formula equivalence", 5, formula_equivalence},
        {"offline alpha monotonicity", 10, alpha_monotonicity},
        {"explicit removal oracle", 5, explicit_removal},
        {"halt-frozen permanence and mask-zero idempotence", 1, frozen_and_mask},
        {"detect non-interference", 10, detect_non_interference},
        {"pre-LN norm growth", 30, norm_growth},
        {"trace/bitmap/report round trips", 5, round_trips},
        {"trace determinism", 10, trace_determinism},
        {"compare consistency floor", 30, compare_consistency_floor},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.body();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.limit_s;
        const bool ok = v.pass && in_time;
        failed += !ok;
        std::printf("%s  %-48s %7.3fs (limit %gs)  %s%s\n", ok ? "PASS" : "FAIL", c.name.c_str(), secs, c.limit_s,
                    v.detail.c_str(), in_time ? "" : " [time limit exceeded]");
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
