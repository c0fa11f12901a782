#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lac/error.hpp"
#include "lac/rng.hpp"
#include "lac/toy_model.hpp"
#include "support.hpp"

using namespace lac;

namespace {

ModelConfig small_config(std::uint64_t seed = 0) {
    ModelConfig c;
    c.layer_count = 4;
    c.depth = 8;
    c.head_count = 2;
    c.ffn_dim = 16;
    c.max_seq = 64;
    c.seed = seed;
    return c;
}

HaltPolicy with_mode(SkipMode mode, double alpha = 0.8) {
    HaltPolicy p;
    p.skip_mode = mode;
    p.alpha = alpha;
    return p;
}

std::vector<int> random_prompt(Xoshiro256& rng, std::size_t len) {
    std::vector<int> t;
    for (std::size_t i = 0; i < len; ++i) t.push_back(static_cast<int>(32 + rng.below(95)));
    return t;
}

}  // namespace

TEST_CASE("build is deterministic per seed") {
    const auto a = encode_tensor_file(ToyModel::build(small_config(3)).to_tensor_file());
    const auto b = encode_tensor_file(ToyModel::build(small_config(3)).to_tensor_file());
    const auto c = encode_tensor_file(ToyModel::build(small_config(4)).to_tensor_file());
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("build produces a shape-preserving stack") {
    const ToyModel m = ToyModel::build(small_config());
    KvCache cache = m.make_cache();
    const LayerStack stack = m.layer_stack(cache, 0);
    CHECK(stack.size() == 4);
    const Tensor h = Tensor::random_uniform({1, 3, 8}, 1);
    for (std::size_t i = 0; i < stack.size(); ++i) CHECK(stack[i](h).shape() == h.shape());
}

TEST_CASE("zero input forward is finite") {
    const ToyModel m = ToyModel::build(small_config(0));
    KvCache cache = m.make_cache();
    const auto out = run_stack(m.layer_stack(cache, 0), Tensor::zeros({1, 4, 8}), with_mode(SkipMode::Off));
    CHECK(all_finite(out.final_hidden));
    CHECK(all_finite(m.logits(out.final_hidden)));
}

TEST_CASE("config validation") {
    ModelConfig c = small_config();
    c.head_count = 3;
    CHECK_THROWS_AS(ToyModel::build(c), ConfigError);
    c = small_config();
    c.layer_count = 0;
    CHECK_THROWS_AS(ToyModel::build(c), ConfigError);
}

TEST_CASE("save/load round trip keeps forward outputs") {
    const auto dir = testing::fresh_dir("roundtrip");
    const ToyModel m = ToyModel::build(small_config(9));
    m.save(dir / "m.lac");
    const ToyModel loaded = ToyModel::load(dir / "m.lac");
    CHECK(loaded.config() == m.config());
    CHECK(encode_tensor_file(loaded.to_tensor_file()) == testing::slurp(dir / "m.lac"));

    const auto prompt = encode_bytes("round trip");
    const auto a = run_prompt(m, prompt, with_mode(SkipMode::Off));
    const auto b = run_prompt(loaded, prompt, with_mode(SkipMode::Off));
    CHECK(bitwise_equal(a.logits, b.logits));
}

TEST_CASE("tensor file errors") {
    const std::string bytes = encode_tensor_file(ToyModel::build(small_config()).to_tensor_file());
    CHECK_THROWS_AS(decode_tensor_file(bytes.substr(0, bytes.size() - 4)), FormatError);
    CHECK_THROWS_AS(decode_tensor_file(bytes + "xxxx"), FormatError);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_tensor_file(bad), FormatError);
    CHECK_THROWS_AS(decode_tensor_file("LACTNSR1"), FormatError);

    TensorFile f = ToyModel::build(small_config()).to_tensor_file();
    f.tensors.emplace("blocks.0.mystery", Tensor::ones({2}));
    try {
        ToyModel::from_tensor_file(decode_tensor_file(encode_tensor_file(f)));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("unknown tensor name") != std::string::npos);
    }

    TensorFile g = ToyModel::build(small_config()).to_tensor_file();
    g.tensors.erase("blocks.1.wq");
    CHECK_THROWS_AS(ToyModel::from_tensor_file(g), FormatError);
}

TEST_CASE("container layout is little-endian with a JSON header") {
    TensorFile f;
    f.tensors.emplace("a", Tensor({2}, {1.0f, -2.0f}));
    const std::string bytes = encode_tensor_file(f);
    const std::string header = R"({"a":{"dtype":"f32","offset":0,"shape":[2]}})";
    CHECK(bytes.substr(0, 8) == "LACTNSR1");
    CHECK(static_cast<unsigned char>(bytes[8]) == header.size());
    CHECK(bytes.substr(9, 3) == std::string(3, '\0'));
    CHECK(bytes.substr(12, header.size()) == header);
    // 1.0f = 0x3f800000, -2.0f = 0xc0000000, little-endian.
    CHECK(bytes.substr(12 + header.size()) == std::string("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8));
}

TEST_CASE("hand-written one-layer container matches hand computation") {
    ModelConfig c;
    c.layer_count = 1;
    c.depth = 2;
    c.head_count = 1;
    c.ffn_dim = 2;
    c.max_seq = 2;
    TensorFile f;
    f.metadata = {{"layer_count", "1"}, {"depth", "2"}, {"head_count", "1"}, {"ffn_dim", "2"},
                  {"vocab_size", "256"}, {"max_seq", "2"}, {"seed", "0"}};
    Tensor emb({256, 2});
    emb[65 * 2] = 3.0f;
    emb[65 * 2 + 1] = 4.0f;
    f.tensors.emplace("token_embedding", emb);
    f.tensors.emplace("position_embedding", Tensor::zeros({2, 2}));
    f.tensors.emplace("final_norm.gain", Tensor::ones({2}));
    f.tensors.emplace("blocks.0.attn_norm.gain", Tensor::ones({2}));
    f.tensors.emplace("blocks.0.wq", Tensor({2, 2}, {0.3f, -1.0f, 2.0f, 0.1f}));
    f.tensors.emplace("blocks.0.wk", Tensor({2, 2}, {1.0f, 0.5f, -0.5f, 1.0f}));
    f.tensors.emplace("blocks.0.wv", Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 2.0f}));
    f.tensors.emplace("blocks.0.wo", Tensor({2, 2}, {0.5f, 0.0f, 0.0f, 0.5f}));
    f.tensors.emplace("blocks.0.ffn_norm.gain", Tensor::ones({2}));
    f.tensors.emplace("blocks.0.w_up", Tensor({2, 2}, {1.0f, 0.0f, 0.0f, -1.0f}));
    f.tensors.emplace("blocks.0.w_down", Tensor::identity(2));

    const ToyModel m = ToyModel::from_tensor_file(decode_tensor_file(encode_tensor_file(f)));
    const std::vector<int> prompt{65};
    KvCache cache = m.make_cache();
    const Tensor h = m.block_forward(0, m.embed(prompt, 0), cache, 0);
    // x = [3,4]/rms; attention over one token returns v; h1 = h + (x Wv) Wo;
    // h2 = h1 + gelu(rms_norm(h1) W_up) W_down. Evaluated independently in double precision.
    CHECK(std::fabs(h[0] - 4.039442459575621) < 1e-5);
    CHECK(std::fabs(h[1] - 4.990320037589612) < 1e-5);

    const auto run = run_prompt(m, prompt, with_mode(SkipMode::Off));
    const double r = std::sqrt((4.039442459575621 * 4.039442459575621 + 4.990320037589612 * 4.990320037589612) / 2 + 1e-5);
    const double logit65 = (4.039442459575621 / r) * 3.0 + (4.990320037589612 / r) * 4.0;
    CHECK(std::fabs(run.logits[65] - logit65) < 1e-5);
    CHECK(run.logits[66] == 0.0f);
}

TEST_CASE("run_prompt records") {
    const ToyModel m = ToyModel::build(small_config());
    SUBCASE("single token, off mode") {
        const auto run = run_prompt(m, encode_bytes("a"), with_mode(SkipMode::Off));
        REQUIRE(run.records.size() == 1);
        CHECK(run.records[0].phase == Phase::PP);
        CHECK(run.records[0].layer_count() == 4);
        CHECK(run.records[0].active_layers() == 4);
    }
    SUBCASE("five tokens per-token") {
        const auto run = run_prompt(m, encode_bytes("hello"), with_mode(SkipMode::Detect));
        REQUIRE(run.records.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(run.records[i].token_index == i);
            CHECK(run.records[i].token_id == "hello"[i]);
            CHECK(run.records[i].layer_flags.size() == 4);
        }
        CHECK(run.state.position == 5);
    }
    SUBCASE("detect and off produce identical logits") {
        const auto off = run_prompt(m, encode_bytes("same input"), with_mode(SkipMode::Off));
        const auto det = run_prompt(m, encode_bytes("same input"), with_mode(SkipMode::Detect));
        CHECK(bitwise_equal(off.logits, det.logits));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(run_prompt(m, std::vector<int>{}, HaltPolicy{}), ConfigError);
        CHECK_THROWS_AS(run_prompt(m, std::vector<int>(65, 97), HaltPolicy{}), ConfigError);
        HaltPolicy p;
        p.min_layers = 5;
        CHECK_THROWS_AS(run_prompt(m, encode_bytes("x"), p), ConfigError);
    }
}

TEST_CASE("generate") {
    const ToyModel m = ToyModel::build(small_config(1));
    const auto prompt = encode_bytes("abc");
    SUBCASE("max_new = 0") {
        auto run = run_prompt(m, prompt, HaltPolicy{});
        const auto gen = generate(run.state, m, HaltPolicy{}, 0);
        CHECK(gen.tokens.empty());
        CHECK(gen.records.empty());
    }
    SUBCASE("deterministic with phase partition") {
        for (auto mode : {SkipMode::Off, SkipMode::Detect, SkipMode::SkipIdentity, SkipMode::MaskZero, SkipMode::HaltFrozen}) {
            auto r1 = run_prompt(m, prompt, with_mode(mode));
            auto r2 = run_prompt(m, prompt, with_mode(mode));
            const auto g1 = generate(r1.state, m, with_mode(mode), 10);
            const auto g2 = generate(r2.state, m, with_mode(mode), 10);
            CHECK(g1.tokens == g2.tokens);
            CHECK(g1.records.size() == g1.tokens.size());
            for (const auto& rec : g1.records) CHECK(rec.phase == Phase::RG);
            CHECK(r1.state.tokens.size() == prompt.size() + g1.tokens.size());
            for (std::size_t i = 0; i < r1.state.phases.size(); ++i) {
                CHECK(r1.state.phases[i] == (i < prompt.size() ? Phase::PP : Phase::RG));
            }
        }
    }
    SUBCASE("overflow") {
        ModelConfig c = small_config();
        c.max_seq = 5;
        const ToyModel tiny = ToyModel::build(c);
        auto run = run_prompt(tiny, prompt, with_mode(SkipMode::Off));
        std::size_t produced = 0;
        try {
            produced = generate(run.state, tiny, with_mode(SkipMode::Off), 10).tokens.size();
            CHECK(produced <= 2);  // stopped early on end-of-text
        } catch (const std::out_of_range&) {
            CHECK(run.state.position == 5);
        }
    }
}

TEST_CASE("kv-cache decoding matches full re-forward") {
    const ToyModel m = ToyModel::build(small_config(5));
    Xoshiro256 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const auto prompt = random_prompt(rng, 1 + rng.below(6));
        auto run = run_prompt(m, prompt, with_mode(SkipMode::Off));
        std::vector<Tensor> step_logits;
        for (int k = 0; k < 8; ++k) {
            const auto gen = generate(run.state, m, with_mode(SkipMode::Off), 1);
            if (gen.tokens.empty()) break;
            step_logits.push_back(run.state.last_logits);
        }
        const auto full = run_prompt(m, run.state.tokens, with_mode(SkipMode::Off));
        const std::size_t vocab = 256;
        for (std::size_t k = 0; k < step_logits.size(); ++k) {
            const std::size_t row = prompt.size() + k;
            for (std::size_t v = 0; v < vocab; ++v) {
                CHECK(std::fabs(full.logits[row * vocab + v] - step_logits[k][v]) < 1e-4f);
            }
        }
    }
}

TEST_CASE("skip-identity with an always-void middle layer equals removing it") {
    ModelConfig c = small_config(2);
    c.layer_count = 5;
    c.depth = 16;
    c.ffn_dim = 32;
    ToyModel m = testing::monotone_model(c);
    testing::make_tied_block(m.block(2), -0.05f);  // always shrinks the norm
    const ToyModel removed = m.without_layers({false, false, true, false, false});

    const auto prompt = encode_bytes("void in the middle");
    const HaltPolicy skip = with_mode(SkipMode::SkipIdentity, 1e-4);
    auto a = run_prompt(m, prompt, skip);
    auto b = run_prompt(removed, prompt, with_mode(SkipMode::Off));
    const auto ga = generate(a.state, m, skip, 12);
    const auto gb = generate(b.state, removed, with_mode(SkipMode::Off), 12);

    auto check_flags = [](const std::vector<TraceRecord>& recs) {
        for (const auto& r : recs) {
            for (std::size_t t = 0; t < 5; ++t) CHECK(r.layer_flags[t] == (t != 2));
        }
    };
    check_flags(a.records);
    check_flags(ga.records);
    CHECK(max_abs_diff(a.logits, b.logits) < 1e-5f);
    CHECK(ga.tokens == gb.tokens);

    // The layer really does something when it is not skipped.
    const auto off = run_prompt(m, prompt, with_mode(SkipMode::Off));
    CHECK(max_abs_diff(off.logits, b.logits) > 1e-3f);
}

TEST_CASE("pre-LN hidden norms generally grow across layers") {
    ModelConfig c = small_config(0);
    c.layer_count = 8;
    c.depth = 16;
    c.ffn_dim = 64;
    const ToyModel m = ToyModel::build(c);
    Xoshiro256 rng(99);
    std::vector<double> mean(8, 0.0);
    std::size_t tokens = 0;
    for (int k = 0; k < 20; ++k) {
        const auto run = run_prompt(m, random_prompt(rng, 1 + rng.below(10)), with_mode(SkipMode::Off));
        for (const auto& r : run.records) {
            ++tokens;
            for (std::size_t t = 0; t < 8; ++t) mean[t] += r.layer_norms[t];
        }
    }
    int grows = 0;
    for (std::size_t t = 0; t + 1 < 8; ++t) grows += mean[t + 1] >= mean[t];
    CHECK(grows >= 7 * 9 / 10);
}

TEST_CASE("byte tokenizer") {
    const auto ids = encode_bytes("A\xff");
    CHECK(ids == std::vector<int>{65, 255});
    CHECK(decode_bytes(ids) == "A\xff");
}
