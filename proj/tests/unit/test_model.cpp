#include <doctest.h>

#include "evocollapse/checkpoint.hpp"
#include "evocollapse/model.hpp"
#include "support.hpp"

using namespace evocollapse;

TEST_CASE("config validation rejects degenerate shapes") {
    auto c = testsupport::toy_config();
    CHECK_NOTHROW(c.validate());
    c.n_layers = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = testsupport::toy_config();
    c.n_heads = 3;
    CHECK_THROWS_AS(c.validate(), Error);
    c = testsupport::toy_config();
    c.d_model = 12;  // head_dim 3 is odd
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("init_random is seeded and shape-valid") {
    const auto a = testsupport::toy_model(4, 11);
    const auto b = testsupport::toy_model(4, 11);
    const auto c = testsupport::toy_model(4, 12);
    CHECK_NOTHROW(validate_shapes(a));
    CHECK(bit_equal(a.layers[2].ffn_up, b.layers[2].ffn_up));
    CHECK_FALSE(bit_equal(a.layers[2].ffn_up, c.layers[2].ffn_up));
}

TEST_CASE("byte tokenizer truncates and maps bytes to ids") {
    const auto s = tokenize_bytes("ab\xff", 8);
    CHECK(s.tokens == std::vector<std::int32_t>{97, 98, 255});
    CHECK(tokenize_bytes("abcdef", 4).size() == 4);
    CHECK_THROWS_AS(tokenize_bytes("a", 0), Error);
}

TEST_CASE("forward is causal") {
    const auto m = testsupport::toy_model(3, 5, 32);
    const auto x = tokenize_bytes("the quick brown fox", 64);
    auto y = x;
    y.tokens.back() = 'Q';
    const auto rx = forward(m, x, true);
    const auto ry = forward(m, y, true);
    const Index T = static_cast<Index>(x.size());
    CHECK(rx.logits.topRows(T - 1) == ry.logits.topRows(T - 1));
    CHECK(rx.logits.row(T - 1) != ry.logits.row(T - 1));
    for (std::size_t l = 0; l < rx.trace->layers.size(); ++l)
        CHECK(rx.trace->layers[l].ffn_down.topRows(T - 1) == ry.trace->layers[l].ffn_down.topRows(T - 1));
}

TEST_CASE("forward trace shapes and finiteness") {
    const auto m = testsupport::toy_model(4, 2, 32);
    const auto r = forward(m, tokenize_bytes("hello", 64), true);
    REQUIRE(r.trace);
    CHECK(r.logits.rows() == 5);
    CHECK(r.logits.cols() == 256);
    CHECK(r.logits.allFinite());
    CHECK(r.trace->layers.size() == 4);
    CHECK(r.trace->layers[0].ffn_gate.cols() == 64);
    CHECK(r.trace->layers[0].attn_o.cols() == 32);
    CHECK(r.trace->final_hidden.rows() == 5);
    CHECK_FALSE(forward(m, tokenize_bytes("hello", 64), false).trace);
}

TEST_CASE("forward rejects bad input") {
    auto m = testsupport::toy_model(2, 1, 32);
    CHECK_THROWS_AS(forward(m, TokenSequence{}, false), Error);
    TokenSequence long_seq;
    long_seq.tokens.assign(65, 1);
    CHECK_THROWS_AS(forward(m, long_seq, false), Error);
}

TEST_CASE("zeroed output projections leave the residual stream untouched") {
    auto m = testsupport::toy_model(2, 3, 32);
    for (auto& l : m.layers) {
        l.attn_o.values().setZero();
        l.ffn_down.values().setZero();
    }
    const auto seq = tokenize_bytes("abc", 64);
    const auto r = forward(m, seq, true);
    RowMatrix<float> emb(3, 32);
    for (Index t = 0; t < 3; ++t) emb.row(t) = m.embedding.values().row(seq.tokens[t]);
    const RowMatrix<float> expect = rms_norm(emb, m.final_norm, static_cast<float>(m.config.rms_eps));
    CHECK((r.trace->final_hidden - expect).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("checkpoint round trip is bit exact") {
    testsupport::TempDir dir("ckpt");
    const auto m = testsupport::toy_model(3, 9, 32);
    save_checkpoint(m, dir.path());
    const auto back = load_checkpoint(dir.path());
    CHECK(back.config == m.config);
    CHECK(bit_equal(back.embedding, m.embedding));
    CHECK(bit_equal(back.lm_head, m.lm_head));
    CHECK(bit_equal(back.final_norm, m.final_norm));
    for (Index i = 0; i < m.n_layers(); ++i)
        for (const auto& [name, f] : layer_fields<float>()) CHECK(bit_equal(back.layers[i].*f, m.layers[i].*f));
    CHECK(tensor_names(3).size() == 3 + 3 * 9);
}

TEST_CASE("checkpoint writes are deterministic") {
    testsupport::TempDir a("ckpt-a"), b("ckpt-b");
    const auto m = testsupport::toy_model(2, 4, 32);
    save_checkpoint(m, a.path());
    save_checkpoint(m, b.path());
    CHECK(testsupport::read_file(a / kWeightsName) == testsupport::read_file(b / kWeightsName));
    CHECK(testsupport::read_file(a / kManifestName) == testsupport::read_file(b / kManifestName));
}

TEST_CASE("checkpoint loading reports typed errors") {
    testsupport::TempDir dir("ckpt-bad");
    const auto m = testsupport::toy_model(2, 4, 32);

    CHECK_THROWS_AS(load_checkpoint(dir / "absent"), Error);

    save_checkpoint(m, dir.path());
    auto manifest = nlohmann::json::parse(testsupport::read_file(dir / kManifestName));
    auto rewrite = [&](const nlohmann::json& j) {
        std::ofstream(dir / kManifestName, std::ios::trunc) << j.dump();
    };
    auto error_of = [&] {
        try {
            load_checkpoint(dir.path());
        } catch (const Error& e) {
            return e.error_class();
        }
        return ErrorClass::InvalidArgument;
    };

    auto missing = manifest;
    missing["tensors"].erase(missing["tensors"].begin() + 3);
    rewrite(missing);
    CHECK(error_of() == ErrorClass::MissingTensor);

    auto reshaped = manifest;
    reshaped["tensors"][1]["shape"] = {32, 16};
    rewrite(reshaped);
    CHECK(error_of() == ErrorClass::ShapeMismatch);

    rewrite(manifest);
    {
        std::fstream bin(dir / kWeightsName, std::ios::in | std::ios::out | std::ios::binary);
        const float nan = std::numeric_limits<float>::quiet_NaN();
        bin.seekp(16);
        bin.write(reinterpret_cast<const char*>(&nan), sizeof nan);
    }
    CHECK(error_of() == ErrorClass::NonFinite);
}

TEST_CASE("tokenizer examples") {
    CHECK(tokenize_bytes("Hi", 8).tokens == std::vector<std::int32_t>{72, 105});
    CHECK(tokenize_bytes("", 8).empty());
    const std::string long_text(200, 'z');
    CHECK(tokenize_bytes(long_text, 128).size() == 128);
}

TEST_CASE("rms norm of ones with unit gain is ones") {
    const RowMatrix<float> x = RowMatrix<float>::Ones(3, 8);
    auto gain = Tensor<float>::vector(8);
    gain.values().setOnes();
    const auto y = rms_norm(x, gain, 0.0f);
    CHECK(y == x);
}

TEST_CASE("forward is bit-deterministic and shaped per contract") {
    const auto m = testsupport::toy_model(4, 8, 32);
    TokenSequence seq;
    for (int t = 0; t < 16; ++t) seq.tokens.push_back(40 + t);
    const auto a = forward(m, seq, true), b = forward(m, seq, true);
    CHECK(a.logits.rows() == 16);
    CHECK(a.logits.cols() == 256);
    CHECK(a.trace->layers.size() == 4);
    CHECK(std::memcmp(a.logits.data(), b.logits.data(), sizeof(float) * a.logits.size()) == 0);
    for (std::size_t l = 0; l < 4; ++l) CHECK(a.trace->layers[l].attn_q == b.trace->layers[l].attn_q);
}

TEST_CASE("init_random sets norm gains to exactly one") {
    const auto m = testsupport::toy_model(3, 77, 32);
    CHECK((m.final_norm.values().array() == 1.0f).all());
    for (const auto& l : m.layers) {
        CHECK((l.norm_attn.values().array() == 1.0f).all());
        CHECK((l.norm_ffn.values().array() == 1.0f).all());
    }
    const double sd = std::sqrt(m.layers[0].ffn_up.values().squaredNorm() / m.layers[0].ffn_up.size());
    CHECK(sd == doctest::Approx(0.02).epsilon(0.05));
}
