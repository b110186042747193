#include <doctest.h>

#include "gazevqa/decoder.hpp"
#include "gazevqa/rng.hpp"

#include "oracles.hpp"

#include <cmath>
#include <limits>

using namespace gazevqa;

namespace {

std::vector<int> greedy_rollout(const DecoderStepper& dec, const nn::Mat<float>& prefix,
                                const GenerationConfig& cfg) {
    std::vector<int> tokens;
    for (int step = 0; step < cfg.max_new_tokens; ++step) {
        nn::Mat<float> seq(prefix.rows + static_cast<int>(tokens.size()), prefix.cols);
        std::copy(prefix.v.begin(), prefix.v.end(), seq.v.begin());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const nn::Mat<float> e = dec.embed(tokens[i]);
            for (int c = 0; c < prefix.cols; ++c) {
                seq(prefix.rows + static_cast<int>(i), c) = e(0, c);
            }
        }
        const auto logits = dec.next_logits(seq);
        int arg = 0;
        for (int t = 1; t < dec.vocab_size(); ++t) {
            if (logits[static_cast<std::size_t>(t)] > logits[static_cast<std::size_t>(arg)]) {
                arg = t;
            }
        }
        if (arg == cfg.eos_id) {
            break;
        }
        tokens.push_back(arg);
    }
    return tokens;
}

ToyDecoder<float> small_decoder(int vocab, std::uint64_t seed) {
    RandomSource rng(seed);
    return ToyDecoder<float>(vocab, 8, 2, 2, 64, rng);
}

} // namespace

TEST_SUITE("decoder") {

TEST_CASE("char tokenizer round trips over its alphabet") {
    const CharTokenizer tok("さくらもちabc");
    CHECK(tok.vocab_size() == 9); // 8 characters + eos
    CHECK(tok.eos_id() == 0);
    const std::string s = "もちもちabc";
    CHECK(tok.decode(tok.encode(s)) == s);
    CHECK(tok.encode("") == std::vector<int>{});
    // ids are stable and sorted by code point
    const auto ids = tok.encode("abc");
    CHECK(ids[0] + 1 == ids[1]);
    CHECK(ids[1] + 1 == ids[2]);
}

TEST_CASE("tokenizer rejects characters outside the alphabet") {
    const CharTokenizer tok("abc");
    CHECK_THROWS_AS(tok.encode("abd"), ValidationError);
    CHECK_THROWS_AS(tok.decode({99}), ValidationError);
}

TEST_CASE("decode stops at eos") {
    const CharTokenizer tok("ab");
    const auto a = tok.encode("a");
    std::vector<int> ids = {a[0], tok.eos_id(), a[0]};
    CHECK(tok.decode(ids) == "a");
}

TEST_CASE("from_corpus covers every character used") {
    const auto tok = CharTokenizer::from_corpus({"Question:", "Answer:", "これは何色ですか"});
    CHECK_NOTHROW(tok.encode("Question:"));
    CHECK_NOTHROW(tok.encode("何色"));
}

TEST_CASE("assemble_input order and length") {
    // distinguishable rows: embedding of token t is [t], image rows negative
    const auto embed = [](const std::vector<int>& ids) {
        nn::Mat<float> m(static_cast<int>(ids.size()), 1);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            m(static_cast<int>(i), 0) = static_cast<float>(ids[i]);
        }
        return m;
    };
    PromptLayout layout;
    layout.sep1_tokens = {101, 102, 103};
    layout.sep2_tokens = {201, 202};

    nn::Mat<float> series(10, 1);
    for (int i = 0; i < 10; ++i) {
        series(i, 0) = static_cast<float>(-(i + 1));
    }
    const std::vector<int> q = {1, 2, 3, 4, 5};

    SUBCASE("n=10, |SEP1|=3, m=5, |SEP2|=2 gives length 20 in order") {
        const auto out = assemble_input<float>(&series, q, layout, embed);
        REQUIRE(out.rows == 20);
        for (int i = 0; i < 10; ++i) {
            CHECK(out(i, 0) == static_cast<float>(-(i + 1)));
        }
        CHECK(out(10, 0) == 101);
        CHECK(out(11, 0) == 102);
        CHECK(out(12, 0) == 103);
        for (int i = 0; i < 5; ++i) {
            CHECK(out(13 + i, 0) == static_cast<float>(q[static_cast<std::size_t>(i)]));
        }
        CHECK(out(18, 0) == 201);
        CHECK(out(19, 0) == 202);
    }
    SUBCASE("empty question keeps [series, SEP1, SEP2]") {
        const auto out = assemble_input<float>(&series, {}, layout, embed);
        REQUIRE(out.rows == 15);
        CHECK(out(10, 0) == 101);
        CHECK(out(13, 0) == 201);
    }
    SUBCASE("omitted image series keeps [SEP1, q, SEP2]") {
        const auto out = assemble_input<float>(nullptr, q, layout, embed);
        REQUIRE(out.rows == 10);
        CHECK(out(0, 0) == 101);
        CHECK(out(3, 0) == 1);
        CHECK(out(8, 0) == 201);
    }
    SUBCASE("length is exact over an (n, m) grid") {
        for (const int n : {0, 1, 5, 10}) {
            for (const int m : {0, 1, 5, 17}) {
                nn::Mat<float> r(n, 1);
                std::vector<int> qs(static_cast<std::size_t>(m), 7);
                const auto out = assemble_input<float>(n == 0 ? nullptr : &r, qs, layout, embed);
                CHECK(out.rows == n + 3 + m + 2);
            }
        }
    }
}

TEST_CASE("assemble_input rejects width mismatches and empty separators") {
    const auto embed = [](const std::vector<int>& ids) { return nn::Mat<float>(static_cast<int>(ids.size()), 2); };
    PromptLayout layout;
    layout.sep1_tokens = {1};
    layout.sep2_tokens = {2};
    nn::Mat<float> series(4, 3); // width 3 != embedding width 2
    CHECK_THROWS_AS((assemble_input<float>(&series, {1}, layout, embed)), ConfigError);
    PromptLayout empty_layout;
    empty_layout.sep2_tokens = {2};
    CHECK_THROWS_AS((assemble_input<float>(nullptr, {1}, empty_layout, embed)), ConfigError);
}

TEST_CASE("uniform logits give ln(vocab) loss") {
    // all-zero parameters make every logit zero: a uniform distribution
    ToyDecoder<float> dec = small_decoder(4, 1);
    for (auto* p : dec.params()) {
        for (auto& x : p->value().v) {
            x = 0.0f;
        }
    }
    LossItem<float> item;
    item.prefix = nn::Mat<float>(3, 8);
    item.answer = {1, 2, 3}; // answer length 3
    const float loss = compute_loss(dec, {item});
    CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("probability-one decoder gives zero loss") {
    // blocks=0 and zero embeddings leave only the head bias; a huge bias on
    // one token puts all probability mass there
    RandomSource rng(2);
    ToyDecoder<double> dec(4, 8, 0, 2, 64, rng);
    for (auto* p : dec.params()) {
        for (auto& x : p->value().v) {
            x = 0.0;
        }
    }
    dec.head_b.value()(0, 2) = 1000.0;
    LossItem<double> item;
    item.prefix = nn::Mat<double>(2, 8);
    item.answer = {2, 2, 2};
    CHECK(compute_loss(dec, {item}) == 0.0); // exp(-1000) underflows to exactly 0
}

TEST_CASE("hand-set logits match the softmax oracle") {
    // two answer positions with fixed logits, checked against an independent
    // double-precision softmax computation
    nn::Graph<double> g(true);
    nn::Mat<double> logits(3, 4);
    const double row1[4] = {0.5, -1.0, 2.0, 0.0};
    const double row2[4] = {1.0, 1.0, -3.0, 0.25};
    for (int c = 0; c < 4; ++c) {
        logits(1, c) = row1[c];
        logits(2, c) = row2[c];
        logits(0, c) = 99.0; // prefix row, masked out
    }
    auto node = g.leaf(logits);
    node->requires_grad = true; // leaf participating in backward
    auto sum = g.masked_ce_sum(node, {0, 2, 1}, {0, 1, 1});

    const auto nll = [](const double* row, int target) {
        double mx = row[0];
        for (int i = 1; i < 4; ++i) {
            mx = std::max(mx, row[i]);
        }
        double s = 0.0;
        for (int i = 0; i < 4; ++i) {
            s += std::exp(row[i] - mx);
        }
        return -(row[target] - mx - std::log(s));
    };
    const double expected = nll(row1, 2) + nll(row2, 1);
    CHECK(sum->val(0, 0) == doctest::Approx(expected).epsilon(1e-14));
    CHECK((nll(row1, 2) + nll(row2, 1)) / 2.0 ==
          doctest::Approx(0.5 * sum->val(0, 0)).epsilon(1e-14)); // mean form
}

TEST_CASE("masked positions contribute nothing, including their labels") {
    RandomSource rng(3);
    nn::Mat<double> logits(5, 6);
    for (auto& x : logits.v) {
        x = rng.uniform(-2.0, 2.0);
    }
    const std::vector<std::uint8_t> mask = {0, 1, 0, 1, 0};
    std::vector<int> labels_a = {0, 3, 0, 1, 0};
    std::vector<int> labels_b = {5, 3, 2, 1, 4}; // masked labels perturbed
    nn::Graph<double> g(false);
    const double a = g.masked_ce_sum(g.leaf(logits), labels_a, mask)->val(0, 0);
    const double b = g.masked_ce_sum(g.leaf(logits), labels_b, mask)->val(0, 0);
    CHECK(a == b);
}

TEST_CASE("compute_loss rejects empty answers") {
    ToyDecoder<float> dec = small_decoder(4, 1);
    LossItem<float> item;
    item.prefix = nn::Mat<float>(2, 8);
    item.answer = {};
    CHECK_THROWS_AS(compute_loss(dec, {item}), ValidationError);
    CHECK_THROWS_AS(compute_loss(dec, {}), ValidationError);
}

TEST_CASE("teacher-forced sequence length excludes the final gold token") {
    // prefix P plus answer A feeds P + A - 1 rows; max_seq is enforced
    RandomSource rng(4);
    ToyDecoder<float> dec(4, 8, 1, 2, 10, rng);
    LossItem<float> item;
    item.prefix = nn::Mat<float>(8, 8);
    item.answer = {1, 2, 3}; // 8 + 2 = 10 rows, exactly max_seq
    CHECK_NOTHROW(compute_loss(dec, {item}));
    item.answer = {1, 2, 3, 3}; // 11 rows exceeds max_seq
    CHECK_THROWS_AS(compute_loss(dec, {item}), ConfigError);
}

TEST_CASE("beam width 1 equals greedy argmax decoding") {
    RandomSource rng(21);
    GenerationConfig cfg;
    cfg.beam_width = 1;
    cfg.max_new_tokens = 6;
    for (int trial = 0; trial < 30; ++trial) {
        const oracles::TableDecoder dec = oracles::TableDecoder::random(4, rng);
        const auto prefix = oracles::TableDecoder::start_prefix();
        CHECK(gazevqa::generate(dec, prefix, cfg) == greedy_rollout(dec, prefix, cfg));
    }
    // also through the trainable toy decoder
    ToyDecoder<float> toy = small_decoder(5, 3);
    const ToyDecoderStepper stepper(toy);
    nn::Mat<float> prefix(3, 8);
    RandomSource prng(5);
    for (auto& x : prefix.v) {
        x = static_cast<float>(prng.uniform(-1.0, 1.0));
    }
    CHECK(gazevqa::generate(stepper, prefix, cfg) == greedy_rollout(stepper, prefix, cfg));
}

TEST_CASE("hand-set 3-token table with width 2 matches exhaustive enumeration") {
    // vocab {eos, a, b}; rows: start, after-eos (unused), after-a, after-b
    const std::vector<std::vector<float>> rows = {
        {-1.0f, 2.0f, 1.5f}, // start: prefers a then b
        {0.0f, 0.0f, 0.0f},
        {1.0f, -2.0f, 0.5f}, // after a: eos attractive
        {2.5f, 0.0f, -1.0f}, // after b: eos very attractive
    };
    const oracles::TableDecoder dec(3, rows);
    GenerationConfig cfg;
    cfg.beam_width = 2;
    cfg.max_new_tokens = 2;
    const auto got = gazevqa::generate(dec, oracles::TableDecoder::start_prefix(), cfg);
    const auto want = oracles::generate(dec, oracles::TableDecoder::start_prefix(), cfg);
    CHECK(got == want);
}

TEST_CASE("beam width equal to vocab matches the exhaustive oracle") {
    RandomSource rng(31);
    int agreements = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const int vocab = 3 + static_cast<int>(rng.below(3)); // 3..5
        const oracles::TableDecoder dec = oracles::TableDecoder::random(vocab, rng);
        GenerationConfig cfg;
        cfg.beam_width = vocab;
        cfg.max_new_tokens = 3;
        const auto got = gazevqa::generate(dec, oracles::TableDecoder::start_prefix(), cfg);
        const auto want = oracles::generate(dec, oracles::TableDecoder::start_prefix(), cfg);
        CHECK(got == want);
        agreements += got == want ? 1 : 0;
    }
    CHECK(agreements == 25);
}

TEST_CASE("generation configuration errors") {
    const oracles::TableDecoder dec(3, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
    GenerationConfig cfg;
    cfg.beam_width = 0;
    CHECK_THROWS_AS(gazevqa::generate(dec, oracles::TableDecoder::start_prefix(), cfg), ConfigError);
    cfg.beam_width = 2;
    cfg.max_new_tokens = 0;
    CHECK_THROWS_AS(gazevqa::generate(dec, oracles::TableDecoder::start_prefix(), cfg), ConfigError);
    cfg.max_new_tokens = 2;
    cfg.eos_id = 7;
    CHECK_THROWS_AS(gazevqa::generate(dec, oracles::TableDecoder::start_prefix(), cfg), ConfigError);
    cfg.eos_id = 0;
    CHECK_THROWS_AS(gazevqa::generate(dec, nn::Mat<float>(0, 1), cfg), ValidationError);
}

} // TEST_SUITE
