#include <doctest.h>

#include "gazevqa/evaluation.hpp"
#include "gazevqa/fixture.hpp"
#include "gazevqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace gazevqa;

namespace {

// orthogonal-by-construction embedder: each distinct string gets its own axis
class AxisEmbedder final : public SentenceEmbedder {
public:
    explicit AxisEmbedder(std::vector<std::string> words) : words_(std::move(words)) {}
    int dim() const override { return static_cast<int>(words_.size()); }
    std::vector<double> apply(const std::string& txt) const override {
        std::vector<double> v(words_.size(), 0.0);
        for (std::size_t i = 0; i < words_.size(); ++i) {
            if (words_[i] == txt) {
                v[i] = 1.0;
                return v;
            }
        }
        throw ValidationError("AxisEmbedder: unknown string '" + txt + "'");
    }

private:
    std::vector<std::string> words_;
};

// fixed vector table for hand-computed cosine checks
class TableEmbedder final : public SentenceEmbedder {
public:
    explicit TableEmbedder(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {}
    int dim() const override { return static_cast<int>(table_.begin()->second.size()); }
    std::vector<double> apply(const std::string& txt) const override { return table_.at(txt); }

private:
    std::map<std::string, std::vector<double>> table_;
};

class ZeroEmbedder final : public SentenceEmbedder {
public:
    int dim() const override { return 4; }
    std::vector<double> apply(const std::string&) const override { return std::vector<double>(4, 0.0); }
};

std::vector<std::string> golds_with_matches(int matches) {
    std::vector<std::string> golds;
    for (int i = 0; i < matches; ++i) {
        golds.push_back("ねこ");
    }
    for (int i = matches; i < 10; ++i) {
        golds.push_back("いぬ" + std::to_string(i));
    }
    return golds;
}

} // namespace

TEST_SUITE("evaluation") {

TEST_CASE("vqa accuracy equals min(matches/3, 1) for all match counts") {
    for (int matches = 0; matches <= 10; ++matches) {
        const double expected = std::min(static_cast<double>(matches) / 3.0, 1.0);
        CHECK(vqa_accuracy("ねこ", golds_with_matches(matches)) == doctest::Approx(expected).epsilon(1e-15));
    }
    CHECK(vqa_accuracy("ねこ", golds_with_matches(4)) == 1.0);  // min(4/3, 1)
    CHECK(vqa_accuracy("ねこ", golds_with_matches(2)) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(vqa_accuracy("ねこ", golds_with_matches(0)) == 0.0);
}

TEST_CASE("vqa accuracy is permutation invariant and saturates") {
    auto golds = golds_with_matches(3);
    const double base = vqa_accuracy("ねこ", golds);
    CHECK(base == 1.0);
    RandomSource rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        rng.shuffle(golds);
        CHECK(vqa_accuracy("ねこ", golds) == base);
    }
    // monotone non-decreasing in match count
    double prev = 0.0;
    for (int matches = 0; matches <= 10; ++matches) {
        const double acc = vqa_accuracy("ねこ", golds_with_matches(matches));
        CHECK(acc >= prev);
        prev = acc;
    }
}

TEST_CASE("matching normalizes width, whitespace and trailing punctuation") {
    const std::vector<std::string> golds = {"ネコ。", "ねこ", "ねこ", "x1", "x2", "x3", "x4", "x5", "x6", "x7"};
    // half-width prediction with trailing period matches the full-width gold
    CHECK(vqa_accuracy("ﾈｺ.", golds) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(exact_match(" ねこ。", golds) == 1.0);
}

TEST_CASE("empty gold sets are errors") {
    CHECK_THROWS_AS(vqa_accuracy("x", {}), ValidationError);
    CHECK_THROWS_AS(exact_match("x", {}), ValidationError);
    const HashEmbedder emb;
    CHECK_THROWS_AS(similarity_score("x", {}, emb), ValidationError);
}

TEST_CASE("similarity of identical strings is 1") {
    const HashEmbedder emb;
    CHECK(similarity_score("みどりのかさ", {"みどりのかさ", "みどりのかさ"}, emb) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("orthogonal embeddings give zero similarity") {
    const AxisEmbedder emb({"a1", "b2", "c3"});
    CHECK(similarity_score("a1", {"b2", "c3"}, emb) == 0.0);
}

TEST_CASE("hand-set vectors match the dot-product oracle") {
    TableEmbedder emb({{"p", {1.0, 0.0}}, {"g1", {0.0, 1.0}}, {"g2", {1.0, 1.0}}, {"g3", {-1.0, 0.0}}});
    // cos(p,g1) = 0; cos(p,g2) = 1/sqrt(2); cos(p,g3) = -1
    const double expected = (0.0 + 1.0 / std::sqrt(2.0) - 1.0) / 3.0;
    CHECK(expected == doctest::Approx(-0.0976310729378175).epsilon(1e-12));
    CHECK(similarity_score("p", {"g1", "g2", "g3"}, emb) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("similarity is scale invariant per embedding") {
    TableEmbedder a({{"p", {0.3, -0.4, 1.0}}, {"g", {2.0, 0.5, -0.25}}});
    TableEmbedder b({{"p", {3 * 0.3, 3 * -0.4, 3 * 1.0}}, {"g", {2.0, 0.5, -0.25}}});
    CHECK(similarity_score("p", {"g"}, a) == doctest::Approx(similarity_score("p", {"g"}, b)).epsilon(1e-12));
}

TEST_CASE("similarity is permutation invariant in golds") {
    const HashEmbedder emb;
    const std::vector<std::string> golds = {"あか", "あお", "きいろ"};
    std::vector<std::string> shuffled = {"きいろ", "あか", "あお"};
    CHECK(similarity_score("みどり", golds, emb) ==
          doctest::Approx(similarity_score("みどり", shuffled, emb)).epsilon(1e-15));
}

TEST_CASE("zero-norm embeddings are errors") {
    const ZeroEmbedder emb;
    CHECK_THROWS_AS(similarity_score("a", {"b"}, emb), ValidationError);
}

TEST_CASE("hash embedder is deterministic and never zero") {
    const HashEmbedder emb;
    const auto a = emb.apply("これは何色ですか");
    const auto b = emb.apply("これは何色ですか");
    CHECK(a == b);
    const auto empty = emb.apply("");
    double norm = 0.0;
    for (const double x : empty) {
        norm += x * x;
    }
    CHECK(norm > 0.0);
}

TEST_CASE("average_reports is the arithmetic mean of run aggregates") {
    // per-sample accuracies {0,1} and {1,1}: run means 50 and 100 -> 75
    EvalReport r1;
    r1.acc = 50.0;
    r1.bs = 80.0;
    r1.per_type[{QuestionMajor::What, QuestionMinor::Color}] = TypeStats{2, 50.0, 80.0};
    EvalReport r2;
    r2.acc = 100.0;
    r2.bs = 90.0;
    r2.per_type[{QuestionMajor::What, QuestionMinor::Color}] = TypeStats{2, 100.0, 90.0};

    const EvalReport avg = average_reports({r1, r2});
    CHECK(avg.acc == doctest::Approx(75.0).epsilon(1e-12));
    CHECK(avg.bs == doctest::Approx(85.0).epsilon(1e-12));
    const auto st = avg.per_type.at({QuestionMajor::What, QuestionMinor::Color});
    CHECK(st.count == 2);
    CHECK(st.acc == doctest::Approx(75.0).epsilon(1e-12));

    // single-run averaging is the identity
    const EvalReport solo = average_reports({r1});
    CHECK(solo.acc == r1.acc);
    CHECK(solo.bs == r1.bs);

    // mismatched per-type counts mean different test sets
    EvalReport r3 = r2;
    r3.per_type[{QuestionMajor::What, QuestionMinor::Color}].count = 5;
    CHECK_THROWS_AS(average_reports({r1, r3}), ValidationError);
    CHECK_THROWS_AS(average_reports({}), ValidationError);
}

namespace {

struct EvalEnv {
    FixturePaths paths;
    Dataset test;
    BundleConfig cfg;

    static EvalEnv make(const std::string& tag) {
        EvalEnv env;
        const auto dir = std::filesystem::temp_directory_path() / ("gazevqa_evalenv_" + tag);
        std::filesystem::remove_all(dir);
        env.paths = write_fixture(dir, FixtureSpec{});
        env.test = load_dataset(env.paths.test_jsonl);

        env.cfg.d_img = 12;
        env.cfg.series_len = 3;
        env.cfg.d_e = 16;
        env.cfg.mapping_layers = 1;
        env.cfg.mapping_heads = 2;
        env.cfg.decoder_blocks = 1;
        env.cfg.decoder_heads = 2;
        env.cfg.adapters = false;

        std::vector<std::string> texts = {"Question:", "Answer:"};
        for (const auto& s : env.test.samples) {
            texts.push_back(s.question);
            for (const auto& a : s.answers) {
                texts.push_back(a);
            }
        }
        env.cfg.alphabet = CharTokenizer::from_corpus(texts).alphabet();
        return env;
    }
};

EvalOptions quick_opts(const std::string& variant = "none") {
    EvalOptions opts;
    opts.gen.beam_width = 2;
    opts.gen.max_new_tokens = 5;
    opts.variant = variant;
    return opts;
}

} // namespace

TEST_CASE("evaluate_bundle aggregates equal per-sample means") {
    EvalEnv env = EvalEnv::make("agg");
    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;

    const EvalReport report = evaluate_bundle(bundle, tok, layout, env.test, env.paths.root, emb, quick_opts());

    REQUIRE(report.per_sample.size() == env.test.size());
    double acc_sum = 0.0;
    double bs_sum = 0.0;
    for (const auto& s : report.per_sample) {
        acc_sum += s.acc;
        bs_sum += s.bs;
    }
    CHECK(report.acc == doctest::Approx(100.0 * acc_sum / env.test.size()).epsilon(1e-12));
    CHECK(report.bs == doctest::Approx(100.0 * bs_sum / env.test.size()).epsilon(1e-12));
    CHECK(report.protocol_full); // ten answers per sample

    // per-type counts sum to the total; weighted per-type means recombine
    long count_sum = 0;
    double weighted_acc = 0.0;
    for (const auto& [qt, st] : report.per_type) {
        count_sum += st.count;
        weighted_acc += st.acc * static_cast<double>(st.count);
    }
    CHECK(count_sum == static_cast<long>(env.test.size()));
    CHECK(report.acc == doctest::Approx(weighted_acc / static_cast<double>(count_sum)).epsilon(1e-9));
}

TEST_CASE("parallel evaluation matches the single-threaded aggregate") {
    EvalEnv env = EvalEnv::make("jobs");
    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;

    EvalOptions serial = quick_opts();
    EvalOptions parallel = quick_opts();
    parallel.jobs = 3;
    const EvalReport a = evaluate_bundle(bundle, tok, layout, env.test, env.paths.root, emb, serial);
    const EvalReport b = evaluate_bundle(bundle, tok, layout, env.test, env.paths.root, emb, parallel);
    CHECK(a.acc == b.acc);
    CHECK(a.bs == b.bs);
    REQUIRE(a.per_sample.size() == b.per_sample.size());
    for (std::size_t i = 0; i < a.per_sample.size(); ++i) {
        CHECK(a.per_sample[i].prediction == b.per_sample[i].prediction);
    }
}

TEST_CASE("single-gold samples fall back to exact match and are flagged") {
    EvalEnv env = EvalEnv::make("fallback");
    const Dataset train_set = load_dataset(env.paths.train_jsonl); // one answer each
    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;
    const EvalReport report =
        evaluate_bundle(bundle, tok, layout, train_set, env.paths.root, emb, quick_opts());
    CHECK_FALSE(report.protocol_full);
    for (const auto& s : report.per_sample) {
        CHECK((s.acc == 0.0 || s.acc == 1.0)); // exact match only
    }
}

TEST_CASE("drop_question ignores the question text") {
    EvalEnv env = EvalEnv::make("dropq");
    // same scenes, rewritten questions (alphabet must cover both forms)
    Dataset alt = env.test;
    for (auto& s : alt.samples) {
        s.question = "どんな色かおしえてほしい"; // 12 chars
    }
    std::vector<std::string> texts = {"Question:", "Answer:", alt.samples.front().question};
    for (const auto& s : env.test.samples) {
        texts.push_back(s.question);
        for (const auto& a : s.answers) {
            texts.push_back(a);
        }
    }
    env.cfg.alphabet = CharTokenizer::from_corpus(texts).alphabet();

    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;

    const EvalReport a =
        evaluate_bundle(bundle, tok, layout, env.test, env.paths.root, emb, quick_opts("drop_question"));
    const EvalReport b =
        evaluate_bundle(bundle, tok, layout, alt, env.paths.root, emb, quick_opts("drop_question"));
    REQUIRE(a.per_sample.size() == b.per_sample.size());
    for (std::size_t i = 0; i < a.per_sample.size(); ++i) {
        CHECK(a.per_sample[i].prediction == b.per_sample[i].prediction);
    }
    CHECK(a.variant == "drop_question");
}

TEST_CASE("drop_image_series ignores the image") {
    EvalEnv env = EvalEnv::make("dropimg");
    // same questions over different images: tr_0 and tr_5 gaze at different
    // quadrants of different bases
    Dataset two;
    two.samples = {env.test.samples[0], env.test.samples[5]};
    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;
    const EvalReport r =
        evaluate_bundle(bundle, tok, layout, two, env.paths.root, emb, quick_opts("drop_image_series"));
    // identical prompts with the image series dropped: identical predictions
    CHECK(r.per_sample[0].prediction == r.per_sample[1].prediction);
}

TEST_CASE("image_is_roi_gt with a full-image gt box equals the unablated run") {
    EvalEnv env = EvalEnv::make("roigt");
    Dataset full_box = env.test;
    for (auto& s : full_box.samples) {
        s.gt_roi = BoundingBox{0, 0, s.image_w, s.image_h};
    }
    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;
    const EvalReport plain = evaluate_bundle(bundle, tok, layout, full_box, env.paths.root, emb, quick_opts());
    const EvalReport ablated =
        evaluate_bundle(bundle, tok, layout, full_box, env.paths.root, emb, quick_opts("image_is_roi_gt"));
    REQUIRE(plain.per_sample.size() == ablated.per_sample.size());
    for (std::size_t i = 0; i < plain.per_sample.size(); ++i) {
        CHECK(plain.per_sample[i].prediction == ablated.per_sample[i].prediction);
    }
    CHECK(plain.acc == ablated.acc);
}

TEST_CASE("estimated-roi ablation consumes sibling heatmaps") {
    EvalEnv env = EvalEnv::make("roiest");
    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;
    // fixture heatmaps mark the gazed quadrant, so this must run end to end
    const EvalReport r = evaluate_bundle(bundle, tok, layout, env.test, env.paths.root, emb,
                                         quick_opts("image_is_roi_estimated"));
    CHECK(r.per_sample.size() == env.test.size());
}

TEST_CASE("worker exceptions propagate out of parallel evaluation") {
    EvalEnv env = EvalEnv::make("joberr");
    // estimated-RoI needs heatmap files; remove them all
    for (const auto& s : env.test.samples) {
        std::filesystem::remove(heatmap_path_for(env.paths.root, s));
    }
    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;
    EvalOptions opts = quick_opts("image_is_roi_estimated");
    opts.jobs = 3;
    CHECK_THROWS_AS(evaluate_bundle(bundle, tok, layout, env.test, env.paths.root, emb, opts), FormatError);
}

TEST_CASE("unknown ablation variants are rejected") {
    EvalEnv env = EvalEnv::make("badvariant");
    ModelBundle<float> bundle(env.cfg, CharTokenizer(env.cfg.alphabet).vocab_size());
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;
    GenerationConfig gen;
    gen.beam_width = 2;
    gen.max_new_tokens = 4;
    CHECK_THROWS_AS(ablate(bundle, tok, layout, env.test, env.paths.root, emb, "drop_everything", gen),
                    ConfigError);
}

TEST_CASE("evaluate_runs averages multiple bundles") {
    EvalEnv env = EvalEnv::make("runs");
    const CharTokenizer tok(env.cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok);
    const HashEmbedder emb;

    BundleConfig cfg_a = env.cfg;
    cfg_a.init_seed = 1;
    BundleConfig cfg_b = env.cfg;
    cfg_b.init_seed = 2;
    ModelBundle<float> a(cfg_a, tok.vocab_size());
    ModelBundle<float> b(cfg_b, tok.vocab_size());

    const AveragedEval eval = evaluate_runs({&a, &b}, tok, layout, env.test, env.paths.root, emb, quick_opts());
    REQUIRE(eval.runs.size() == 2);
    CHECK(eval.average.acc == doctest::Approx((eval.runs[0].acc + eval.runs[1].acc) / 2.0).epsilon(1e-12));
    CHECK(eval.average.bs == doctest::Approx((eval.runs[0].bs + eval.runs[1].bs) / 2.0).epsilon(1e-12));
    CHECK(eval.average.per_sample.empty());

    // report files
    const auto dir = std::filesystem::temp_directory_path() / "gazevqa_reports";
    std::filesystem::create_directories(dir);
    write_report_json(eval, dir / "report.json");
    write_per_type_csv(eval.average, dir / "per_type.csv");
    CHECK(std::filesystem::file_size(dir / "report.json") > 0);
    std::ifstream csv(dir / "per_type.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "type,subtype,count,acc,bs");
}

} // TEST_SUITE
