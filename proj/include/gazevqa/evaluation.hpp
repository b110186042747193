#pragma once

#include "gazevqa/bundle.hpp"
#include "gazevqa/dataset.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gazevqa {

struct SentenceEmbedder {
    virtual ~SentenceEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> apply(const std::string& txt) const = 0;
};

// Deterministic character-n-gram hash embedder (n = 1..3 over code points of
// the canonical text). Component 0 is a constant anchor, so no text embeds to
// the zero vector. Stands in for a sentence encoder at desk scale.
class HashEmbedder final : public SentenceEmbedder {
public:
    explicit HashEmbedder(int dim = 64, std::uint64_t seed = 17);

    int dim() const override { return dim_; }
    std::vector<double> apply(const std::string& txt) const override;

private:
    int dim_;
    std::uint64_t seed_;
};

// min(matches / 3, 1); matching is string equality after NFKC, trim, and
// trailing sentence-punctuation strip. Test protocol supplies exactly 10
// gold answers. Empty gold set is an error.
double vqa_accuracy(const std::string& prediction, const std::vector<std::string>& golds);

// 1 if the prediction matches any gold under the same normalization; the
// degenerate single-gold form used outside the 10-answer test protocol.
double exact_match(const std::string& prediction, const std::vector<std::string>& golds);

// Mean over golds of the cosine similarity between embeddings. Throws on an
// empty gold set or a zero-norm embedding.
double similarity_score(const std::string& prediction, const std::vector<std::string>& golds,
                        const SentenceEmbedder& embedder);

struct PerSampleResult {
    std::string sample_id;
    std::string prediction;
    double acc = 0.0; // [0, 1]
    double bs = 0.0;  // [-1, 1]
};

struct TypeStats {
    long count = 0;
    double acc = 0.0; // x100
    double bs = 0.0;  // x100
};

struct EvalReport {
    double acc = 0.0; // mean VQA accuracy x100
    double bs = 0.0;  // mean similarity x100
    std::string variant = "none";
    bool protocol_full = true; // false when any sample used the exact-match fallback
    std::map<QuestionType, TypeStats> per_type;
    std::vector<PerSampleResult> per_sample;
};

struct AveragedEval {
    std::vector<EvalReport> runs;
    EvalReport average; // per_sample left empty
};

// Arithmetic mean of run aggregates and per-type entries (the runs must share
// one test set).
EvalReport average_reports(const std::vector<EvalReport>& runs);

struct EvalOptions {
    GenerationConfig gen;
    int jobs = 1;
    // none | drop_image_series | drop_question | image_is_roi_estimated | image_is_roi_gt
    std::string variant = "none";
};

// Generates an answer per sample with beam search and scores it. The bundle
// is treated as frozen; samples may be evaluated in parallel (--jobs) with
// order-independent aggregates.
EvalReport evaluate_bundle(ModelBundle<float>& bundle, const Tokenizer& tok, const PromptLayout& layout,
                           const Dataset& testset, const std::filesystem::path& data_root,
                           const SentenceEmbedder& embedder, const EvalOptions& opts);

// Multi-run evaluation (one trained bundle per seed) plus the averaged report.
AveragedEval evaluate_runs(const std::vector<ModelBundle<float>*>& bundles, const Tokenizer& tok,
                           const PromptLayout& layout, const Dataset& testset,
                           const std::filesystem::path& data_root, const SentenceEmbedder& embedder,
                           const EvalOptions& opts);

// Input-ablation harness; equivalent to evaluate_bundle with the variant set.
EvalReport ablate(ModelBundle<float>& bundle, const Tokenizer& tok, const PromptLayout& layout,
                  const Dataset& testset, const std::filesystem::path& data_root,
                  const SentenceEmbedder& embedder, const std::string& variant, const GenerationConfig& gen);

void write_report_json(const AveragedEval& eval, const std::filesystem::path& path);
void write_per_type_csv(const EvalReport& report, const std::filesystem::path& path);

} // namespace gazevqa
