#include "gazevqa/evaluation.hpp"

#include "gazevqa/heatmap.hpp"
#include "gazevqa/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

using nlohmann::json;

namespace gazevqa {

HashEmbedder::HashEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 2) {
        throw ConfigError("hash embedder needs dim >= 2");
    }
}

std::vector<double> HashEmbedder::apply(const std::string& txt) const {
    std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
    out[0] = 1.0; // constant anchor
    const auto cps = text::utf8_decode(text::canonical(txt));
    for (std::size_t i = 0; i < cps.size(); ++i) {
        for (std::size_t n = 1; n <= 3 && i + n <= cps.size(); ++n) {
            const std::uint64_t h = fnv1a64(&cps[i], n * sizeof(char32_t), seed_);
            const auto slot = 1 + static_cast<int>(h % static_cast<std::uint64_t>(dim_ - 1));
            out[static_cast<std::size_t>(slot)] += (h >> 32) % 2 == 0 ? 1.0 : -1.0;
        }
    }
    return out;
}

namespace {

long match_count(const std::string& prediction, const std::vector<std::string>& golds) {
    const std::string key = text::answer_key(prediction);
    long matches = 0;
    for (const auto& g : golds) {
        if (text::answer_key(g) == key) {
            ++matches;
        }
    }
    return matches;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw ValidationError("zero-norm sentence embedding");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace

double vqa_accuracy(const std::string& prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) {
        throw ValidationError("vqa_accuracy requires a nonempty gold set");
    }
    return std::min(static_cast<double>(match_count(prediction, golds)) / 3.0, 1.0);
}

double exact_match(const std::string& prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) {
        throw ValidationError("exact_match requires a nonempty gold set");
    }
    return match_count(prediction, golds) > 0 ? 1.0 : 0.0;
}

double similarity_score(const std::string& prediction, const std::vector<std::string>& golds,
                        const SentenceEmbedder& embedder) {
    if (golds.empty()) {
        throw ValidationError("similarity_score requires a nonempty gold set");
    }
    const auto pred_emb = embedder.apply(prediction);
    double sum = 0.0;
    for (const auto& g : golds) {
        sum += cosine(pred_emb, embedder.apply(g));
    }
    return sum / static_cast<double>(golds.size());
}

namespace {

enum class Variant { None, DropImageSeries, DropQuestion, ImageIsRoiEstimated, ImageIsRoiGt };

Variant parse_variant(const std::string& v) {
    if (v == "none") {
        return Variant::None;
    }
    if (v == "drop_image_series") {
        return Variant::DropImageSeries;
    }
    if (v == "drop_question") {
        return Variant::DropQuestion;
    }
    if (v == "image_is_roi_estimated") {
        return Variant::ImageIsRoiEstimated;
    }
    if (v == "image_is_roi_gt") {
        return Variant::ImageIsRoiGt;
    }
    throw ConfigError("unknown ablation variant '" + v + "'");
}

Image estimated_roi_crop(const Image& img, const GazeVQASample& sample, const std::filesystem::path& root) {
    const Heatmap h = load_heatmap(heatmap_path_for(root, sample));
    return crop(img, extract_roi(binarize(h), img.width, img.height));
}

PerSampleResult eval_one(ModelBundle<float>& bundle, const Tokenizer& tok, const PromptLayout& layout,
                         const GazeVQASample& sample, const std::filesystem::path& root,
                         const SentenceEmbedder& embedder, Variant variant, const GenerationConfig& gen,
                         bool& protocol_full) {
    const Image img = load_ppm(root / sample.image_ref);

    // encoder input, possibly replaced by an RoI crop for the ablations
    const Image* enc_input = &img;
    Image cropped;
    if (variant == Variant::ImageIsRoiGt) {
        cropped = crop(img, sample.gt_roi);
        enc_input = &cropped;
    } else if (variant == Variant::ImageIsRoiEstimated) {
        cropped = estimated_roi_crop(img, sample, root);
        enc_input = &cropped;
    }

    ImageSeries<float> p = encode_series(*enc_input, *bundle.encoder, bundle.proj);
    ImageSeries<float> r;
    if (bundle.cfg.adapters) {
        Image s_input;
        switch (adapter_source_from_string(bundle.cfg.adapter_source)) {
        case AdapterSource::Image: s_input = img; break;
        case AdapterSource::GtRoi: s_input = crop(img, sample.gt_roi); break;
        case AdapterSource::EstimatedRoi: s_input = estimated_roi_crop(img, sample, root); break;
        }
        ImageSeries<float> s = encode_series(s_input, *bundle.encoder, bundle.roi_projection());
        r = mapping_forward(p, &s, bundle.mapping);
    } else {
        r = mapping_forward(p, nullptr, bundle.mapping);
    }

    std::vector<int> q_tokens =
        variant == Variant::DropQuestion ? std::vector<int>{} : tok.encode(sample.question);
    const ImageSeries<float>* series = variant == Variant::DropImageSeries ? nullptr : &r;
    const nn::Mat<float> prefix = assemble_input(series, q_tokens, layout, bundle.decoder);

    const ToyDecoderStepper stepper(bundle.decoder);
    const std::vector<int> out_tokens = generate(stepper, prefix, gen);

    PerSampleResult res;
    res.sample_id = sample.sample_id;
    res.prediction = tok.decode(out_tokens);
    if (sample.answers.size() == 10) {
        res.acc = vqa_accuracy(res.prediction, sample.answers);
    } else {
        res.acc = exact_match(res.prediction, sample.answers);
        protocol_full = false;
    }
    res.bs = similarity_score(res.prediction, sample.answers, embedder);
    return res;
}

} // namespace

EvalReport evaluate_bundle(ModelBundle<float>& bundle, const Tokenizer& tok, const PromptLayout& layout,
                           const Dataset& testset, const std::filesystem::path& data_root,
                           const SentenceEmbedder& embedder, const EvalOptions& opts) {
    if (testset.empty()) {
        throw ValidationError("evaluation set is empty");
    }
    const Variant variant = parse_variant(opts.variant);

    EvalReport report;
    report.variant = opts.variant;
    report.per_sample.resize(testset.size());
    std::vector<std::uint8_t> full_flags(testset.size(), 1);

    const int jobs = std::max(1, opts.jobs);
    const auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            bool full = true;
            report.per_sample[i] = eval_one(bundle, tok, layout, testset.samples[i], data_root, embedder, variant,
                                            opts.gen, full);
            full_flags[i] = full ? 1 : 0;
        }
    };
    if (jobs == 1 || testset.size() < 2) {
        worker(0, testset.size());
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
        const std::size_t chunk = (testset.size() + jobs - 1) / jobs;
        for (int j = 0; j < jobs; ++j) {
            const std::size_t b = static_cast<std::size_t>(j) * chunk;
            const std::size_t e = std::min(testset.size(), b + chunk);
            if (b < e) {
                pool.emplace_back([&, j, b, e] {
                    try {
                        worker(b, e);
                    } catch (...) {
                        errors[static_cast<std::size_t>(j)] = std::current_exception();
                    }
                });
            }
        }
        for (auto& t : pool) {
            t.join();
        }
        for (const auto& err : errors) {
            if (err) {
                std::rethrow_exception(err);
            }
        }
    }

    // aggregate deterministically in sample order
    double acc_sum = 0.0;
    double bs_sum = 0.0;
    struct Accum {
        long count = 0;
        double acc = 0.0;
        double bs = 0.0;
    };
    std::map<QuestionType, Accum> types;
    for (std::size_t i = 0; i < testset.size(); ++i) {
        const auto& r = report.per_sample[i];
        acc_sum += r.acc;
        bs_sum += r.bs;
        auto& a = types[classify_question(testset.samples[i].question)];
        ++a.count;
        a.acc += r.acc;
        a.bs += r.bs;
        if (!full_flags[i]) {
            report.protocol_full = false;
        }
    }
    report.acc = 100.0 * acc_sum / static_cast<double>(testset.size());
    report.bs = 100.0 * bs_sum / static_cast<double>(testset.size());
    for (const auto& [qt, a] : types) {
        report.per_type[qt] = TypeStats{a.count, 100.0 * a.acc / static_cast<double>(a.count),
                                        100.0 * a.bs / static_cast<double>(a.count)};
    }
    return report;
}

EvalReport average_reports(const std::vector<EvalReport>& runs) {
    if (runs.empty()) {
        throw ValidationError("cannot average zero evaluation runs");
    }
    EvalReport avg;
    avg.variant = runs.front().variant;
    for (const auto& r : runs) {
        avg.acc += r.acc;
        avg.bs += r.bs;
        avg.protocol_full = avg.protocol_full && r.protocol_full;
        for (const auto& [qt, st] : r.per_type) {
            auto& dst = avg.per_type[qt];
            if (dst.count != 0 && dst.count != st.count) {
                throw ValidationError("per-type counts differ across runs; reports do not share a test set");
            }
            dst.count = st.count;
            dst.acc += st.acc;
            dst.bs += st.bs;
        }
    }
    const auto n = static_cast<double>(runs.size());
    avg.acc /= n;
    avg.bs /= n;
    for (auto& [qt, st] : avg.per_type) {
        st.acc /= n;
        st.bs /= n;
    }
    return avg;
}

AveragedEval evaluate_runs(const std::vector<ModelBundle<float>*>& bundles, const Tokenizer& tok,
                           const PromptLayout& layout, const Dataset& testset,
                           const std::filesystem::path& data_root, const SentenceEmbedder& embedder,
                           const EvalOptions& opts) {
    if (bundles.empty()) {
        throw ValidationError("evaluate_runs requires at least one bundle");
    }
    AveragedEval out;
    for (ModelBundle<float>* b : bundles) {
        out.runs.push_back(evaluate_bundle(*b, tok, layout, testset, data_root, embedder, opts));
    }
    out.average = average_reports(out.runs);
    return out;
}

EvalReport ablate(ModelBundle<float>& bundle, const Tokenizer& tok, const PromptLayout& layout,
                  const Dataset& testset, const std::filesystem::path& data_root,
                  const SentenceEmbedder& embedder, const std::string& variant, const GenerationConfig& gen) {
    EvalOptions opts;
    opts.gen = gen;
    opts.variant = variant;
    return evaluate_bundle(bundle, tok, layout, testset, data_root, embedder, opts);
}

namespace {

json report_to_json(const EvalReport& r, bool with_samples) {
    json per_type = json::array();
    for (const auto& [qt, st] : r.per_type) {
        per_type.push_back({{"type", to_string(qt.major)},
                            {"subtype", to_string(qt.minor)},
                            {"count", st.count},
                            {"acc", st.acc},
                            {"bs", st.bs}});
    }
    json j{{"acc", r.acc}, {"bs", r.bs}, {"variant", r.variant}, {"protocol_full", r.protocol_full},
           {"per_type", per_type}};
    if (with_samples) {
        json samples = json::array();
        for (const auto& s : r.per_sample) {
            samples.push_back({{"sample_id", s.sample_id},
                               {"prediction", s.prediction},
                               {"acc", s.acc},
                               {"bs", s.bs}});
        }
        j["per_sample"] = samples;
    }
    return j;
}

} // namespace

void write_report_json(const AveragedEval& eval, const std::filesystem::path& path) {
    json runs = json::array();
    for (const auto& r : eval.runs) {
        runs.push_back(report_to_json(r, true));
    }
    const json j{{"runs", runs}, {"average", report_to_json(eval.average, false)}};
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write report: " + path.string());
    }
    out << j.dump(2) << "\n";
}

void write_per_type_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write per-type CSV: " + path.string());
    }
    out << "type,subtype,count,acc,bs\n";
    char buf[64];
    for (const auto& [qt, st] : report.per_type) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f", st.acc, st.bs);
        out << to_string(qt.major) << "," << to_string(qt.minor) << "," << st.count << "," << buf << "\n";
    }
}

} // namespace gazevqa
