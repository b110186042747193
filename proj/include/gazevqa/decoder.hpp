#pragma once

#include "gazevqa/model.hpp"
#include "gazevqa/text.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gazevqa {

struct Tokenizer {
    virtual ~Tokenizer() = default;
    virtual int vocab_size() const = 0;
    virtual int eos_id() const = 0;
    virtual std::vector<int> encode(const std::string& txt) const = 0;
    virtual std::string decode(const std::vector<int>& ids) const = 0;
};

// Character-level tokenizer over a declared alphabet of code points.
// Id 0 is <eos>; code points take ids 1..N in sorted order. encode/decode
// round-trip exactly over the alphabet; characters outside it are an error.
class CharTokenizer final : public Tokenizer {
public:
    explicit CharTokenizer(const std::string& alphabet_utf8) {
        auto cps = text::utf8_decode(alphabet_utf8);
        std::sort(cps.begin(), cps.end());
        cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
        chars_ = std::move(cps);
        for (std::size_t i = 0; i < chars_.size(); ++i) {
            ids_[chars_[i]] = static_cast<int>(i) + 1;
        }
    }

    static CharTokenizer from_corpus(const std::vector<std::string>& texts) {
        std::string all;
        for (const auto& t : texts) {
            all += t;
        }
        return CharTokenizer(all);
    }

    int vocab_size() const override { return static_cast<int>(chars_.size()) + 1; }
    int eos_id() const override { return 0; }

    std::vector<int> encode(const std::string& txt) const override {
        std::vector<int> out;
        for (const char32_t cp : text::utf8_decode(txt)) {
            auto it = ids_.find(cp);
            if (it == ids_.end()) {
                throw ValidationError("character U+" + std::to_string(static_cast<unsigned>(cp)) +
                                      " is outside the tokenizer alphabet");
            }
            out.push_back(it->second);
        }
        return out;
    }

    std::string decode(const std::vector<int>& ids) const override {
        std::vector<char32_t> cps;
        for (const int id : ids) {
            if (id == eos_id()) {
                break;
            }
            if (id < 1 || id > static_cast<int>(chars_.size())) {
                throw ValidationError("token id " + std::to_string(id) + " out of vocabulary");
            }
            cps.push_back(chars_[static_cast<std::size_t>(id) - 1]);
        }
        return text::utf8_encode(cps);
    }

    std::string alphabet() const { return text::utf8_encode(chars_); }

private:
    std::vector<char32_t> chars_;
    std::map<char32_t, int> ids_;
};

// Decoder prompt token sequences (surface forms "Question:" / "Answer:" by
// default, overridable per layout).
struct PromptLayout {
    std::vector<int> sep1_tokens;
    std::vector<int> sep2_tokens;

    static PromptLayout make(const Tokenizer& tok, const std::string& sep1 = "Question:",
                             const std::string& sep2 = "Answer:") {
        PromptLayout pl{tok.encode(sep1), tok.encode(sep2)};
        pl.validate();
        return pl;
    }

    void validate() const {
        if (sep1_tokens.empty() || sep2_tokens.empty()) {
            throw ConfigError("prompt separator token sequences must be nonempty");
        }
    }
};

struct GenerationConfig {
    int beam_width = 10;
    int max_new_tokens = 16;
    int eos_id = 0;
    bool length_normalize = false; // off by default; beam score is the plain log-prob sum
};

// Inference-facing decoder surface used by beam search and evaluation.
struct DecoderStepper {
    virtual ~DecoderStepper() = default;
    virtual int vocab_size() const = 0;
    virtual int embed_dim() const = 0;
    virtual nn::Mat<float> embed(int token) const = 0;
    // logits over the vocabulary for the token following `seq` (rows are
    // embeddings of the sequence so far)
    virtual std::vector<float> next_logits(const nn::Mat<float>& seq) const = 0;
};

// Trainable causal transformer LM over embedding sequences: learned token and
// position embeddings, pre-norm blocks, final layer norm, untied output head.
template <typename T>
struct ToyDecoder {
    int vocab;
    int d_e;
    int heads;
    int max_seq;
    nn::Parameter<T> tok_emb; // vocab x d_e
    nn::Parameter<T> pos_emb; // max_seq x d_e
    std::vector<TransformerBlock<T>> blocks;
    nn::Parameter<T> lnf_g, lnf_b;
    nn::Parameter<T> head_w; // vocab x d_e
    nn::Parameter<T> head_b; // 1 x vocab

    ToyDecoder(int vocab_size, int width, int n_blocks, int n_heads, int max_len, RandomSource& rng)
        : vocab(vocab_size), d_e(width), heads(n_heads), max_seq(max_len),
          tok_emb("decoder.tok_emb", TransformerBlock<T>::init(vocab_size, width, rng)),
          pos_emb("decoder.pos_emb", TransformerBlock<T>::init(max_len, width, rng)),
          lnf_g("decoder.lnf_g", nn::Mat<T>::full(1, width, T(1))),
          lnf_b("decoder.lnf_b", nn::Mat<T>(1, width)),
          head_w("decoder.head_w", TransformerBlock<T>::init(vocab_size, width, rng)),
          head_b("decoder.head_b", nn::Mat<T>(1, vocab_size)) {
        if (vocab_size <= 0 || n_blocks < 0) {
            throw ConfigError("toy decoder needs a positive vocab and non-negative block count");
        }
        for (int i = 0; i < n_blocks; ++i) {
            blocks.emplace_back(width, n_heads, true, "decoder.block" + std::to_string(i), rng);
        }
    }

    // logits at every position for an embedding sequence (S x d_e)
    nn::Ref<T> forward_node(nn::Graph<T>& g, const nn::Ref<T>& embs) {
        if (embs->val.cols != d_e) {
            throw ConfigError("decoder expects width " + std::to_string(d_e) + ", got " +
                              std::to_string(embs->val.cols));
        }
        if (embs->val.rows > max_seq) {
            throw ConfigError("sequence length " + std::to_string(embs->val.rows) + " exceeds max_seq " +
                              std::to_string(max_seq));
        }
        auto pos = g.slice_rows(g.param(pos_emb), 0, embs->val.rows);
        auto x = g.add(embs, pos);
        for (auto& blk : blocks) {
            x = blk.forward(g, x);
        }
        x = g.layer_norm(x, g.param(lnf_g), g.param(lnf_b), T(1e-5));
        return nn::linear(g, x, head_w, head_b);
    }

    nn::Mat<T> forward(const nn::Mat<T>& embs) {
        nn::Graph<T> g(false);
        return forward_node(g, g.leaf(embs))->val;
    }

    nn::Mat<T> embed_tokens(const std::vector<int>& ids) const {
        nn::Mat<T> out(static_cast<int>(ids.size()), d_e);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] < 0 || ids[i] >= vocab) {
                throw ValidationError("token id " + std::to_string(ids[i]) + " out of vocabulary");
            }
            for (int c = 0; c < d_e; ++c) {
                out(static_cast<int>(i), c) = tok_emb.value()(ids[i], c);
            }
        }
        return out;
    }

    std::vector<nn::Parameter<T>*> params() {
        std::vector<nn::Parameter<T>*> out = {&tok_emb, &pos_emb};
        for (auto& b : blocks) {
            for (auto* p : b.params()) {
                out.push_back(p);
            }
        }
        out.push_back(&lnf_g);
        out.push_back(&lnf_b);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }
};

class ToyDecoderStepper final : public DecoderStepper {
public:
    explicit ToyDecoderStepper(ToyDecoder<float>& dec) : dec_(&dec) {}

    int vocab_size() const override { return dec_->vocab; }
    int embed_dim() const override { return dec_->d_e; }

    nn::Mat<float> embed(int token) const override { return dec_->embed_tokens({token}); }

    std::vector<float> next_logits(const nn::Mat<float>& seq) const override {
        const nn::Mat<float> logits = dec_->forward(seq);
        std::vector<float> out(static_cast<std::size_t>(logits.cols));
        for (int c = 0; c < logits.cols; ++c) {
            out[static_cast<std::size_t>(c)] = logits(logits.rows - 1, c);
        }
        return out;
    }

private:
    ToyDecoder<float>* dec_;
};

// Decoder input sequence: [r_1..r_n, SEP1, q_1..q_m, SEP2], in that exact
// order. Pass series = nullptr (or an empty matrix) to drop the image series
// and m = 0 tokens to drop the question, the two input-ablation shapes.
template <typename T>
nn::Mat<T> assemble_input(const ImageSeries<T>* series, const std::vector<int>& q_tokens,
                          const PromptLayout& layout,
                          const std::function<nn::Mat<T>(const std::vector<int>&)>& embed) {
    layout.validate();
    const nn::Mat<T> sep1 = embed(layout.sep1_tokens);
    const nn::Mat<T> sep2 = embed(layout.sep2_tokens);
    const nn::Mat<T> q = embed(q_tokens);
    const int d_e = sep1.cols;
    if (series != nullptr && series->rows > 0 && series->cols != d_e) {
        throw ConfigError("image series width " + std::to_string(series->cols) +
                          " does not match token embedding width " + std::to_string(d_e));
    }
    const int n = series != nullptr ? series->rows : 0;
    nn::Mat<T> out(n + sep1.rows + q.rows + sep2.rows, d_e);
    int r = 0;
    const auto blit = [&](const nn::Mat<T>& part) {
        for (int i = 0; i < part.rows; ++i, ++r) {
            for (int c = 0; c < d_e; ++c) {
                out(r, c) = part(i, c);
            }
        }
    };
    if (series != nullptr && series->rows > 0) {
        blit(*series);
    }
    blit(sep1);
    blit(q);
    blit(sep2);
    return out;
}

template <typename T>
nn::Mat<T> assemble_input(const ImageSeries<T>* series, const std::vector<int>& q_tokens,
                          const PromptLayout& layout, const ToyDecoder<T>& dec) {
    return assemble_input<T>(series, q_tokens, layout,
                             [&dec](const std::vector<int>& ids) { return dec.embed_tokens(ids); });
}

// In-graph version used by the training path; same segment order.
template <typename T>
nn::Ref<T> assemble_input_node(nn::Graph<T>& g, const nn::Ref<T>* series, const std::vector<int>& q_tokens,
                               const PromptLayout& layout, ToyDecoder<T>& dec) {
    layout.validate();
    std::vector<nn::Ref<T>> parts;
    if (series != nullptr && (*series)->val.rows > 0) {
        parts.push_back(*series);
    }
    auto table = g.param(dec.tok_emb);
    parts.push_back(g.gather_rows(table, layout.sep1_tokens));
    if (!q_tokens.empty()) {
        parts.push_back(g.gather_rows(table, q_tokens));
    }
    parts.push_back(g.gather_rows(table, layout.sep2_tokens));
    return g.concat_rows(parts);
}

template <typename T>
struct LossItem {
    nn::Mat<T> prefix;        // assembled embedding sequence
    std::vector<int> answer;  // gold answer token ids, eos-terminated
};

// Builds the teacher-forced sequence [prefix, embed(answer[0..A-2])] and sums
// cross-entropy at the answer positions only. Returns (sum node, count).
template <typename T>
std::pair<nn::Ref<T>, long> answer_ce_sum_node(nn::Graph<T>& g, ToyDecoder<T>& dec, const nn::Ref<T>& prefix,
                                               const std::vector<int>& answer) {
    if (answer.empty()) {
        throw ValidationError("answer token sequence is empty");
    }
    const int p_len = prefix->val.rows;
    const int a_len = static_cast<int>(answer.size());
    nn::Ref<T> seq = prefix;
    if (a_len > 1) {
        std::vector<int> fed(answer.begin(), answer.end() - 1);
        seq = g.concat_rows({prefix, g.gather_rows(g.param(dec.tok_emb), fed)});
    }
    auto logits = dec.forward_node(g, seq);
    const int s_len = seq->val.rows;
    std::vector<int> targets(static_cast<std::size_t>(s_len), 0);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(s_len), 0);
    for (int j = 0; j < a_len; ++j) {
        targets[static_cast<std::size_t>(p_len - 1 + j)] = answer[static_cast<std::size_t>(j)];
        mask[static_cast<std::size_t>(p_len - 1 + j)] = 1;
    }
    return {g.masked_ce_sum(logits, std::move(targets), std::move(mask)), a_len};
}

// Mean cross-entropy over answer-token positions across the batch; prefix
// positions contribute nothing.
template <typename T>
T compute_loss(ToyDecoder<T>& dec, const std::vector<LossItem<T>>& batch) {
    if (batch.empty()) {
        throw ValidationError("empty loss batch");
    }
    nn::Graph<T> g(false);
    T total = 0;
    long count = 0;
    for (const auto& item : batch) {
        auto [sum_node, n] = answer_ce_sum_node(g, dec, g.leaf(item.prefix), item.answer);
        total += sum_node->val(0, 0);
        count += n;
    }
    return total / static_cast<T>(count);
}

// Beam search over the stepper. Score is the sum of token log-probabilities
// (including eos when a beam finishes with it); beams that reach
// max_new_tokens unterminated compete with their running score. Ties go to
// the lexicographically smaller token-id sequence.
std::vector<int> generate(const DecoderStepper& dec, const nn::Mat<float>& prefix, const GenerationConfig& cfg);

} // namespace gazevqa
