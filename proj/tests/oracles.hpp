#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. These deliberately share no code with the library paths they check.

#include "gazevqa/decoder.hpp"
#include "gazevqa/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

namespace oracles {

// Connected-component reference: iterative min-label propagation to fixpoint,
// then max area with the first-pixel tie rule.
inline gazevqa::BoundingBox roi(const gazevqa::BinaryMask& mask, int image_w, int image_h) {
    const gazevqa::BinaryMask m = gazevqa::rescale_nearest(mask, image_w, image_h);
    const int w = m.width;
    const int h = m.height;
    std::vector<long> label(static_cast<std::size_t>(w) * h, -1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (m.at(x, y)) {
                label[static_cast<std::size_t>(y) * w + x] = static_cast<long>(y) * w + x;
            }
        }
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                if (label[i] < 0) {
                    continue;
                }
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
                            continue;
                        }
                        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
                        if (label[j] >= 0 && label[j] < label[i]) {
                            label[i] = label[j];
                            changed = true;
                        }
                    }
                }
            }
        }
    }
    struct Comp {
        long area = 0;
        long first = std::numeric_limits<long>::max();
        int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;
    };
    std::map<long, Comp> comps;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const long l = label[static_cast<std::size_t>(y) * w + x];
            if (l < 0) {
                continue;
            }
            Comp& c = comps[l];
            ++c.area;
            c.first = std::min(c.first, static_cast<long>(y) * w + x);
            c.min_x = std::min(c.min_x, x);
            c.min_y = std::min(c.min_y, y);
            c.max_x = std::max(c.max_x, x);
            c.max_y = std::max(c.max_y, y);
        }
    }
    if (comps.empty()) {
        return gazevqa::BoundingBox{0, 0, image_w, image_h};
    }
    const Comp* best = nullptr;
    for (const auto& [l, c] : comps) {
        if (best == nullptr || c.area > best->area || (c.area == best->area && c.first < best->first)) {
            best = &c;
        }
    }
    return gazevqa::BoundingBox{best->min_x, best->min_y, best->max_x - best->min_x + 1,
                                best->max_y - best->min_y + 1};
}

// Markov next-token table behind the stepper interface: logits depend only on
// the last emitted token (a start row serves the empty history). Embeddings
// are the raw token id; the prefix is a single -1 marker row.
class TableDecoder final : public gazevqa::DecoderStepper {
public:
    TableDecoder(int vocab, std::vector<std::vector<float>> rows) : vocab_(vocab), rows_(std::move(rows)) {}

    static TableDecoder random(int vocab, gazevqa::RandomSource& rng) {
        std::vector<std::vector<float>> rows(static_cast<std::size_t>(vocab) + 1,
                                             std::vector<float>(static_cast<std::size_t>(vocab)));
        for (auto& row : rows) {
            for (auto& x : row) {
                x = static_cast<float>(rng.uniform(-2.5, 2.5));
            }
        }
        return TableDecoder(vocab, std::move(rows));
    }

    int vocab_size() const override { return vocab_; }
    int embed_dim() const override { return 1; }

    gazevqa::nn::Mat<float> embed(int token) const override {
        gazevqa::nn::Mat<float> m(1, 1);
        m(0, 0) = static_cast<float>(token);
        return m;
    }

    std::vector<float> next_logits(const gazevqa::nn::Mat<float>& seq) const override {
        const float last = seq(seq.rows - 1, 0);
        const int row = last < 0 ? 0 : 1 + static_cast<int>(last);
        return rows_[static_cast<std::size_t>(row)];
    }

    static gazevqa::nn::Mat<float> start_prefix() {
        gazevqa::nn::Mat<float> m(1, 1);
        m(0, 0) = -1.0f;
        return m;
    }

private:
    int vocab_;
    std::vector<std::vector<float>> rows_;
};

inline std::vector<double> log_softmax(const std::vector<float>& logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (const float x : logits) {
        mx = std::max(mx, static_cast<double>(x));
    }
    double sum = 0.0;
    for (const float x : logits) {
        sum += std::exp(static_cast<double>(x) - mx);
    }
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = static_cast<double>(logits[i]) - mx - std::log(sum);
    }
    return out;
}

namespace detail {

struct Best {
    std::vector<int> tokens;
    double score = -std::numeric_limits<double>::infinity();
    bool any = false;

    void consider(const std::vector<int>& t, double s) {
        if (!any || s > score || (s == score && t < tokens)) {
            tokens = t;
            score = s;
            any = true;
        }
    }
};

inline void dfs(const gazevqa::DecoderStepper& dec, const gazevqa::nn::Mat<float>& prefix,
                const gazevqa::GenerationConfig& cfg, std::vector<int>& tokens, double score, int slots_used,
                Best& best) {
    if (slots_used == cfg.max_new_tokens) {
        best.consider(tokens, score);
        return;
    }
    gazevqa::nn::Mat<float> seq(prefix.rows + static_cast<int>(tokens.size()), prefix.cols);
    std::copy(prefix.v.begin(), prefix.v.end(), seq.v.begin());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const gazevqa::nn::Mat<float> e = dec.embed(tokens[i]);
        for (int c = 0; c < prefix.cols; ++c) {
            seq(prefix.rows + static_cast<int>(i), c) = e(0, c);
        }
    }
    const auto logp = log_softmax(dec.next_logits(seq));
    for (int t = 0; t < dec.vocab_size(); ++t) {
        if (t == cfg.eos_id) {
            best.consider(tokens, score + logp[static_cast<std::size_t>(t)]);
        } else {
            tokens.push_back(t);
            dfs(dec, prefix, cfg, tokens, score + logp[static_cast<std::size_t>(t)], slots_used + 1, best);
            tokens.pop_back();
        }
    }
}

} // namespace detail

// Exhaustive maximum-likelihood decoding over every sequence reachable in
// max_new_tokens slots, with the library's scoring and tie rule.
inline std::vector<int> generate(const gazevqa::DecoderStepper& dec, const gazevqa::nn::Mat<float>& prefix,
                                 const gazevqa::GenerationConfig& cfg) {
    detail::Best best;
    std::vector<int> tokens;
    detail::dfs(dec, prefix, cfg, tokens, 0.0, 0, best);
    return best.tokens;
}

} // namespace oracles
