#include "gazevqa/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace gazevqa {

namespace {

struct Beam {
    std::vector<int> tokens; // emitted tokens, eos excluded
    double score = 0.0;
    bool finished = false;
};

// score first, then lexicographically smaller token sequence
bool beam_better(const Beam& a, const Beam& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.tokens < b.tokens;
}

std::vector<double> log_softmax(const std::vector<float>& logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (const float x : logits) {
        mx = std::max(mx, static_cast<double>(x));
    }
    double sum = 0.0;
    for (const float x : logits) {
        sum += std::exp(static_cast<double>(x) - mx);
    }
    const double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = static_cast<double>(logits[i]) - lse;
    }
    return out;
}

nn::Mat<float> with_tokens(const DecoderStepper& dec, const nn::Mat<float>& prefix,
                           const std::vector<int>& tokens) {
    nn::Mat<float> seq(prefix.rows + static_cast<int>(tokens.size()), prefix.cols);
    std::copy(prefix.v.begin(), prefix.v.end(), seq.v.begin());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const nn::Mat<float> e = dec.embed(tokens[i]);
        for (int c = 0; c < prefix.cols; ++c) {
            seq(prefix.rows + static_cast<int>(i), c) = e(0, c);
        }
    }
    return seq;
}

} // namespace

std::vector<int> generate(const DecoderStepper& dec, const nn::Mat<float>& prefix, const GenerationConfig& cfg) {
    if (cfg.beam_width < 1) {
        throw ConfigError("beam width must be >= 1");
    }
    if (cfg.max_new_tokens < 1) {
        throw ConfigError("max_new_tokens must be >= 1");
    }
    if (prefix.rows < 1) {
        throw ValidationError("generation prefix is empty");
    }
    const int vocab = dec.vocab_size();
    if (cfg.eos_id < 0 || cfg.eos_id >= vocab) {
        throw ConfigError("eos id out of vocabulary");
    }

    std::vector<Beam> active{Beam{}};
    std::vector<Beam> finished;
    for (int step = 0; step < cfg.max_new_tokens && !active.empty(); ++step) {
        std::vector<Beam> candidates;
        candidates.reserve(active.size() * static_cast<std::size_t>(vocab));
        for (const Beam& b : active) {
            const auto logits = dec.next_logits(with_tokens(dec, prefix, b.tokens));
            const auto logp = log_softmax(logits);
            for (int t = 0; t < vocab; ++t) {
                Beam nb = b;
                nb.score += logp[static_cast<std::size_t>(t)];
                if (t == cfg.eos_id) {
                    nb.finished = true;
                } else {
                    nb.tokens.push_back(t);
                }
                candidates.push_back(std::move(nb));
            }
        }
        // classic selection: the top beam_width candidates survive the step;
        // the ones ending in eos retire to the finished pool. beam_width = 1
        // therefore reduces exactly to greedy argmax decoding.
        std::sort(candidates.begin(), candidates.end(), beam_better);
        active.clear();
        int taken = 0;
        for (const Beam& c : candidates) {
            if (taken >= cfg.beam_width) {
                break;
            }
            ++taken;
            if (c.finished) {
                finished.push_back(c);
            } else {
                active.push_back(c);
            }
        }
    }
    // beams that ran out of budget compete unterminated
    for (Beam& b : active) {
        finished.push_back(std::move(b));
    }

    const auto rank = [&cfg](const Beam& a, const Beam& b) {
        const double sa = cfg.length_normalize && !a.tokens.empty() ? a.score / static_cast<double>(a.tokens.size())
                                                                    : a.score;
        const double sb = cfg.length_normalize && !b.tokens.empty() ? b.score / static_cast<double>(b.tokens.size())
                                                                    : b.score;
        if (sa != sb) {
            return sa > sb;
        }
        return a.tokens < b.tokens;
    };
    return std::min_element(finished.begin(), finished.end(),
                            [&rank](const Beam& a, const Beam& b) { return rank(a, b); })
        ->tokens;
}

} // namespace gazevqa
