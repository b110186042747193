#include "gazevqa/model.hpp"

#include <algorithm>

namespace gazevqa {

ToyEncoder::ToyEncoder(int embed_dim) : d_(embed_dim) {
    if (embed_dim <= 0) {
        throw ConfigError("encoder embedding width must be positive");
    }
    // fixed mixing matrix; constant seed keeps the backbone deterministic
    // across runs and independent of any trained state
    RandomSource rng(0xC0FFEEull);
    mix_.resize(static_cast<std::size_t>(d_) * kStatCount);
    for (auto& x : mix_) {
        x = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(kStatCount)));
    }
}

std::vector<double> ToyEncoder::apply(const Image& img) const {
    if (img.width <= 0 || img.height <= 0) {
        throw ValidationError("encoder input image is empty");
    }
    double stats[kStatCount] = {};
    // global mean and max per channel
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        double mx = 0.0;
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const double v = img.at(x, y, c) / 255.0;
                sum += v;
                mx = std::max(mx, v);
            }
        }
        stats[c * 2] = sum / (static_cast<double>(img.width) * img.height);
        stats[c * 2 + 1] = mx;
    }
    // 2x2 cell means per channel
    const int half_w = std::max(1, img.width / 2);
    const int half_h = std::max(1, img.height / 2);
    for (int cy = 0; cy < 2; ++cy) {
        for (int cx = 0; cx < 2; ++cx) {
            const int x0 = cx * half_w;
            const int y0 = cy * half_h;
            const int x1 = cx == 1 ? img.width : half_w;
            const int y1 = cy == 1 ? img.height : half_h;
            for (int c = 0; c < 3; ++c) {
                double sum = 0.0;
                long count = 0;
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) {
                        sum += img.at(x, y, c) / 255.0;
                        ++count;
                    }
                }
                stats[6 + (cy * 2 + cx) * 3 + c] = count > 0 ? sum / static_cast<double>(count) : 0.0;
            }
        }
    }
    std::vector<double> out(static_cast<std::size_t>(d_));
    for (int i = 0; i < d_; ++i) {
        double acc = 0.0;
        for (int k = 0; k < kStatCount; ++k) {
            acc += mix_[static_cast<std::size_t>(i) * kStatCount + k] * stats[k];
        }
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

std::unique_ptr<EncoderBackbone> make_encoder(const std::string& kind, int embed_dim) {
    if (kind == "toy") {
        return std::make_unique<ToyEncoder>(embed_dim);
    }
    throw ConfigError("unknown encoder backbone '" + kind + "'");
}

long long adapter_param_count(int layers, int d_e) {
    return 2LL * layers * (static_cast<long long>(d_e) * d_e + d_e);
}

} // namespace gazevqa
