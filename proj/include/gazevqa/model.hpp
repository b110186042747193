#pragma once

#include "gazevqa/image.hpp"
#include "gazevqa/nn.hpp"
#include "gazevqa/rng.hpp"

#include <memory>
#include <type_traits>
#include <optional>
#include <string>
#include <vector>

namespace gazevqa {

// Frozen image feature extractor. Real CLIP-style backbones plug in behind
// this interface; the toy backbone below keeps desk-scale runs self-contained.
struct EncoderBackbone {
    virtual ~EncoderBackbone() = default;
    virtual int embed_dim() const = 0;
    virtual std::vector<double> apply(const Image& img) const = 0;
};

// Deterministic pooled-pixel-statistics embedding: per-channel global
// mean/max plus 2x2-cell channel means, mixed to embed_dim by a fixed
// seeded projection. No pretrained weights involved.
class ToyEncoder final : public EncoderBackbone {
public:
    explicit ToyEncoder(int embed_dim);

    int embed_dim() const override { return d_; }
    std::vector<double> apply(const Image& img) const override;

    static constexpr int kStatCount = 3 * 2 + 3 * 4; // global mean/max + cell means, per channel

private:
    int d_;
    std::vector<double> mix_; // d_ x kStatCount, fixed at construction
};

std::unique_ptr<EncoderBackbone> make_encoder(const std::string& kind, int embed_dim);

struct MappingConfig {
    int layers = 2;     // transformer blocks (0 allowed as a degenerate passthrough)
    int series_len = 4; // n
    int d_e = 16;
    int heads = 2;
    bool adapters_enabled = false;

    void validate() const {
        if (layers < 0) {
            throw ConfigError("mapping layers must be >= 0");
        }
        if (series_len < 0) {
            throw ConfigError("series length must be >= 0");
        }
        if (d_e <= 0 || heads <= 0 || d_e % heads != 0) {
            throw ConfigError("d_e must be positive and divisible by heads");
        }
    }
};

// The length-n sequence of decoder-width vectors standing in for an image.
template <typename T>
using ImageSeries = nn::Mat<T>;

// Per-layer affine conditioning pair (g, h). Identity-initialized so a fresh
// adapter model computes exactly the baseline function.
template <typename T>
struct Adapter {
    nn::Parameter<T> g_w;
    nn::Parameter<T> g_b;
    nn::Parameter<T> h_w;
    nn::Parameter<T> h_b;

    Adapter(int d_e, const std::string& prefix)
        : g_w(prefix + ".g_w", nn::Mat<T>(d_e, d_e)),
          g_b(prefix + ".g_b", nn::Mat<T>::full(1, d_e, T(1))),
          h_w(prefix + ".h_w", nn::Mat<T>(d_e, d_e)),
          h_b(prefix + ".h_b", nn::Mat<T>(1, d_e)) {}

    std::vector<nn::Parameter<T>*> params() { return {&g_w, &g_b, &h_w, &h_b}; }
};

// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
// MLP expansion ratio 4, GELU activation, no dropout at desk scale.
template <typename T>
struct TransformerBlock {
    int d_e;
    int heads;
    bool causal;
    nn::Parameter<T> ln1_g, ln1_b;
    nn::Parameter<T> wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Parameter<T> ln2_g, ln2_b;
    nn::Parameter<T> fc1_w, fc1_b, fc2_w, fc2_b;

    TransformerBlock(int d, int n_heads, bool causal_mask, const std::string& prefix, RandomSource& rng)
        : d_e(d), heads(n_heads), causal(causal_mask),
          ln1_g(prefix + ".ln1_g", nn::Mat<T>::full(1, d, T(1))),
          ln1_b(prefix + ".ln1_b", nn::Mat<T>(1, d)),
          wq(prefix + ".wq", init(d, d, rng)), bq(prefix + ".bq", nn::Mat<T>(1, d)),
          wk(prefix + ".wk", init(d, d, rng)), bk(prefix + ".bk", nn::Mat<T>(1, d)),
          wv(prefix + ".wv", init(d, d, rng)), bv(prefix + ".bv", nn::Mat<T>(1, d)),
          wo(prefix + ".wo", init(d, d, rng)), bo(prefix + ".bo", nn::Mat<T>(1, d)),
          ln2_g(prefix + ".ln2_g", nn::Mat<T>::full(1, d, T(1))),
          ln2_b(prefix + ".ln2_b", nn::Mat<T>(1, d)),
          fc1_w(prefix + ".fc1_w", init(4 * d, d, rng)), fc1_b(prefix + ".fc1_b", nn::Mat<T>(1, 4 * d)),
          fc2_w(prefix + ".fc2_w", init(d, 4 * d, rng)), fc2_b(prefix + ".fc2_b", nn::Mat<T>(1, d)) {
        if (d % n_heads != 0) {
            throw ConfigError("embedding width must be divisible by head count");
        }
    }

    static nn::Mat<T> init(int rows, int cols, RandomSource& rng) {
        nn::Mat<T> m(rows, cols);
        for (auto& x : m.v) {
            x = static_cast<T>(rng.normal(0.0, 0.02));
        }
        return m;
    }

    nn::Ref<T> forward(nn::Graph<T>& g, const nn::Ref<T>& x) {
        const T eps = T(1e-5);
        auto h = g.layer_norm(x, g.param(ln1_g), g.param(ln1_b), eps);
        auto q = nn::linear(g, h, wq, bq);
        auto k = nn::linear(g, h, wk, bk);
        auto v = nn::linear(g, h, wv, bv);
        const int dh = d_e / heads;
        const T scl = T(1) / std::sqrt(static_cast<T>(dh));
        std::vector<nn::Ref<T>> ctx;
        ctx.reserve(heads);
        for (int hd = 0; hd < heads; ++hd) {
            auto qh = g.slice_cols(q, hd * dh, dh);
            auto kh = g.slice_cols(k, hd * dh, dh);
            auto vh = g.slice_cols(v, hd * dh, dh);
            auto scores = g.scale(g.matmul_nt(qh, kh), scl);
            auto attn = g.softmax_rows(scores, causal);
            ctx.push_back(g.matmul(attn, vh));
        }
        auto merged = heads == 1 ? ctx.front() : g.concat_cols(ctx);
        auto attn_out = nn::linear(g, merged, wo, bo);
        auto x1 = g.add(x, attn_out);

        auto h2 = g.layer_norm(x1, g.param(ln2_g), g.param(ln2_b), eps);
        auto m1 = g.gelu(nn::linear(g, h2, fc1_w, fc1_b));
        auto mlp_out = nn::linear(g, m1, fc2_w, fc2_b);
        return g.add(x1, mlp_out);
    }

    std::vector<nn::Parameter<T>*> params() {
        return {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo,
                &ln2_g, &ln2_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b};
    }
};

// Single linear layer mapping a backbone embedding to an n x d_e series.
template <typename T>
struct Projection {
    int d_in;
    int series_len;
    int d_e;
    nn::Parameter<T> w; // (n * d_e) x d_in
    nn::Parameter<T> b; // 1 x (n * d_e)

    Projection(int input_dim, int n, int width, const std::string& prefix, RandomSource& rng)
        : d_in(input_dim), series_len(n), d_e(width),
          w(prefix + ".w", TransformerBlock<T>::init(n * width, input_dim, rng)),
          b(prefix + ".b", nn::Mat<T>(1, n * width)) {}

    std::vector<nn::Parameter<T>*> params() { return {&w, &b}; }

    nn::Ref<T> forward(nn::Graph<T>& g, const nn::Ref<T>& feat) {
        if (feat->val.rows != 1 || feat->val.cols != d_in) {
            throw ConfigError("projection expects a 1x" + std::to_string(d_in) + " feature, got " +
                              std::to_string(feat->val.rows) + "x" + std::to_string(feat->val.cols));
        }
        return g.reshape(nn::linear(g, feat, w, b), series_len, d_e);
    }
};

// Transformer stack converting the projected image series p into the series
// r consumed by the decoder, with optional per-layer adapters conditioned on
// the RoI series s.
template <typename T>
struct MappingNetwork {
    MappingConfig cfg;
    std::vector<TransformerBlock<T>> blocks;
    std::vector<Adapter<T>> adapters;

    MappingNetwork(const MappingConfig& c, RandomSource& rng) : cfg(c) {
        cfg.validate();
        blocks.reserve(cfg.layers);
        adapters.reserve(cfg.adapters_enabled ? cfg.layers : 0);
        for (int l = 0; l < cfg.layers; ++l) {
            blocks.emplace_back(cfg.d_e, cfg.heads, false, "mapping.block" + std::to_string(l), rng);
            if (cfg.adapters_enabled) {
                adapters.emplace_back(cfg.d_e, "adapter" + std::to_string(l));
            }
        }
    }

    std::vector<nn::Parameter<T>*> block_params() {
        std::vector<nn::Parameter<T>*> out;
        for (auto& b : blocks) {
            for (auto* p : b.params()) {
                out.push_back(p);
            }
        }
        return out;
    }

    std::vector<nn::Parameter<T>*> adapter_params() {
        std::vector<nn::Parameter<T>*> out;
        for (auto& a : adapters) {
            for (auto* p : a.params()) {
                out.push_back(p);
            }
        }
        return out;
    }
};

// out = g_l(s) .* p + h_l(s), applied independently at every series position.
template <typename T>
nn::Ref<T> adapter_transform_node(nn::Graph<T>& g, const nn::Ref<T>& p, const nn::Ref<T>& s, Adapter<T>& a) {
    if (!p->val.same_shape(s->val)) {
        throw ConfigError("adapter_transform: p and s must share (n, d_e)");
    }
    auto scale_term = nn::linear(g, s, a.g_w, a.g_b);
    auto shift_term = nn::linear(g, s, a.h_w, a.h_b);
    return g.add(g.mul(scale_term, p), shift_term);
}

template <typename T>
ImageSeries<T> adapter_transform(const ImageSeries<T>& p, const ImageSeries<T>& s, Adapter<T>& a) {
    nn::Graph<T> g(false);
    return adapter_transform_node(g, g.leaf(p), g.leaf(s), a)->val;
}

// Convenience over a layer index into a mapping network's adapter stack.
template <typename T>
ImageSeries<T> adapter_transform(const ImageSeries<T>& p, const ImageSeries<T>& s, int layer,
                                 MappingNetwork<T>& net) {
    if (layer < 0 || layer >= static_cast<int>(net.adapters.size())) {
        throw ConfigError("adapter layer index out of range");
    }
    return adapter_transform(p, s, net.adapters[layer]);
}

// Each block's input is first passed through that layer's adapter when the
// RoI series is present; the first block sees p itself as the recurrence
// seed. Without adapters this is the plain baseline stack.
template <typename T>
nn::Ref<T> mapping_forward_node(nn::Graph<T>& g, const nn::Ref<T>& p, std::type_identity_t<const nn::Ref<T>*> s,
                                MappingNetwork<T>& net) {
    if (s != nullptr && !net.cfg.adapters_enabled) {
        throw ConfigError("RoI series provided but adapters are disabled");
    }
    if (s == nullptr && net.cfg.adapters_enabled) {
        throw ConfigError("adapters enabled but no RoI series provided");
    }
    if (p->val.rows != net.cfg.series_len || p->val.cols != net.cfg.d_e) {
        throw ConfigError("image series shape does not match mapping config");
    }
    auto x = p;
    for (int l = 0; l < net.cfg.layers; ++l) {
        if (s != nullptr) {
            x = adapter_transform_node(g, x, *s, net.adapters[l]);
        }
        x = net.blocks[l].forward(g, x);
    }
    return x;
}

template <typename T>
ImageSeries<T> mapping_forward(const ImageSeries<T>& p, std::type_identity_t<const ImageSeries<T>*> s,
                               MappingNetwork<T>& net) {
    nn::Graph<T> g(false);
    auto pn = g.leaf(p);
    if (s != nullptr) {
        auto sn = g.leaf(*s);
        return mapping_forward_node(g, pn, &sn, net)->val;
    }
    return mapping_forward_node(g, pn, nullptr, net)->val;
}

// backbone embedding through the projection, reshaped row-major to n x d_e.
template <typename T>
ImageSeries<T> encode_series(const Image& img, const EncoderBackbone& backbone, Projection<T>& proj) {
    if (backbone.embed_dim() != proj.d_in) {
        throw ConfigError("backbone embedding width " + std::to_string(backbone.embed_dim()) +
                          " does not match projection input " + std::to_string(proj.d_in));
    }
    const std::vector<double> feat = backbone.apply(img);
    nn::Mat<T> fm(1, proj.d_in);
    for (int i = 0; i < proj.d_in; ++i) {
        fm(0, i) = static_cast<T>(feat[i]);
    }
    nn::Graph<T> g(false);
    return proj.forward(g, g.leaf(std::move(fm)))->val;
}

long long adapter_param_count(int layers, int d_e);

} // namespace gazevqa
