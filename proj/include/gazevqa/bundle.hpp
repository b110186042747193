#pragma once

#include "gazevqa/decoder.hpp"
#include "gazevqa/model.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace gazevqa {

// Where the adapter's conditioning series s comes from at run time.
enum class AdapterSource { Image, EstimatedRoi, GtRoi };

AdapterSource adapter_source_from_string(const std::string& s);
const char* to_string(AdapterSource s);

struct BundleConfig {
    std::string encoder = "toy";
    int d_img = 12;
    int series_len = 4; // n
    int d_e = 16;
    int mapping_layers = 2; // L
    int mapping_heads = 2;
    bool adapters = false;
    bool shared_projection = true; // one f for both I and the RoI branch
    std::string adapter_source = "gt";
    int decoder_blocks = 2;
    int decoder_heads = 2;
    int max_seq = 128;
    std::uint64_t init_seed = 1;
    std::string alphabet; // tokenizer charset; derives vocab
    std::string sep1 = "Question:";
    std::string sep2 = "Answer:";

    void validate() const;
    nlohmann::json to_json() const;
    static BundleConfig from_json(const nlohmann::json& j);
    // keys present in j override the base config
    static BundleConfig from_json(const nlohmann::json& j, const BundleConfig& base);
};

// Encoder projection + mapping network + optional adapters + decoder, with
// the regime-dependent trainable partition over three parameter groups.
template <typename T>
struct ModelBundle {
    BundleConfig cfg;
    std::unique_ptr<EncoderBackbone> encoder;
    Projection<T> proj;                        // f
    std::unique_ptr<Projection<T>> proj_roi;   // separate f for s when not shared
    MappingNetwork<T> mapping;
    ToyDecoder<T> decoder;

    explicit ModelBundle(const BundleConfig& c, int vocab_size)
        : cfg(c), encoder(make_encoder(c.encoder, c.d_img)), proj(make_proj(c, "proj", c.init_seed)),
          mapping(make_mapping(c)), decoder(make_decoder(c, vocab_size)) {
        if (!c.shared_projection) {
            proj_roi = std::make_unique<Projection<T>>(make_proj(c, "proj_roi", c.init_seed + 3));
        }
    }

    Projection<T>& roi_projection() { return cfg.shared_projection ? proj : *proj_roi; }

    std::vector<nn::Parameter<T>*> group_decoder() { return decoder.params(); }

    std::vector<nn::Parameter<T>*> group_mapping() {
        std::vector<nn::Parameter<T>*> out = proj.params();
        if (proj_roi) {
            for (auto* p : proj_roi->params()) {
                out.push_back(p);
            }
        }
        for (auto* p : mapping.block_params()) {
            out.push_back(p);
        }
        return out;
    }

    std::vector<nn::Parameter<T>*> group_adapters() { return mapping.adapter_params(); }

    std::vector<nn::Parameter<T>*> all_params() {
        auto out = group_decoder();
        for (auto* p : group_mapping()) {
            out.push_back(p);
        }
        for (auto* p : group_adapters()) {
            out.push_back(p);
        }
        return out;
    }

private:
    // each sub-module draws from its own deterministic stream
    static Projection<T> make_proj(const BundleConfig& c, const std::string& name, std::uint64_t seed) {
        RandomSource rng(seed);
        return Projection<T>(c.d_img, c.series_len, c.d_e, name, rng);
    }
    static MappingNetwork<T> make_mapping(const BundleConfig& c) {
        RandomSource rng(c.init_seed + 1);
        return MappingNetwork<T>(
            MappingConfig{c.mapping_layers, c.series_len, c.d_e, c.mapping_heads, c.adapters}, rng);
    }
    static ToyDecoder<T> make_decoder(const BundleConfig& c, int vocab_size) {
        RandomSource rng(c.init_seed + 2);
        return ToyDecoder<T>(vocab_size, c.d_e, c.decoder_blocks, c.decoder_heads, c.max_seq, rng);
    }
};

struct ParamCounts {
    long long decoder = 0;
    long long mapping = 0; // projection(s) + mapping blocks
    long long adapters = 0;

    long long total() const { return decoder + mapping + adapters; }
};

template <typename T>
ParamCounts count_parameters(ModelBundle<T>& bundle) {
    const auto sum = [](const std::vector<nn::Parameter<T>*>& ps) {
        long long n = 0;
        for (const auto* p : ps) {
            n += static_cast<long long>(p->node->val.size());
        }
        return n;
    };
    ParamCounts c;
    c.decoder = sum(bundle.group_decoder());
    c.mapping = sum(bundle.group_mapping());
    c.adapters = sum(bundle.group_adapters());
    return c;
}

} // namespace gazevqa
