#include "gazevqa/bundle.hpp"

namespace gazevqa {

AdapterSource adapter_source_from_string(const std::string& s) {
    if (s == "image") {
        return AdapterSource::Image;
    }
    if (s == "estimated") {
        return AdapterSource::EstimatedRoi;
    }
    if (s == "gt") {
        return AdapterSource::GtRoi;
    }
    throw ConfigError("unknown adapter source '" + s + "' (expected image|estimated|gt)");
}

const char* to_string(AdapterSource s) {
    switch (s) {
    case AdapterSource::Image: return "image";
    case AdapterSource::EstimatedRoi: return "estimated";
    case AdapterSource::GtRoi: return "gt";
    }
    return "?";
}

void BundleConfig::validate() const {
    if (d_img <= 0 || series_len < 0 || d_e <= 0 || max_seq <= 0) {
        throw ConfigError("bundle dimensions must be positive");
    }
    if (mapping_layers < 0 || decoder_blocks < 0) {
        throw ConfigError("layer counts must be non-negative");
    }
    if (d_e % mapping_heads != 0 || d_e % decoder_heads != 0) {
        throw ConfigError("d_e must be divisible by the head counts");
    }
    adapter_source_from_string(adapter_source);
    if (alphabet.empty()) {
        throw ConfigError("bundle config is missing the tokenizer alphabet");
    }
    if (sep1.empty() || sep2.empty()) {
        throw ConfigError("prompt surface forms must be nonempty");
    }
}

nlohmann::json BundleConfig::to_json() const {
    return nlohmann::json{{"encoder", encoder},
                          {"d_img", d_img},
                          {"series_len", series_len},
                          {"d_e", d_e},
                          {"mapping_layers", mapping_layers},
                          {"mapping_heads", mapping_heads},
                          {"adapters", adapters},
                          {"shared_projection", shared_projection},
                          {"adapter_source", adapter_source},
                          {"decoder_blocks", decoder_blocks},
                          {"decoder_heads", decoder_heads},
                          {"max_seq", max_seq},
                          {"init_seed", init_seed},
                          {"alphabet", alphabet},
                          {"sep1", sep1},
                          {"sep2", sep2}};
}

BundleConfig BundleConfig::from_json(const nlohmann::json& j) {
    return from_json(j, BundleConfig{});
}

BundleConfig BundleConfig::from_json(const nlohmann::json& j, const BundleConfig& base) {
    BundleConfig c = base;
    c.encoder = j.value("encoder", c.encoder);
    c.d_img = j.value("d_img", c.d_img);
    c.series_len = j.value("series_len", c.series_len);
    c.d_e = j.value("d_e", c.d_e);
    c.mapping_layers = j.value("mapping_layers", c.mapping_layers);
    c.mapping_heads = j.value("mapping_heads", c.mapping_heads);
    c.adapters = j.value("adapters", c.adapters);
    c.shared_projection = j.value("shared_projection", c.shared_projection);
    c.adapter_source = j.value("adapter_source", c.adapter_source);
    c.decoder_blocks = j.value("decoder_blocks", c.decoder_blocks);
    c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
    c.max_seq = j.value("max_seq", c.max_seq);
    c.init_seed = j.value("init_seed", c.init_seed);
    c.alphabet = j.value("alphabet", c.alphabet);
    c.sep1 = j.value("sep1", c.sep1);
    c.sep2 = j.value("sep2", c.sep2);
    return c;
}

} // namespace gazevqa
