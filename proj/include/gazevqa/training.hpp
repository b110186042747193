#pragma once

#include "gazevqa/bundle.hpp"
#include "gazevqa/dataset.hpp"
#include "gazevqa/heatmap.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gazevqa {

// Which parameter groups train: everything, mapping side only (decoder
// frozen), or the adapters alone.
enum class Regime { Full, Mapping, AdapterOnly };

Regime regime_from_string(const std::string& s);
const char* to_string(Regime r);

struct TrainConfig {
    int batch_size = 32;
    int epochs = 10;
    double lr = 1e-4; // fine-tuning default; pre-training uses 2e-5
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1 || epochs < 1 || lr <= 0 || beta1 <= 0 || beta2 <= 0 || weight_decay < 0 || eps <= 0) {
            throw ConfigError("training hyperparameters must be positive");
        }
    }
};

inline constexpr double kLrPretrain = 2e-5;
inline constexpr double kLrFinetune = 1e-4;

template <typename T>
struct ParamPartition {
    std::vector<nn::Parameter<T>*> trainable;
    std::vector<nn::Parameter<T>*> frozen;
};

// Disjoint, exhaustive partition of the bundle's parameters per regime.
template <typename T>
ParamPartition<T> select_trainable(ModelBundle<T>& bundle, Regime regime) {
    ParamPartition<T> part;
    const auto push = [](std::vector<nn::Parameter<T>*>& dst, const std::vector<nn::Parameter<T>*>& src) {
        dst.insert(dst.end(), src.begin(), src.end());
    };
    switch (regime) {
    case Regime::Full:
        push(part.trainable, bundle.group_decoder());
        push(part.trainable, bundle.group_mapping());
        push(part.trainable, bundle.group_adapters());
        break;
    case Regime::Mapping:
        push(part.trainable, bundle.group_mapping());
        push(part.trainable, bundle.group_adapters());
        push(part.frozen, bundle.group_decoder());
        break;
    case Regime::AdapterOnly:
        if (bundle.group_adapters().empty()) {
            throw ConfigError("adapter-only training requires a bundle with adapters");
        }
        push(part.trainable, bundle.group_adapters());
        push(part.frozen, bundle.group_decoder());
        push(part.frozen, bundle.group_mapping());
        break;
    }
    return part;
}

template <typename T>
long long count_trainable(ModelBundle<T>& bundle, Regime regime) {
    auto part = select_trainable(bundle, regime);
    long long n = 0;
    for (const auto* p : part.trainable) {
        n += static_cast<long long>(p->node->val.size());
    }
    return n;
}

// Precomputed per-sample features: the frozen backbone runs once up front.
template <typename T>
struct TrainItem {
    std::vector<T> image_feat;                // d_img
    std::optional<std::vector<T>> roi_feat;   // present iff the bundle has adapters
    std::vector<int> question_tokens;
    std::vector<int> answer_tokens;           // eos appended
};

struct TrainResult {
    std::vector<double> loss_trace; // one entry per optimizer step
    long steps = 0;
};

namespace detail {

// forward for one item; returns (ce-sum node, answer token count)
template <typename T>
std::pair<nn::Ref<T>, long> item_loss_node(nn::Graph<T>& g, ModelBundle<T>& bundle, const PromptLayout& layout,
                                           const TrainItem<T>& item) {
    nn::Mat<T> feat(1, bundle.cfg.d_img);
    std::copy(item.image_feat.begin(), item.image_feat.end(), feat.v.begin());
    auto p = bundle.proj.forward(g, g.leaf(std::move(feat)));

    nn::Ref<T> r;
    if (bundle.cfg.adapters) {
        if (!item.roi_feat) {
            throw ConfigError("adapter bundle requires RoI features for every item");
        }
        nn::Mat<T> rfeat(1, bundle.cfg.d_img);
        std::copy(item.roi_feat->begin(), item.roi_feat->end(), rfeat.v.begin());
        auto s = bundle.roi_projection().forward(g, g.leaf(std::move(rfeat)));
        r = mapping_forward_node(g, p, &s, bundle.mapping);
    } else {
        r = mapping_forward_node(g, p, nullptr, bundle.mapping);
    }
    auto prefix = [&] {
        std::vector<nn::Ref<T>> parts;
        parts.push_back(r);
        auto table = g.param(bundle.decoder.tok_emb);
        parts.push_back(g.gather_rows(table, layout.sep1_tokens));
        if (!item.question_tokens.empty()) {
            parts.push_back(g.gather_rows(table, item.question_tokens));
        }
        parts.push_back(g.gather_rows(table, layout.sep2_tokens));
        return g.concat_rows(parts);
    }();
    return answer_ce_sum_node(g, bundle.decoder, prefix, item.answer_tokens);
}

} // namespace detail

// Runs exactly epochs * ceil(N / batch_size) optimizer steps (last batch kept).
// Frozen groups are untouched bit-for-bit; an identical seed yields an
// identical loss trace. Non-finite loss aborts with the step index.
template <typename T>
TrainResult train(ModelBundle<T>& bundle, const std::vector<TrainItem<T>>& items, const PromptLayout& layout,
                  const TrainConfig& cfg, Regime regime,
                  const std::function<void(int epoch)>& on_epoch = {}) {
    cfg.validate();
    if (items.empty()) {
        throw ValidationError("training set is empty");
    }
    auto part = select_trainable(bundle, regime);
    for (auto* p : part.trainable) {
        p->node->requires_grad = true;
    }
    for (auto* p : part.frozen) {
        p->node->requires_grad = false;
    }

    nn::AdamW<T> opt;
    opt.lr = cfg.lr;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.weight_decay = cfg.weight_decay;
    opt.eps = cfg.eps;

    TrainResult result;
    const long n = static_cast<long>(items.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<long> order(items.size());
        for (long i = 0; i < n; ++i) {
            order[static_cast<std::size_t>(i)] = i;
        }
        RandomSource rng(cfg.seed + 0x9E37ull * static_cast<std::uint64_t>(epoch + 1));
        rng.shuffle(order);

        for (long start = 0; start < n; start += cfg.batch_size) {
            const long end = std::min(n, start + cfg.batch_size);
            for (auto* p : part.trainable) {
                p->zero_grad();
            }
            nn::Graph<T> g(true);
            std::vector<nn::Ref<T>> sums;
            long tok_count = 0;
            for (long i = start; i < end; ++i) {
                auto [s, cnt] = detail::item_loss_node(g, bundle, layout, items[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
                sums.push_back(s);
                tok_count += cnt;
            }
            nn::Ref<T> total = sums.front();
            for (std::size_t i = 1; i < sums.size(); ++i) {
                total = g.add(total, sums[i]);
            }
            auto loss = g.scale(total, T(1) / static_cast<T>(tok_count));
            const double loss_value = static_cast<double>(loss->val(0, 0));
            if (!std::isfinite(loss_value)) {
                throw TrainingError("non-finite loss at step " + std::to_string(result.steps));
            }
            g.backward(loss);
            opt.step(part.trainable);
            result.loss_trace.push_back(loss_value);
            ++result.steps;
        }
        if (on_epoch) {
            on_epoch(epoch);
        }
    }
    // restore the default: every parameter participates in future graphs
    for (auto* p : part.frozen) {
        p->node->requires_grad = true;
    }
    return result;
}

// Turns dataset samples into training items: loads images (and heatmaps for
// the estimated-RoI source), runs the frozen backbone, tokenizes text, and
// appends eos to every gold answer.
template <typename T>
std::vector<TrainItem<T>> prepare_items(ModelBundle<T>& bundle, const Dataset& ds,
                                        const std::filesystem::path& data_root, const Tokenizer& tok) {
    const AdapterSource source = adapter_source_from_string(bundle.cfg.adapter_source);
    std::vector<TrainItem<T>> items;
    items.reserve(ds.size());
    for (const auto& sample : ds.samples) {
        const Image img = load_ppm(data_root / sample.image_ref);
        TrainItem<T> item;
        const auto to_t = [](const std::vector<double>& v) {
            std::vector<T> out(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                out[i] = static_cast<T>(v[i]);
            }
            return out;
        };
        item.image_feat = to_t(bundle.encoder->apply(img));
        if (bundle.cfg.adapters) {
            Image roi_img;
            switch (source) {
            case AdapterSource::Image:
                roi_img = img;
                break;
            case AdapterSource::GtRoi:
                roi_img = crop(img, sample.gt_roi);
                break;
            case AdapterSource::EstimatedRoi: {
                const Heatmap h = load_heatmap(heatmap_path_for(data_root, sample));
                roi_img = crop(img, extract_roi(binarize(h), img.width, img.height));
                break;
            }
            }
            item.roi_feat = to_t(bundle.encoder->apply(roi_img));
        }
        item.question_tokens = tok.encode(sample.question);
        item.answer_tokens = tok.encode(sample.answers.front());
        item.answer_tokens.push_back(tok.eos_id());
        items.push_back(std::move(item));
    }
    return items;
}

// Checkpoint directory: manifest.json (config, regime, group names) plus one
// binary tensor blob per parameter group, float32 little-endian with shape
// headers. Round-trips restore every parameter bit-exactly.
void save_checkpoint(ModelBundle<float>& bundle, const std::filesystem::path& dir, const std::string& regime_tag);

// Strict in-place load: groups are matched by name and shapes must agree. A
// checkpoint without an adapters blob loads into an adapter bundle, whose
// adapters then stay at identity init.
void load_checkpoint_into(ModelBundle<float>& bundle, const std::filesystem::path& dir);

// Reconstructs the bundle from the stored config, then loads all groups.
ModelBundle<float> load_checkpoint(const std::filesystem::path& dir);

} // namespace gazevqa
