#include "gazevqa/fixture.hpp"

#include "gazevqa/errors.hpp"
#include "gazevqa/heatmap.hpp"
#include "gazevqa/rng.hpp"

#include <algorithm>
#include <array>

namespace gazevqa {

namespace {

struct PaletteColor {
    const char* word;
    std::uint8_t r, g, b;
};

const std::array<PaletteColor, 4>& palette() {
    static const std::array<PaletteColor, 4> kPalette = {{
        {"あか", 220, 40, 40},
        {"あお", 40, 60, 220},
        {"みどり", 40, 180, 60},
        {"きいろ", 230, 210, 40},
    }};
    return kPalette;
}

constexpr const char* kAmbiguousQuestion = "これはどんな色ですか？"; // 11 characters
constexpr const char* kPretrainQuestion = "このいろはなにいろ？？"; // 11 characters

std::uint8_t jitter(std::uint8_t base, RandomSource& rng) {
    const int v = static_cast<int>(base) + static_cast<int>(rng.below(13)) - 6;
    return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

GazeVQASample base_sample(const std::string& id, const std::string& image_ref, int size) {
    GazeVQASample s;
    s.sample_id = id;
    s.image_ref = image_ref;
    s.image_w = size;
    s.image_h = size;
    s.gaze.source = Point2D{size / 2.0, size / 2.0};
    s.gaze.head_box = BoundingBox{size / 2 - 4, size / 2 - 4, 8, 8};
    s.category = "cup";
    s.split = "train";
    return s;
}

} // namespace

const std::vector<std::string>& fixture_palette_words() {
    static const std::vector<std::string> kWords = [] {
        std::vector<std::string> w;
        for (const auto& c : palette()) {
            w.emplace_back(c.word);
        }
        return w;
    }();
    return kWords;
}

FixturePaths write_fixture(const std::filesystem::path& dir, const FixtureSpec& spec) {
    if (spec.bases < 1 || spec.image_size < 8 || spec.heatmap_size < 4 || spec.pretrain_per_color < 1) {
        throw ConfigError("fixture spec values out of range");
    }
    std::filesystem::create_directories(dir);
    RandomSource rng(spec.seed);
    const int sz = spec.image_size;
    const int half = sz / 2;

    Dataset train;
    Dataset test;

    for (int base = 0; base < spec.bases; ++base) {
        // quadrant -> palette index, a distinct rotation per base image
        std::array<int, 4> colors{};
        for (int q = 0; q < 4; ++q) {
            colors[static_cast<std::size_t>(q)] = (q + base) % 4;
        }

        Image img = make_image(sz, sz);
        for (int q = 0; q < 4; ++q) {
            const auto& col = palette()[static_cast<std::size_t>(colors[static_cast<std::size_t>(q)])];
            const int x0 = (q % 2) * half;
            const int y0 = (q / 2) * half;
            for (int y = y0; y < y0 + half; ++y) {
                for (int x = x0; x < x0 + half; ++x) {
                    img.at(x, y, 0) = col.r;
                    img.at(x, y, 1) = col.g;
                    img.at(x, y, 2) = col.b;
                }
            }
        }
        const std::string image_ref = "img_" + std::to_string(base) + ".ppm";
        save_ppm(img, dir / image_ref);

        for (int q = 0; q < 4; ++q) {
            const int x0 = (q % 2) * half;
            const int y0 = (q / 2) * half;
            const std::string word = palette()[static_cast<std::size_t>(colors[static_cast<std::size_t>(q)])].word;
            const int idx = base * 4 + q;

            GazeVQASample s = base_sample("tr_" + std::to_string(idx), image_ref, sz);
            s.gaze.targets = {Point2D{x0 + half / 2.0, y0 + half / 2.0}};
            s.gt_roi = BoundingBox{x0, y0, half, half};
            s.question = kAmbiguousQuestion;
            s.answers = {word};

            // per-sample heatmap: positive inside the gazed quadrant
            Heatmap h;
            h.width = spec.heatmap_size;
            h.height = spec.heatmap_size;
            h.values.assign(static_cast<std::size_t>(h.width) * h.height, -0.5f);
            const int hx0 = (q % 2) * (spec.heatmap_size / 2);
            const int hy0 = (q / 2) * (spec.heatmap_size / 2);
            for (int y = hy0; y < hy0 + spec.heatmap_size / 2; ++y) {
                for (int x = hx0; x < hx0 + spec.heatmap_size / 2; ++x) {
                    h.at(x, y) = 1.0f;
                }
            }
            save_heatmap(h, heatmap_path_for(dir, s));

            GazeVQASample t = s;
            t.sample_id = "te_" + std::to_string(idx);
            t.split = "test";
            static const std::array<const char*, 4> kPlaces = {"ひだりうえ", "みぎうえ", "ひだりした", "みぎした"};
            t.clarified_question = std::string(kPlaces[static_cast<std::size_t>(q)]) + "はどんな色ですか？";
            // ten answers: four annotators agree, three name another color,
            // three answer off-palette
            t.answers.assign(4, word);
            for (int other = 0; other < 4; ++other) {
                if (palette()[static_cast<std::size_t>(other)].word != word) {
                    t.answers.push_back(palette()[static_cast<std::size_t>(other)].word);
                }
            }
            t.answers.push_back("しろ");
            t.answers.push_back("くろ");
            t.answers.push_back("はいいろ");
            save_heatmap(h, heatmap_path_for(dir, t));

            train.samples.push_back(std::move(s));
            test.samples.push_back(std::move(t));
        }
    }

    Dataset pretrain;
    int pre_idx = 0;
    for (int c = 0; c < 4; ++c) {
        for (int rep = 0; rep < spec.pretrain_per_color; ++rep) {
            const auto& col = palette()[static_cast<std::size_t>(c)];
            Image img = make_image(sz, sz);
            for (int y = 0; y < sz; ++y) {
                for (int x = 0; x < sz; ++x) {
                    img.at(x, y, 0) = jitter(col.r, rng);
                    img.at(x, y, 1) = jitter(col.g, rng);
                    img.at(x, y, 2) = jitter(col.b, rng);
                }
            }
            const std::string image_ref = "pre_" + std::to_string(pre_idx) + ".ppm";
            save_ppm(img, dir / image_ref);

            GazeVQASample s = base_sample("pre_" + std::to_string(pre_idx), image_ref, sz);
            s.gaze.targets = {Point2D{sz / 2.0, sz / 2.0}};
            s.gt_roi = BoundingBox{0, 0, sz, sz};
            s.question = kPretrainQuestion;
            s.answers = {col.word};

            Heatmap h;
            h.width = spec.heatmap_size;
            h.height = spec.heatmap_size;
            h.values.assign(static_cast<std::size_t>(h.width) * h.height, 1.0f);
            save_heatmap(h, heatmap_path_for(dir, s));

            pretrain.samples.push_back(std::move(s));
            ++pre_idx;
        }
    }

    FixturePaths paths;
    paths.root = dir;
    paths.train_jsonl = dir / "train.jsonl";
    paths.test_jsonl = dir / "test.jsonl";
    paths.pretrain_jsonl = dir / "pretrain.jsonl";
    save_dataset(train, paths.train_jsonl);
    save_dataset(test, paths.test_jsonl);
    save_dataset(pretrain, paths.pretrain_jsonl);

    DatasetManifest m;
    m.name = "synthetic color-quadrant gaze QA";
    m.declared_train = static_cast<long>(train.size());
    m.declared_valid = 0;
    m.declared_test = static_cast<long>(test.size());
    m.notes = {"generated fixture; four gaze targets share each image"};
    save_manifest(m, manifest_path_for(paths.train_jsonl));
    save_manifest(m, manifest_path_for(paths.test_jsonl));

    DatasetManifest pm;
    pm.name = "synthetic solid-color pretraining corpus";
    pm.declared_train = static_cast<long>(pretrain.size());
    pm.declared_valid = 0;
    pm.declared_test = 0;
    save_manifest(pm, manifest_path_for(paths.pretrain_jsonl));
    return paths;
}

} // namespace gazevqa
