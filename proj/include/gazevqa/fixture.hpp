#pragma once

#include "gazevqa/dataset.hpp"

#include <filesystem>
#include <string>

namespace gazevqa {

// Synthetic gaze-QA corpus for desk-scale runs. Each base image is a 2x2
// arrangement of palette colors; four samples per image gaze at one quadrant
// each and ask the same color question, so the image alone cannot resolve
// the answer. A companion pretraining set of solid-color images teaches the
// color vocabulary.
struct FixtureSpec {
    int bases = 4;         // base images; samples = 4 * bases
    int image_size = 32;
    int heatmap_size = 16;
    int pretrain_per_color = 8;
    std::uint64_t seed = 7;
};

struct FixturePaths {
    std::filesystem::path root;
    std::filesystem::path train_jsonl;    // ambiguous samples, 1 answer each
    std::filesystem::path test_jsonl;     // same scenes under the 10-answer protocol
    std::filesystem::path pretrain_jsonl; // solid-color warm-up corpus
};

FixturePaths write_fixture(const std::filesystem::path& dir, const FixtureSpec& spec = {});

// The palette words double as the gold answers.
const std::vector<std::string>& fixture_palette_words();

} // namespace gazevqa
