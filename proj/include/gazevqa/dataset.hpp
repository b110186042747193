#pragma once

#include "gazevqa/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gazevqa {

struct Point2D {
    double x = 0.0;
    double y = 0.0;
};

struct GazeAnnotation {
    Point2D source;
    std::vector<Point2D> targets; // nonempty
    BoundingBox head_box;         // contains the source point
};

// One image + gaze annotation + question/answer record; the dataset atom.
struct GazeVQASample {
    std::string sample_id;
    std::string image_ref; // path relative to the dataset file
    int image_w = 0;
    int image_h = 0;
    GazeAnnotation gaze;
    BoundingBox gt_roi;
    std::string question; // ambiguous question, >= 10 characters
    std::optional<std::string> clarified_question;
    std::vector<std::string> answers; // 1 for train/valid, 10 for test
    std::string category;             // one of the 80 COCO categories
    std::string split;                // "train" | "valid" | "test"
};

struct Dataset {
    std::vector<GazeVQASample> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

enum class QuestionMajor { What, Where, How, Which, Others };
// Minor subtypes apply to What questions only; None everywhere else.
enum class QuestionMinor { IsAreDoDoes, Color, Condition, Kind, Shape, OtherWhat, None };

struct QuestionType {
    QuestionMajor major = QuestionMajor::Others;
    QuestionMinor minor = QuestionMinor::None;

    bool operator==(const QuestionType&) const = default;
    auto operator<=>(const QuestionType&) const = default;
};

const char* to_string(QuestionMajor m);
const char* to_string(QuestionMinor m);

struct DatasetStats {
    long n_images = 0;
    long n_qa_pairs = 0;
    long n_unique_questions = 0;
    long n_unique_answers = 0;
    double avg_question_length = 0.0; // Unicode characters, pre-normalization
    double avg_answer_length = 0.0;
};

// Declared split sizes and provenance notes shipped next to a dataset file.
struct DatasetManifest {
    std::string name;
    long declared_train = -1;
    long declared_valid = -1;
    long declared_test = -1;
    std::vector<std::string> notes;
};

const std::array<const char*, 80>& coco_categories();
bool is_coco_category(const std::string& name);

// Throws ValidationError naming the sample_id and the offending field.
void validate_sample(const GazeVQASample& s);

// JSONL, one sample per line. Malformed JSON raises FormatError naming the
// line; invariant violations raise ValidationError naming sample and field.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

// Sibling manifest convention: "<dataset stem>.manifest.json".
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path);

// Precomputed heatmaps live next to the sample's image, keyed by sample id
// ("<image dir>/<sample_id>.gvhm"); images can carry several gaze
// annotations, so the key cannot be the image itself.
std::filesystem::path heatmap_path_for(const std::filesystem::path& data_root, const GazeVQASample& s);
std::optional<DatasetManifest> load_manifest_for(const std::filesystem::path& dataset_path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

struct SplitResult {
    Dataset train;
    Dataset valid;
    Dataset test;
};

// Disjoint, exhaustive, seed-deterministic partition. Sizes are
// floor(N * ratio) per split with the remainder assigned to train.
SplitResult split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed);

// Keyword classifier; total and deterministic. Match priority:
// Which -> Where -> How -> Others -> What; unmatched questions are Others.
QuestionType classify_question(const std::string& question);

// Uniqueness under NFKC + trim; lengths in Unicode characters of the raw
// text. Answer statistics cover each pair's primary answer. Empty -> error.
DatasetStats compute_statistics(const Dataset& ds);

} // namespace gazevqa
