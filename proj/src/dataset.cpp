#include "gazevqa/dataset.hpp"

#include "gazevqa/errors.hpp"
#include "gazevqa/rng.hpp"
#include "gazevqa/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

using nlohmann::json;

namespace gazevqa {

const char* to_string(QuestionMajor m) {
    switch (m) {
    case QuestionMajor::What: return "What";
    case QuestionMajor::Where: return "Where";
    case QuestionMajor::How: return "How";
    case QuestionMajor::Which: return "Which";
    case QuestionMajor::Others: return "Others";
    }
    return "?";
}

const char* to_string(QuestionMinor m) {
    switch (m) {
    case QuestionMinor::IsAreDoDoes: return "is_are_do_does";
    case QuestionMinor::Color: return "color";
    case QuestionMinor::Condition: return "condition";
    case QuestionMinor::Kind: return "kind";
    case QuestionMinor::Shape: return "shape";
    case QuestionMinor::OtherWhat: return "others";
    case QuestionMinor::None: return "none";
    }
    return "?";
}

const std::array<const char*, 80>& coco_categories() {
    static const std::array<const char*, 80> kCats = {
        "person",        "bicycle",      "car",           "motorcycle",    "airplane",     "bus",
        "train",         "truck",        "boat",          "traffic light", "fire hydrant", "stop sign",
        "parking meter", "bench",        "bird",          "cat",           "dog",          "horse",
        "sheep",         "cow",          "elephant",      "bear",          "zebra",        "giraffe",
        "backpack",      "umbrella",     "handbag",       "tie",           "suitcase",     "frisbee",
        "skis",          "snowboard",    "sports ball",   "kite",          "baseball bat", "baseball glove",
        "skateboard",    "surfboard",    "tennis racket", "bottle",        "wine glass",   "cup",
        "fork",          "knife",        "spoon",         "bowl",          "banana",       "apple",
        "sandwich",      "orange",       "broccoli",      "carrot",        "hot dog",      "pizza",
        "donut",         "cake",         "chair",         "couch",         "potted plant", "bed",
        "dining table",  "toilet",       "tv",            "laptop",        "mouse",        "remote",
        "keyboard",      "cell phone",   "microwave",     "oven",          "toaster",      "sink",
        "refrigerator",  "book",         "clock",         "vase",          "scissors",     "teddy bear",
        "hair drier",    "toothbrush"};
    return kCats;
}

bool is_coco_category(const std::string& name) {
    const auto& cats = coco_categories();
    return std::find_if(cats.begin(), cats.end(), [&](const char* c) { return name == c; }) != cats.end();
}

namespace {

[[noreturn]] void bad_field(const std::string& sample_id, const std::string& field, const std::string& why) {
    throw ValidationError("sample '" + sample_id + "': field '" + field + "' " + why);
}

bool box_contains_point(const BoundingBox& b, const Point2D& p) {
    return p.x >= b.x && p.x <= b.x + b.w && p.y >= b.y && p.y <= b.y + b.h;
}

} // namespace

void validate_sample(const GazeVQASample& s) {
    if (s.sample_id.empty()) {
        throw ValidationError("sample with empty sample_id");
    }
    if (s.image_ref.empty()) {
        bad_field(s.sample_id, "image", "must be a nonempty relative path");
    }
    if (s.image_w <= 0 || s.image_h <= 0) {
        bad_field(s.sample_id, "image_size", "must be positive");
    }
    if (s.gaze.source.x < 0 || s.gaze.source.y < 0) {
        bad_field(s.sample_id, "gaze.source", "coordinates must be non-negative");
    }
    if (s.gaze.targets.empty()) {
        bad_field(s.sample_id, "gaze.targets", "must be nonempty");
    }
    for (const auto& t : s.gaze.targets) {
        if (t.x < 0 || t.y < 0) {
            bad_field(s.sample_id, "gaze.targets", "coordinates must be non-negative");
        }
    }
    if (!s.gaze.head_box.within(s.image_w, s.image_h)) {
        bad_field(s.sample_id, "gaze.head_box", "must lie within the image");
    }
    if (!box_contains_point(s.gaze.head_box, s.gaze.source)) {
        bad_field(s.sample_id, "gaze.head_box", "must contain the gaze source");
    }
    if (!s.gt_roi.within(s.image_w, s.image_h)) {
        bad_field(s.sample_id, "gt_roi", "must lie within the image");
    }
    if (text::char_count(s.question) < 10) {
        bad_field(s.sample_id, "question", "must be at least 10 characters long");
    }
    if (s.split != "train" && s.split != "valid" && s.split != "test") {
        bad_field(s.sample_id, "split", "must be one of train/valid/test");
    }
    if (s.answers.empty()) {
        bad_field(s.sample_id, "answers", "must be nonempty");
    }
    if (s.split == "test") {
        if (s.answers.size() != 10) {
            bad_field(s.sample_id, "answers",
                      "test samples require 10 answers, got " + std::to_string(s.answers.size()));
        }
    } else if (s.answers.size() != 1) {
        bad_field(s.sample_id, "answers",
                  "train/valid samples require exactly 1 answer, got " + std::to_string(s.answers.size()));
    }
    if (!is_coco_category(s.category)) {
        bad_field(s.sample_id, "category", "'" + s.category + "' is not a COCO category");
    }
}

namespace {

Point2D parse_point(const json& j, const std::string& sid, const std::string& field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        bad_field(sid, field, "must be [x, y]");
    }
    return Point2D{j[0].get<double>(), j[1].get<double>()};
}

BoundingBox parse_box(const json& j, const std::string& sid, const std::string& field) {
    if (!j.is_array() || j.size() != 4) {
        bad_field(sid, field, "must be [x, y, w, h]");
    }
    for (const auto& v : j) {
        if (!v.is_number()) {
            bad_field(sid, field, "must contain numbers");
        }
    }
    return BoundingBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

const json& require(const json& j, const char* key, const std::string& sid) {
    auto it = j.find(key);
    if (it == j.end()) {
        bad_field(sid, key, "is missing");
    }
    return *it;
}

GazeVQASample parse_sample(const json& j) {
    if (!j.is_object()) {
        throw ValidationError("sample record must be a JSON object");
    }
    const std::string sid = j.value("sample_id", std::string());
    if (sid.empty()) {
        throw ValidationError("sample record missing 'sample_id'");
    }
    GazeVQASample s;
    s.sample_id = sid;
    if (!require(j, "image", sid).is_string()) {
        bad_field(sid, "image", "must be a string path");
    }
    s.image_ref = j["image"].get<std::string>();

    const json& sz = require(j, "image_size", sid);
    if (!sz.is_array() || sz.size() != 2 || !sz[0].is_number_integer() || !sz[1].is_number_integer()) {
        bad_field(sid, "image_size", "must be [W, H]");
    }
    s.image_w = sz[0].get<int>();
    s.image_h = sz[1].get<int>();

    const json& gz = require(j, "gaze", sid);
    if (!gz.is_object()) {
        bad_field(sid, "gaze", "must be an object");
    }
    s.gaze.source = parse_point(require(gz, "source", sid), sid, "gaze.source");
    const json& tgts = require(gz, "targets", sid);
    if (!tgts.is_array() || tgts.empty()) {
        bad_field(sid, "gaze.targets", "must be a nonempty array");
    }
    for (const auto& t : tgts) {
        s.gaze.targets.push_back(parse_point(t, sid, "gaze.targets"));
    }
    s.gaze.head_box = parse_box(require(gz, "head_box", sid), sid, "gaze.head_box");
    s.gt_roi = parse_box(require(j, "gt_roi", sid), sid, "gt_roi");

    if (!require(j, "question", sid).is_string()) {
        bad_field(sid, "question", "must be a string");
    }
    s.question = j["question"].get<std::string>();

    if (auto it = j.find("clarified_question"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) {
            bad_field(sid, "clarified_question", "must be a string or null");
        }
        s.clarified_question = it->get<std::string>();
    }

    const json& ans = require(j, "answers", sid);
    if (!ans.is_array()) {
        bad_field(sid, "answers", "must be an array of strings");
    }
    for (const auto& a : ans) {
        if (!a.is_string()) {
            bad_field(sid, "answers", "must contain only strings");
        }
        s.answers.push_back(a.get<std::string>());
    }

    if (!require(j, "category", sid).is_string()) {
        bad_field(sid, "category", "must be a string");
    }
    s.category = j["category"].get<std::string>();

    if (!require(j, "split", sid).is_string()) {
        bad_field(sid, "split", "must be a string");
    }
    s.split = j["split"].get<std::string>();
    return s;
}

json sample_to_json(const GazeVQASample& s) {
    json gz;
    gz["source"] = {s.gaze.source.x, s.gaze.source.y};
    json tgts = json::array();
    for (const auto& t : s.gaze.targets) {
        tgts.push_back({t.x, t.y});
    }
    gz["targets"] = tgts;
    gz["head_box"] = {s.gaze.head_box.x, s.gaze.head_box.y, s.gaze.head_box.w, s.gaze.head_box.h};

    json j;
    j["sample_id"] = s.sample_id;
    j["image"] = s.image_ref;
    j["image_size"] = {s.image_w, s.image_h};
    j["gaze"] = gz;
    j["gt_roi"] = {s.gt_roi.x, s.gt_roi.y, s.gt_roi.w, s.gt_roi.h};
    j["question"] = s.question;
    j["clarified_question"] = s.clarified_question ? json(*s.clarified_question) : json(nullptr);
    j["answers"] = s.answers;
    j["category"] = s.category;
    j["split"] = s.split;
    return j;
}

} // namespace

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open dataset file: " + path.string());
    }
    Dataset ds;
    std::unordered_set<std::string> ids;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue; // blank line
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        GazeVQASample s;
        try {
            s = parse_sample(j);
            validate_sample(s);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!ids.insert(s.sample_id).second) {
            throw ValidationError("line " + std::to_string(line_no) + ": duplicate sample_id '" + s.sample_id + "'");
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ValidationError("cannot write dataset file: " + path.string());
    }
    for (const auto& s : ds.samples) {
        out << sample_to_json(s).dump() << "\n";
    }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path) {
    std::filesystem::path p = dataset_path;
    p.replace_extension(".manifest.json");
    return p;
}

std::filesystem::path heatmap_path_for(const std::filesystem::path& data_root, const GazeVQASample& s) {
    const std::filesystem::path img = data_root / s.image_ref;
    return img.parent_path() / (s.sample_id + ".gvhm");
}

std::optional<DatasetManifest> load_manifest_for(const std::filesystem::path& dataset_path) {
    const auto path = manifest_path_for(dataset_path);
    std::ifstream in(path);
    if (!in) {
        return std::nullopt;
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError("malformed manifest " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    m.name = j.value("name", std::string());
    if (auto it = j.find("declared_split_sizes"); it != j.end() && it->is_object()) {
        m.declared_train = it->value("train", -1L);
        m.declared_valid = it->value("valid", -1L);
        m.declared_test = it->value("test", -1L);
    }
    if (auto it = j.find("notes"); it != j.end() && it->is_array()) {
        for (const auto& n : *it) {
            m.notes.push_back(n.get<std::string>());
        }
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    json j;
    j["name"] = m.name;
    j["declared_split_sizes"] = {{"train", m.declared_train}, {"valid", m.declared_valid}, {"test", m.declared_test}};
    j["notes"] = m.notes;
    std::ofstream out(path);
    if (!out) {
        throw ValidationError("cannot write manifest file: " + path.string());
    }
    out << j.dump(2) << "\n";
}

SplitResult split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
    const double sum = ratios.train + ratios.valid + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
    }
    if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0) {
        throw ConfigError("split ratios must be non-negative");
    }
    const std::size_t n = ds.size();
    const auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.valid));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test));
    std::size_t n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.train));
    n_train += n - (n_train + n_valid + n_test); // remainder to train

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    RandomSource rng(seed);
    rng.shuffle(order);

    // membership from the shuffle, original file order within each split
    std::vector<int> part(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        part[order[i]] = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);
    }
    SplitResult out;
    for (std::size_t i = 0; i < n; ++i) {
        (part[i] == 0 ? out.train : part[i] == 1 ? out.valid : out.test).samples.push_back(ds.samples[i]);
    }
    return out;
}

namespace {

bool has_any(const std::string& q, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        if (q.find(k) != std::string::npos) {
            return true;
        }
    }
    return false;
}

QuestionMinor what_subtype(const std::string& q) {
    if (has_any(q, {"色"})) {
        return QuestionMinor::Color;
    }
    if (has_any(q, {"状態", "様子"})) {
        return QuestionMinor::Condition;
    }
    if (has_any(q, {"種類"})) {
        return QuestionMinor::Kind;
    }
    if (has_any(q, {"形"})) {
        return QuestionMinor::Shape;
    }
    if (has_any(q, {"です", "ます", "する"})) {
        return QuestionMinor::IsAreDoDoes;
    }
    return QuestionMinor::OtherWhat;
}

} // namespace

QuestionType classify_question(const std::string& question) {
    if (question.empty()) {
        return QuestionType{QuestionMajor::Others, QuestionMinor::None};
    }
    const std::string q = text::canonical(question);
    if (has_any(q, {"どちら"})) {
        return {QuestionMajor::Which, QuestionMinor::None};
    }
    if (has_any(q, {"どこ"})) {
        return {QuestionMajor::Where, QuestionMinor::None};
    }
    if (has_any(q, {"どれ", "いくつ"})) {
        return {QuestionMajor::How, QuestionMinor::None};
    }
    if (has_any(q, {"いつ", "だれ", "誰", "なぜ"})) {
        return {QuestionMajor::Others, QuestionMinor::None};
    }
    if (has_any(q, {"なに", "何", "どの", "どんな"})) {
        return {QuestionMajor::What, what_subtype(q)};
    }
    return {QuestionMajor::Others, QuestionMinor::None};
}

DatasetStats compute_statistics(const Dataset& ds) {
    if (ds.empty()) {
        throw ValidationError("cannot compute statistics of an empty dataset");
    }
    DatasetStats st;
    st.n_qa_pairs = static_cast<long>(ds.size());

    std::unordered_set<std::string> images;
    std::unordered_set<std::string> questions;
    std::unordered_set<std::string> answers;
    double q_len_sum = 0.0;
    double a_len_sum = 0.0;
    for (const auto& s : ds.samples) {
        images.insert(s.image_ref);
        questions.insert(text::canonical(s.question));
        answers.insert(text::canonical(s.answers.front()));
        q_len_sum += static_cast<double>(text::char_count(s.question));
        a_len_sum += static_cast<double>(text::char_count(s.answers.front()));
    }
    st.n_images = static_cast<long>(images.size());
    st.n_unique_questions = static_cast<long>(questions.size());
    st.n_unique_answers = static_cast<long>(answers.size());
    st.avg_question_length = q_len_sum / static_cast<double>(ds.size());
    st.avg_answer_length = a_len_sum / static_cast<double>(ds.size());
    return st;
}

} // namespace gazevqa
