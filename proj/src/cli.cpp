#include "gazevqa/cli.hpp"

#include "gazevqa/evaluation.hpp"
#include "gazevqa/fixture.hpp"
#include "gazevqa/heatmap.hpp"
#include "gazevqa/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>

using nlohmann::json;

namespace gazevqa {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const json& resolved_config,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    const std::string cfg_dump = resolved_config.dump();
    json m;
    m["command"] = command;
    m["toolkit_version"] = kToolkitVersion;
    m["config_hash"] = hex64(fnv1a64(cfg_dump.data(), cfg_dump.size()));
    m["config"] = resolved_config;
    m["seed"] = seed;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        throw FormatError("cannot write manifest in " + dir.string());
    }
    out << m.dump(2) << "\n";
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void collect_alphabet_texts(const Dataset& ds, std::vector<std::string>& texts) {
    for (const auto& s : ds.samples) {
        texts.push_back(s.question);
        if (s.clarified_question) {
            texts.push_back(*s.clarified_question);
        }
        for (const auto& a : s.answers) {
            texts.push_back(a);
        }
    }
}

std::string build_alphabet(const Dataset& ds, const BundleConfig& cfg,
                           const std::vector<std::string>& extra_datasets) {
    std::vector<std::string> texts = {cfg.sep1, cfg.sep2};
    collect_alphabet_texts(ds, texts);
    for (const auto& path : extra_datasets) {
        collect_alphabet_texts(load_dataset(path), texts);
    }
    return CharTokenizer::from_corpus(texts).alphabet();
}

int cmd_fixture(const std::filesystem::path& out_dir, FixtureSpec spec, std::ostream& out) {
    const FixturePaths paths = write_fixture(out_dir, spec);
    json resolved{{"bases", spec.bases},
                  {"image_size", spec.image_size},
                  {"heatmap_size", spec.heatmap_size},
                  {"pretrain_per_color", spec.pretrain_per_color},
                  {"seed", spec.seed}};
    write_manifest(out_dir, "fixture", resolved, spec.seed, {},
                   {paths.train_jsonl.string(), paths.test_jsonl.string(), paths.pretrain_jsonl.string()});
    out << "fixture written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_stats(const std::filesystem::path& data, const std::string& out_dir, std::ostream& out) {
    const Dataset ds = load_dataset(data);
    const DatasetStats st = compute_statistics(ds);

    std::map<QuestionType, long> typology;
    for (const auto& s : ds.samples) {
        ++typology[classify_question(s.question)];
    }

    json jt = json::array();
    for (const auto& [qt, count] : typology) {
        jt.push_back({{"type", to_string(qt.major)}, {"subtype", to_string(qt.minor)}, {"count", count}});
    }
    json js{{"images", st.n_images},
            {"qa_pairs", st.n_qa_pairs},
            {"unique_questions", st.n_unique_questions},
            {"unique_answers", st.n_unique_answers},
            {"avg_question_length", st.avg_question_length},
            {"avg_answer_length", st.avg_answer_length}};
    json report{{"stats", js}, {"typology", jt}};
    if (const auto manifest = load_manifest_for(data)) {
        report["declared_split_sizes"] = {{"train", manifest->declared_train},
                                          {"valid", manifest->declared_valid},
                                          {"test", manifest->declared_test}};
    }
    out << report.dump(2) << "\n";

    if (!out_dir.empty()) {
        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        std::ofstream f(dir / "stats.json");
        f << report.dump(2) << "\n";
        write_manifest(dir, "stats", json{{"data", data.string()}}, 0, {data.string()},
                       {(dir / "stats.json").string()});
    }
    return 0;
}

int cmd_roi(const std::filesystem::path& heatmap_path, int width, int height, double threshold,
            const std::string& out_dir, std::ostream& out) {
    const Heatmap h = load_heatmap(heatmap_path);
    const BinaryMask mask = binarize(h, static_cast<float>(threshold));
    const BoundingBox box = extract_roi(mask, width, height);
    const json j{{"x", box.x}, {"y", box.y}, {"w", box.w}, {"h", box.h}};
    out << j.dump() << "\n";
    if (!out_dir.empty()) {
        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        std::ofstream f(dir / "roi.json");
        f << j.dump(2) << "\n";
        write_manifest(dir, "roi",
                       json{{"heatmap", heatmap_path.string()},
                            {"width", width},
                            {"height", height},
                            {"threshold", threshold}},
                       0, {heatmap_path.string()}, {(dir / "roi.json").string()});
    }
    return 0;
}

struct TrainCli {
    std::string config_path;
    std::string out_dir;
    std::string data;
    std::string init_checkpoint;
    std::string regime;
    std::vector<std::string> alphabet_data;
    int epochs = -1;
    int batch_size = -1;
    double lr = -1.0;
    std::int64_t seed = -1;
    int checkpoint_every = -1;
};

int cmd_train(const TrainCli& cli, std::ostream& out) {
    json cfg = cli.config_path.empty() ? json::object() : load_json_file(cli.config_path);
    // flags override file keys
    if (!cli.data.empty()) {
        cfg["data"] = cli.data;
    }
    if (!cli.out_dir.empty()) {
        cfg["out"] = cli.out_dir;
    }
    if (!cli.regime.empty()) {
        cfg["regime"] = cli.regime;
    }
    if (!cli.init_checkpoint.empty()) {
        cfg["init_checkpoint"] = cli.init_checkpoint;
    }
    if (!cfg.contains("train") || cfg["train"].is_null()) {
        cfg["train"] = json::object();
    }
    json& tj = cfg["train"];
    if (cli.epochs > 0) {
        tj["epochs"] = cli.epochs;
    }
    if (cli.batch_size > 0) {
        tj["batch_size"] = cli.batch_size;
    }
    if (cli.lr > 0) {
        tj["lr"] = cli.lr;
    }
    if (cli.seed >= 0) {
        tj["seed"] = cli.seed;
    }
    if (cli.checkpoint_every >= 0) {
        cfg["checkpoint_every"] = cli.checkpoint_every;
    }
    if (!cli.alphabet_data.empty()) {
        cfg["alphabet_data"] = cli.alphabet_data;
    }

    if (!cfg.contains("data")) {
        throw ConfigError("train: no dataset given (config key 'data' or --data)");
    }
    if (!cfg.contains("out")) {
        throw ConfigError("train: no output directory given (config key 'out' or --out)");
    }
    const std::filesystem::path data_path = cfg["data"].get<std::string>();
    const std::filesystem::path run_dir = cfg["out"].get<std::string>();
    const std::filesystem::path data_root =
        cfg.contains("data_root") ? std::filesystem::path(cfg["data_root"].get<std::string>())
                                  : data_path.parent_path();

    const Dataset ds = load_dataset(data_path);
    if (ds.empty()) {
        throw ValidationError("training dataset is empty");
    }

    // when resuming from a checkpoint, its architecture and alphabet are the
    // base; the config's "model" block applies on top (e.g. enabling adapters)
    std::optional<int> ckpt_vocab;
    BundleConfig bundle_cfg;
    if (cfg.contains("init_checkpoint") && !cfg["init_checkpoint"].is_null()) {
        const json m = load_json_file(std::filesystem::path(cfg["init_checkpoint"].get<std::string>()) /
                                      "manifest.json");
        bundle_cfg = BundleConfig::from_json(m.at("config"));
        ckpt_vocab = m.at("vocab").get<int>();
    }
    if (cfg.contains("model")) {
        bundle_cfg = BundleConfig::from_json(cfg["model"], bundle_cfg);
    }
    if (bundle_cfg.alphabet.empty()) {
        bundle_cfg.alphabet =
            build_alphabet(ds, bundle_cfg, cfg.value("alphabet_data", std::vector<std::string>{}));
    }
    bundle_cfg.validate();
    const CharTokenizer tok(bundle_cfg.alphabet);
    if (ckpt_vocab && *ckpt_vocab != tok.vocab_size()) {
        throw ConfigError("checkpoint vocabulary (" + std::to_string(*ckpt_vocab) +
                          ") does not match the tokenizer alphabet (" + std::to_string(tok.vocab_size()) + ")");
    }

    TrainConfig train_cfg;
    {
        const json& t = cfg["train"];
        train_cfg.batch_size = t.value("batch_size", train_cfg.batch_size);
        train_cfg.epochs = t.value("epochs", train_cfg.epochs);
        train_cfg.lr = t.value("lr", train_cfg.lr);
        train_cfg.weight_decay = t.value("weight_decay", train_cfg.weight_decay);
        train_cfg.seed = t.value("seed", train_cfg.seed);
    }
    train_cfg.validate();
    const Regime regime = regime_from_string(cfg.value("regime", std::string("full")));
    const int ckpt_every = cfg.value("checkpoint_every", 1); // epochs between checkpoints; 0 = final only

    ModelBundle<float> bundle(bundle_cfg, tok.vocab_size());
    if (cfg.contains("init_checkpoint") && !cfg["init_checkpoint"].is_null()) {
        load_checkpoint_into(bundle, cfg["init_checkpoint"].get<std::string>());
    }

    const PromptLayout layout = PromptLayout::make(tok, bundle_cfg.sep1, bundle_cfg.sep2);
    const auto items = prepare_items(bundle, ds, data_root, tok);

    std::filesystem::create_directories(run_dir);
    const TrainResult result = train(bundle, items, layout, train_cfg, regime, [&](int epoch) {
        if (ckpt_every > 0 && (epoch + 1) % ckpt_every == 0) {
            save_checkpoint(bundle, run_dir / ("ckpt_epoch_" + std::to_string(epoch + 1)), to_string(regime));
        }
    });
    save_checkpoint(bundle, run_dir / "ckpt_final", to_string(regime));

    {
        std::ofstream loss(run_dir / "loss.csv");
        loss << "step,loss\n";
        loss << std::setprecision(17);
        for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
            loss << i << "," << result.loss_trace[i] << "\n";
        }
    }
    json resolved = cfg;
    resolved["model"] = bundle_cfg.to_json();
    {
        std::ofstream f(run_dir / "config.json");
        f << resolved.dump(2) << "\n";
    }
    write_manifest(run_dir, "train", resolved, train_cfg.seed, {data_path.string()},
                   {(run_dir / "ckpt_final").string(), (run_dir / "loss.csv").string()});
    out << "trained " << result.steps << " steps; final loss "
        << (result.loss_trace.empty() ? 0.0 : result.loss_trace.back()) << "\n";
    return 0;
}

std::filesystem::path resolve_checkpoint(const std::filesystem::path& run_dir) {
    if (std::filesystem::exists(run_dir / "ckpt_final" / "manifest.json")) {
        return run_dir / "ckpt_final";
    }
    if (std::filesystem::exists(run_dir / "manifest.json")) {
        // run_dir may itself be a checkpoint directory
        std::ifstream in(run_dir / "manifest.json");
        json j;
        in >> j;
        if (j.value("format", std::string()) == "gazevqa-checkpoint") {
            return run_dir;
        }
    }
    throw TrainingError("no checkpoint found under " + run_dir.string());
}

struct EvalCli {
    std::vector<std::string> runs;
    std::string data;
    std::string out_dir;
    std::string variant = "none";
    int beam = 10;
    int max_new = 12;
    int jobs = 1;
};

int cmd_eval(const EvalCli& cli, const std::string& command, std::ostream& out) {
    if (cli.runs.empty()) {
        throw ConfigError(command + ": at least one --run directory is required");
    }
    const std::filesystem::path data_path = cli.data;
    const Dataset ds = load_dataset(data_path);
    const std::filesystem::path data_root = data_path.parent_path();

    std::vector<ModelBundle<float>> bundles;
    bundles.reserve(cli.runs.size());
    for (const auto& r : cli.runs) {
        bundles.push_back(load_checkpoint(resolve_checkpoint(r)));
        if (bundles.back().cfg.alphabet != bundles.front().cfg.alphabet) {
            throw ConfigError("run '" + r + "' was trained with a different tokenizer alphabet");
        }
    }
    const BundleConfig& cfg = bundles.front().cfg;
    const CharTokenizer tok(cfg.alphabet);
    const PromptLayout layout = PromptLayout::make(tok, cfg.sep1, cfg.sep2);
    const HashEmbedder embedder;

    EvalOptions opts;
    opts.gen.beam_width = cli.beam;
    opts.gen.max_new_tokens = cli.max_new;
    opts.gen.eos_id = tok.eos_id();
    opts.jobs = cli.jobs;
    opts.variant = cli.variant;

    std::vector<ModelBundle<float>*> ptrs;
    for (auto& b : bundles) {
        ptrs.push_back(&b);
    }
    const AveragedEval eval = evaluate_runs(ptrs, tok, layout, ds, data_root, embedder, opts);

    char line[160];
    std::snprintf(line, sizeof(line), "variant=%s runs=%zu Acc=%.2f Bs=%.2f%s", cli.variant.c_str(),
                  eval.runs.size(), eval.average.acc, eval.average.bs,
                  eval.average.protocol_full ? "" : " (exact-match fallback: non-protocol gold counts)");
    out << line << "\n";

    if (!cli.out_dir.empty()) {
        const std::filesystem::path dir(cli.out_dir);
        std::filesystem::create_directories(dir);
        write_report_json(eval, dir / "report.json");
        write_per_type_csv(eval.average, dir / "per_type.csv");
        json resolved{{"runs", cli.runs},     {"data", cli.data}, {"variant", cli.variant},
                      {"beam", cli.beam},     {"max_new", cli.max_new}, {"jobs", cli.jobs}};
        write_manifest(dir, command, resolved, 0, {cli.data},
                       {(dir / "report.json").string(), (dir / "per_type.csv").string()});
    }
    return 0;
}

} // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"gaze-grounded visual question answering toolkit"};
    app.require_subcommand(1);

    // fixture
    auto* fix = app.add_subcommand("fixture", "generate a synthetic desk-scale corpus");
    std::string fix_out;
    FixtureSpec fix_spec;
    fix->add_option("--out", fix_out, "output directory")->required();
    fix->add_option("--bases", fix_spec.bases, "base images (4 samples each)");
    fix->add_option("--image-size", fix_spec.image_size, "image width/height");
    fix->add_option("--pretrain-per-color", fix_spec.pretrain_per_color, "pretraining images per color");
    fix->add_option("--seed", fix_spec.seed, "generator seed");

    // stats
    auto* stats = app.add_subcommand("stats", "dataset statistics and question typology");
    std::string stats_data;
    std::string stats_out;
    stats->add_option("--data", stats_data, "dataset JSONL")->required();
    stats->add_option("--out", stats_out, "directory for stats.json");

    // roi
    auto* roi = app.add_subcommand("roi", "gaze-target RoI from a heatmap file");
    std::string roi_heatmap;
    int roi_w = 0;
    int roi_h = 0;
    double roi_threshold = 0.0;
    std::string roi_out;
    roi->add_option("--heatmap", roi_heatmap, "heatmap file (GVHM)")->required();
    roi->add_option("--width", roi_w, "target image width")->required();
    roi->add_option("--height", roi_h, "target image height")->required();
    roi->add_option("--threshold", roi_threshold, "binarization threshold (default 0)");
    roi->add_option("--out", roi_out, "directory for roi.json");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a bundle on a dataset");
    TrainCli train_cli;
    train_cmd->add_option("--config", train_cli.config_path, "training config JSON");
    train_cmd->add_option("--out", train_cli.out_dir, "run directory (overrides config)");
    train_cmd->add_option("--data", train_cli.data, "dataset JSONL (overrides config)");
    train_cmd->add_option("--regime", train_cli.regime, "full|mapping|adapter_only (overrides config)");
    train_cmd->add_option("--init-checkpoint", train_cli.init_checkpoint, "checkpoint to start from");
    train_cmd->add_option("--alphabet-data", train_cli.alphabet_data,
                          "extra dataset(s) whose text joins the tokenizer alphabet");
    train_cmd->add_option("--epochs", train_cli.epochs, "epochs (overrides config)");
    train_cmd->add_option("--batch", train_cli.batch_size, "batch size (overrides config)");
    train_cmd->add_option("--lr", train_cli.lr, "learning rate (overrides config)");
    train_cmd->add_option("--seed", train_cli.seed, "seed (overrides config)");
    train_cmd->add_option("--checkpoint-every", train_cli.checkpoint_every, "epoch interval for checkpoints");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate trained runs on a test set");
    EvalCli eval_cli;
    eval_cmd->add_option("--run", eval_cli.runs, "run or checkpoint directory (repeatable)")->required();
    eval_cmd->add_option("--data", eval_cli.data, "test set JSONL")->required();
    eval_cmd->add_option("--out", eval_cli.out_dir, "report directory");
    eval_cmd->add_option("--beam", eval_cli.beam, "beam width (default 10)");
    eval_cmd->add_option("--max-new", eval_cli.max_new, "max generated tokens");
    eval_cmd->add_option("--jobs", eval_cli.jobs, "parallel evaluation workers");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "input-ablation evaluation");
    EvalCli ablate_cli;
    ablate_cmd->add_option("--run", ablate_cli.runs, "run or checkpoint directory")->required();
    ablate_cmd->add_option("--data", ablate_cli.data, "test set JSONL")->required();
    ablate_cmd
        ->add_option("--variant", ablate_cli.variant,
                     "drop_image_series|drop_question|image_is_roi_estimated|image_is_roi_gt")
        ->required();
    ablate_cmd->add_option("--out", ablate_cli.out_dir, "report directory");
    ablate_cmd->add_option("--beam", ablate_cli.beam, "beam width");
    ablate_cmd->add_option("--max-new", ablate_cli.max_new, "max generated tokens");
    ablate_cmd->add_option("--jobs", ablate_cli.jobs, "parallel evaluation workers");

    std::vector<const char*> argv;
    argv.push_back("gazevqa");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }

    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            return app.exit(e, out, err);
        }
        if (fix->parsed()) {
            return cmd_fixture(fix_out, fix_spec, out);
        }
        if (stats->parsed()) {
            return cmd_stats(stats_data, stats_out, out);
        }
        if (roi->parsed()) {
            return cmd_roi(roi_heatmap, roi_w, roi_h, roi_threshold, roi_out, out);
        }
        if (train_cmd->parsed()) {
            return cmd_train(train_cli, out);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_cli, "eval", out);
        }
        if (ablate_cmd->parsed()) {
            return cmd_eval(ablate_cli, "ablate", out);
        }
        err << "no subcommand given\n";
        return 2;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace gazevqa
