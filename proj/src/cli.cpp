#include "zoomiq/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "zoomiq/checkpoint.hpp"
#include "zoomiq/dataset.hpp"
#include "zoomiq/evaluate.hpp"
#include "zoomiq/png_io.hpp"
#include "zoomiq/run_config.hpp"
#include "zoomiq/train.hpp"

namespace zoomiq::cli {

namespace {

namespace fs = std::filesystem;

struct SynthArgs {
    std::string out_dir;
    int num_refs = 10;
    int size = 128;
    std::uint64_t seed = 0;
};

struct TrainArgs {
    std::string config_path, train_path, val_path, out_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, batch_size, threads;
    std::optional<double> lambda;
    std::optional<std::string> registry;
};

struct EvalArgs {
    std::string ckpt_path, data_path, report_path, preds_path, config_path;
    bool tta = false;
    int threads = 1;
};

struct AblateArgs {
    std::string data_dir, out_path, config_path;
    int seeds = 3;
};

struct ScoreArgs {
    std::string ckpt_path, image_path;
    bool tta = false;
};

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return parse_run_config(nlohmann::json::object());
    return load_run_config(path);
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    data::SyntheticSpec spec;
    spec.num_refs = a.num_refs;
    spec.image_size = a.size;
    spec.seed = a.seed;
    auto manifest = data::generate_synthetic(spec, a.out_dir);
    auto [train, test] = data::split(manifest, 0.75, a.seed);
    data::write_manifest_csv(train, fs::path(a.out_dir) / "train.csv");
    data::write_manifest_csv(test, fs::path(a.out_dir) / "test.csv");
    out << "wrote " << manifest.size() << " samples (" << train.size() << " train, " << test.size()
        << " test) to " << a.out_dir << "\n";
    return 0;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    auto cfg = load_config_or_default(a.config_path);
    if (a.seed) {
        cfg.seed = *a.seed;
        cfg.train.seed = *a.seed;
    }
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.batch_size) cfg.train.batch_size = *a.batch_size;
    if (a.lambda) cfg.loss.lambda = *a.lambda;
    if (a.registry) {
        cfg.registry_name = *a.registry;
        cfg.has_custom_specs = false;
    }
    if (cfg.train.epochs < 1) throw UsageError("config: train.epochs must be >= 1");
    if (cfg.train.batch_size < 2) throw UsageError("config: train.batch_size must be >= 2");
    if (cfg.loss.lambda < 0.0 || cfg.loss.lambda > 1.0)
        throw UsageError("config: loss.lambda must be in [0, 1]");
    const std::string train_path = a.train_path.empty() ? cfg.train_manifest : a.train_path;
    const std::string val_path = a.val_path.empty() ? cfg.val_manifest : a.val_path;
    if (train_path.empty() || val_path.empty())
        throw UsageError("train: --train and --val manifests are required (flag or config data section)");

    auto registry = cfg.registry();
    auto train_m = data::load_manifest_csv(train_path);
    auto val_m = data::load_manifest_csv(val_path);

    out << "training registry=" << registry.name << " heads=" << registry.num_heads()
        << " epochs=" << cfg.train.epochs << " batch=" << cfg.train.batch_size << " seed=" << cfg.seed
        << "\n";
    out << "config: " << run_config_to_json(cfg).dump() << "\n";

    auto result = training::train(registry, cfg.backbone, cfg.loss, cfg.train, train_m, val_m, &out);
    training::save_checkpoint(result.checkpoint, a.out_path);
    training::write_history_csv(result.history, a.out_path + ".history.csv");
    out << "best_head=" << result.checkpoint.best_head() << "\n";
    out << "wrote " << a.out_path << "\n";
    return 0;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    auto ckpt = training::load_checkpoint(a.ckpt_path);
    auto manifest = data::load_manifest_csv(a.data_path);
    auto cfg = load_config_or_default(a.config_path);

    evaluation::PredSet preds;
    evaluation::MetricReport report;
    if (a.tta) {
        out << "patches per image: " << cfg.tta.patches_per_image() << "\n";
        report = evaluation::evaluate_tta(ckpt, manifest, cfg.tta, &preds, a.threads);
    } else {
        report = evaluation::evaluate_no_tta(ckpt, manifest, &preds, a.threads);
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "srcc=%.4f plcc=%.4f n=%d skipped=%d\n", report.srcc, report.plcc,
                  report.n, report.skipped);
    out << buf;
    if (!a.report_path.empty()) {
        const std::string label =
            training::registry_from_checkpoint(ckpt).name + (a.tta ? "+tta" : "");
        evaluation::write_report_csv({{label, ckpt.seed(), report}}, a.report_path);
        out << "wrote " << a.report_path << "\n";
    }
    if (!a.preds_path.empty()) {
        evaluation::write_pred_csv(preds, a.preds_path);
        out << "wrote " << a.preds_path << "\n";
    }
    return 0;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
    if (a.seeds < 1) throw UsageError("ablate: --seeds must be >= 1");
    auto cfg = load_config_or_default(a.config_path);
    auto train_m = data::load_manifest_csv(fs::path(a.data_dir) / "train.csv");
    auto test_m = data::load_manifest_csv(fs::path(a.data_dir) / "test.csv");

    evaluation::AblationSetup setup;
    setup.seeds.clear();
    for (int s = 1; s <= a.seeds; ++s) setup.seeds.push_back(std::uint64_t(s));
    setup.backbone = cfg.backbone;
    setup.loss = cfg.loss;
    setup.train = cfg.train;
    setup.tta = cfg.tta;

    auto rows = evaluation::ablation_run(train_m, test_m, setup, &out);
    evaluation::write_ablation_table(rows, out);

    std::ofstream table(a.out_path, std::ios::binary);
    if (!table) throw DataError("cannot write table '" + a.out_path + "'");
    evaluation::write_ablation_table(rows, table);
    evaluation::write_ablation_csv(rows, setup.seeds, a.out_path + ".csv");
    out << "wrote " << a.out_path << "\n";

    bool any_ok = false;
    for (const auto& r : rows) any_ok |= !r.failed;
    return any_ok ? 0 : 2;
}

int cmd_score(const ScoreArgs& a, std::ostream& out) {
    auto ckpt = training::load_checkpoint(a.ckpt_path);
    auto image = img::load_image_f32(a.image_path);
    auto model = training::model_from_checkpoint(ckpt);
    double score = 0;
    if (a.tta) {
        aug::TtaConfig cfg;
        auto scorer = evaluation::make_tta_model_scorer(model, training::registry_from_checkpoint(ckpt),
                                                        cfg, ckpt.best_head(), ckpt.mos_mean(),
                                                        ckpt.mos_std());
        score = evaluation::tta_score_image(image, cfg, scorer);
    } else {
        auto scorer =
            evaluation::make_model_scorer(model, ckpt.best_head(), ckpt.mos_mean(), ckpt.mos_std());
        score = scorer(data::SampleRecord{}, image);
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f\n", score);
    out << buf;
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"multi-scale no-reference image quality assessment toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic distortion dataset");
    synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--num-refs", synth.num_refs, "number of reference images");
    synth_cmd->add_option("--size", synth.size, "square image size");
    synth_cmd->add_option("--seed", synth.seed, "generator seed");

    TrainArgs train;
    std::uint64_t train_seed = 0;
    int train_epochs = 0, train_batch = 0, train_threads = 0;
    double train_lambda = 0;
    std::string train_registry;
    auto* train_cmd = app.add_subcommand("train", "train a multi-head model");
    train_cmd->add_option("--config", train.config_path, "run-config JSON");
    train_cmd->add_option("--train", train.train_path, "training manifest CSV");
    train_cmd->add_option("--val", train.val_path, "validation manifest CSV");
    train_cmd->add_option("--out", train.out_path, "checkpoint output path")->required();
    auto* o_seed = train_cmd->add_option("--seed", train_seed, "override config seed");
    auto* o_epochs = train_cmd->add_option("--epochs", train_epochs, "override epochs");
    auto* o_batch = train_cmd->add_option("--batch-size", train_batch, "override batch size");
    auto* o_lambda = train_cmd->add_option("--lambda", train_lambda, "override loss lambda");
    auto* o_registry = train_cmd->add_option("--registry", train_registry, "override registry name");
    train_cmd->add_option("--threads", train_threads,
                          "execution contexts (training always runs single-context)");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    eval_cmd->add_option("--ckpt", eval.ckpt_path, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval.data_path, "manifest CSV")->required();
    eval_cmd->add_option("--config", eval.config_path, "run-config JSON (tta section)");
    eval_cmd->add_flag("--tta", eval.tta, "108-patch test-time augmentation");
    eval_cmd->add_option("--report", eval.report_path, "write metrics CSV here");
    eval_cmd->add_option("--preds", eval.preds_path, "write per-image predictions CSV here");
    eval_cmd->add_option("--threads", eval.threads, "parallel image scoring contexts");

    AblateArgs ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "run the augmentation ablation ladder");
    ablate_cmd->add_option("--data-dir", ablate.data_dir, "directory with train.csv/test.csv")->required();
    ablate_cmd->add_option("--out", ablate.out_path, "table output path")->required();
    ablate_cmd->add_option("--seeds", ablate.seeds, "seed count (seeds 1..N)");
    ablate_cmd->add_option("--config", ablate.config_path, "run-config JSON");

    ScoreArgs score;
    auto* score_cmd = app.add_subcommand("score", "score a single image");
    score_cmd->add_option("--ckpt", score.ckpt_path, "checkpoint path")->required();
    score_cmd->add_option("--image", score.image_path, "image path")->required();
    score_cmd->add_flag("--tta", score.tta, "use test-time augmentation");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    if (*o_seed) train.seed = train_seed;
    if (*o_epochs) train.epochs = train_epochs;
    if (*o_batch) train.batch_size = train_batch;
    if (*o_lambda) train.lambda = train_lambda;
    if (*o_registry) train.registry = train_registry;
    if (train_threads > 0) train.threads = train_threads;

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth, out);
        if (train_cmd->parsed()) return cmd_train(train, out);
        if (eval_cmd->parsed()) return cmd_eval(eval, out);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate, out);
        if (score_cmd->parsed()) return cmd_score(score, out);
        err << "error: no command\n";
        return 1;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericFailure& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

} // namespace zoomiq::cli
