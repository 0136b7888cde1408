#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "dermforge/dataset.hpp"
#include "dermforge/gradcheck.hpp"
#include "dermforge/io_util.hpp"
#include "dermforge/metrics.hpp"
#include "dermforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace dermforge;

namespace {

struct AnalyzeArgs {
    std::string metadata;
    std::string facet = "dx";
    std::string out;
};

int cmd_analyze(const AnalyzeArgs& a) {
    auto records = load_metadata(a.metadata);
    CountTable table = tabulate(records, facet_from_string(a.facet));

    if (a.facet == "dx") {
        int64_t nv = 0;
        for (const auto& [key, count] : table.rows)
            if (key == std::string(kClassCodes[kNvIndex])) nv = count;
        const double frac = table.total() ? static_cast<double>(nv) / table.total() : 0.0;
        std::printf("%lld records; %s fraction %.4f\n", static_cast<long long>(records.size()),
                    std::string(kClassCodes[kNvIndex]).c_str(), frac);
    }
    if (a.out.empty()) {
        std::fputs(table.to_csv().c_str(), stdout);
    } else {
        atomic_write_file(a.out, table.to_csv());
        std::printf("wrote %s\n", a.out.c_str());
    }
    return 0;
}

struct TrainArgs {
    std::vector<std::string> data_dirs;
    std::string metadata;
    std::string out = ".";
    TrainConfig config;
    std::string class_weights = "paper";
    bool no_augment = false;
};

void write_eval_outputs(const EvalResult& eval, const std::string& out_dir) {
    atomic_write_file((fs::path(out_dir) / "report.txt").string(), render_report(eval.report));
    atomic_write_file((fs::path(out_dir) / "report.kv").string(), report_keyvalues(eval.report));
    atomic_write_file((fs::path(out_dir) / "roc.csv").string(), roc_csv(eval.roc));
}

int cmd_train(TrainArgs& a) {
    a.config.paper_class_weights = a.class_weights == "paper";
    a.config.augment_enabled = !a.no_augment;
    fs::create_directories(a.out);
    a.config.checkpoint_path = (fs::path(a.out) / "checkpoint.dfn").string();
    a.config.epoch_observer = [](const EpochRecord& r) {
        std::printf("epoch %3d  train loss %.4f acc %.4f | val loss %.4f acc %.4f | lr %g (%.1fs)\n",
                    r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.learning_rate,
                    r.wall_time_sec);
        std::fflush(stdout);
    };

    Dataset dataset = build_dataset(a.metadata, a.data_dirs, a.config.val_fraction, a.config.seed);
    std::printf("dataset: %zu samples, %zu train / %zu val\n", dataset.samples.size(),
                dataset.train_idx.size(), dataset.val_idx.size());

    TrainResult result = train(a.config, dataset);
    write_history_csv(result.history, (fs::path(a.out) / "history.csv").string());
    write_history_svg(result.history, (fs::path(a.out) / "history.svg").string());

    EvalResult eval = evaluate(result.best, dataset, Split::val);
    write_eval_outputs(eval, a.out);
    std::printf("\nbest validation loss %.6f; final validation report:\n%s", result.best.best_val_loss,
                render_report(eval.report).c_str());
    std::printf("artifacts written to %s\n", a.out.c_str());
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::vector<std::string> data_dirs;
    std::string metadata;
    std::string split = "val";
    std::string out = ".";
};

int cmd_eval(const EvalArgs& a) {
    Checkpoint cp = load_checkpoint(a.checkpoint);
    Dataset dataset = build_dataset(a.metadata, a.data_dirs, snapshot_val_fraction(cp.config_snapshot),
                                    snapshot_seed(cp.config_snapshot));
    EvalResult eval = evaluate(cp, dataset, a.split == "val" ? Split::val : Split::train);
    std::printf("%s split, unweighted cross-entropy loss %.6f\n\n%s", a.split.c_str(), eval.loss,
                render_report(eval.report).c_str());
    fs::create_directories(a.out);
    write_eval_outputs(eval, a.out);
    std::printf("report.kv / report.txt / roc.csv written to %s\n", a.out.c_str());
    return 0;
}

struct PredictArgs {
    std::string checkpoint;
    std::vector<std::string> images;
};

int cmd_predict(const PredictArgs& a) {
    Checkpoint cp = load_checkpoint(a.checkpoint);
    bool any_failed = false;
    for (const auto& path : a.images) {
        try {
            Prediction p = predict(cp, path);
            std::printf("%s  %s (%s)  probs:", path.c_str(),
                        std::string(kClassCodes[p.label]).c_str(),
                        std::string(kClassNames[p.label]).c_str());
            for (int j = 0; j < kNumClasses; ++j)
                std::printf(" %s=%.4f", std::string(kClassCodes[j]).c_str(), p.probs[j]);
            std::printf("\n");
        } catch (const std::exception& e) {
            std::fprintf(stderr, "%s: %s\n", path.c_str(), e.what());
            any_failed = true;
        }
    }
    return any_failed ? 1 : 0;
}

struct GradcheckArgs {
    std::string layers = "all";
    double tolerance = 1e-4;
    double step = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    set_checked_mode(true);
    auto cases = run_gradient_checks(a.layers, a.tolerance, a.step);
    bool all_pass = true;
    for (const auto& c : cases) {
        std::printf("%-26s max rel err %.3e over %d values  %s\n", c.name.c_str(), c.max_rel_err,
                    c.checked_values, c.pass ? "ok" : "FAIL");
        all_pass = all_pass && c.pass;
    }
    if (!all_pass) {
        std::fprintf(stderr, "gradient check failed at tolerance %g\n", a.tolerance);
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dermforge: from-scratch CNN trainer and evaluator for 7-class skin-lesion images"};
    app.require_subcommand(1);

    AnalyzeArgs analyze_args;
    auto* analyze = app.add_subcommand("analyze", "Tabulate metadata facets");
    analyze->add_option("--metadata", analyze_args.metadata, "Metadata csv path")->required();
    analyze->add_option("--facet", analyze_args.facet, "Facet to count")
        ->default_val("dx")
        ->check(CLI::IsMember({"dx", "dx_type", "localization", "age_by_dx"}));
    analyze->add_option("--out", analyze_args.out, "Output csv path (default: stdout)");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train the classifier");
    train_cmd->add_option("--data-dir", train_args.data_dirs, "Image directory (repeatable)")->required();
    train_cmd->add_option("--metadata", train_args.metadata, "Metadata csv path")->required();
    train_cmd->add_option("--seed", train_args.config.seed, "Random seed")->default_val(42);
    train_cmd->add_option("--epochs", train_args.config.epochs, "Training epochs")
        ->default_val(50)
        ->check(CLI::Range(1, 1000000));
    train_cmd->add_option("--batch-size", train_args.config.batch_size, "Batch size")
        ->default_val(90)
        ->check(CLI::Range(1, 1000000));
    train_cmd->add_option("--lr", train_args.config.initial_lr, "Initial learning rate")->default_val(0.001);
    train_cmd->add_option("--val-fraction", train_args.config.val_fraction, "Validation fraction")
        ->default_val(0.1)
        ->check(CLI::Range(1e-9, 0.999999));
    train_cmd->add_option("--class-weights", train_args.class_weights, "Loss weighting scheme")
        ->default_val("paper")
        ->check(CLI::IsMember({"paper", "uniform"}));
    train_cmd->add_flag("--no-augment", train_args.no_augment, "Disable training-time augmentation");
    train_cmd->add_option("--patience", train_args.config.scheduler.patience,
                          "Epochs without improvement before decaying the lr")
        ->default_val(3);
    train_cmd->add_option("--min-delta", train_args.config.scheduler.min_delta,
                          "Improvement threshold on validation loss")
        ->default_val(1e-4);
    train_cmd->add_option("--min-lr", train_args.config.scheduler.min_lr, "Learning-rate floor")
        ->default_val(1e-5);
    train_cmd->add_option("--aug-rotation", train_args.config.augment.max_rotation_deg,
                          "Max rotation in degrees")
        ->default_val(15.0);
    train_cmd->add_option("--aug-brightness", train_args.config.augment.brightness_delta,
                          "Max additive brightness shift")
        ->default_val(0.1);
    train_cmd->add_option("--aug-zoom", train_args.config.augment.zoom_max, "Max center zoom fraction")
        ->default_val(0.1);
    train_cmd->add_option("--out", train_args.out, "Output directory")->default_val(".");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint path")->required();
    eval_cmd->add_option("--data-dir", eval_args.data_dirs, "Image directory (repeatable)")->required();
    eval_cmd->add_option("--metadata", eval_args.metadata, "Metadata csv path")->required();
    eval_cmd->add_option("--split", eval_args.split, "Split to evaluate")
        ->default_val("val")
        ->check(CLI::IsMember({"val", "train"}));
    eval_cmd->add_option("--out", eval_args.out, "Output directory")->default_val(".");

    PredictArgs predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "Classify image files");
    predict_cmd->add_option("--checkpoint", predict_args.checkpoint, "Checkpoint path")->required();
    predict_cmd->add_option("images", predict_args.images, "Image files")->required();

    GradcheckArgs grad_args;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference verification of all gradients");
    grad_cmd->add_option("--layers", grad_args.layers, "all or a layer family")
        ->default_val("all")
        ->check(CLI::IsMember(
            {"all", "conv2d", "maxpool", "batchnorm", "dropout", "dense", "softmax", "loss", "model"}));
    grad_cmd->add_option("--tolerance", grad_args.tolerance, "Max allowed relative error")->default_val(1e-4);
    grad_cmd->add_option("--step", grad_args.step, "Finite-difference step")->default_val(1e-5);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\nRun with --help for usage.\n", e.what());
        return 2;
    }

    try {
        if (*analyze) return cmd_analyze(analyze_args);
        if (*train_cmd) return cmd_train(train_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*predict_cmd) return cmd_predict(predict_args);
        if (*grad_cmd) return cmd_gradcheck(grad_args);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
