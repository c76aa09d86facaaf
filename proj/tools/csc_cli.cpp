// Command-line front end for the CSC screening pipeline:
//   synth | preprocess | split | train | eval | infer
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csc/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

struct CommonOpts {
    std::string config_path;
    bool seed_set = false;
    std::uint64_t seed = 0;
};

csc::PipelineConfig resolve_config(const CommonOpts& common) {
    csc::PipelineConfig cfg;
    if (!common.config_path.empty()) cfg = csc::load_pipeline_config(common.config_path);
    if (common.seed_set) {
        cfg.split.seed = common.seed;
        cfg.train_cfg.seed = common.seed;
        cfg.augment.seed = common.seed;
    }
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& common) {
    cmd->add_option("--config", common.config_path, "Pipeline config JSON file");
    cmd->add_option("--seed", common.seed, "Seed override for split/train/augment")
        ->each([&common](const std::string&) { common.seed_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CSC fundus screening pipeline"};
    app.require_subcommand(1);

    CommonOpts common;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
    int synth_n = 100;
    std::string synth_out;
    synth->add_option("--n", synth_n, "Images per class")->check(CLI::PositiveNumber);
    synth->add_option("--out", synth_out, "Output directory")->required();
    add_common(synth, common);

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "FOV detect, equalize, crop, resize");
    std::string pre_manifest, pre_out, pre_threshold;
    int pre_size = 0;
    preprocess->add_option("--manifest", pre_manifest, "Input manifest CSV")->required();
    preprocess->add_option("--out", pre_out, "Output directory")->required();
    preprocess->add_option("--size", pre_size, "Output square size (default 299)");
    preprocess->add_option("--threshold", pre_threshold, "Foreground threshold: integer or 'otsu'");
    add_common(preprocess, common);

    // split
    auto* split = app.add_subcommand("split", "Assign train/val/test splits");
    std::string split_manifest, split_out;
    std::vector<double> split_ratios;
    bool respect_existing = false;
    bool no_stratify = false;
    split->add_option("--manifest", split_manifest, "Manifest CSV")->required();
    split->add_option("--out", split_out, "Output manifest (default: in place)");
    split->add_option("--ratios", split_ratios, "train val test ratios")->expected(3);
    split->add_flag("--respect-existing", respect_existing, "Keep fully assigned splits");
    split->add_flag("--no-stratify", no_stratify, "Disable per-class stratification");
    add_common(split, common);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the classifier");
    std::string train_manifest, model_out, history_out;
    int input_size = 0;
    train_cmd->add_option("--manifest", train_manifest, "Manifest with splits")->required();
    train_cmd->add_option("--model-out", model_out, "Model file path")->required();
    train_cmd->add_option("--history-out", history_out, "Per-epoch history CSV")->required();
    train_cmd->add_option("--input-size", input_size, "Model input size (must match images)");
    add_common(train_cmd, common);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate on the test split");
    std::string eval_model, eval_manifest, eval_scores, report_out, roc_out;
    std::vector<std::string> rater_paths;
    double eval_threshold = -1;
    eval_cmd->add_option("--model", eval_model, "Trained model file");
    eval_cmd->add_option("--manifest", eval_manifest, "Manifest with a test split");
    eval_cmd->add_option("--scores", eval_scores, "Precomputed scores CSV instead of a model");
    eval_cmd->add_option("--rater", rater_paths, "Rater CSV file (repeatable)");
    eval_cmd->add_option("--threshold", eval_threshold, "Decision threshold (default 0.5)");
    eval_cmd->add_option("--report-out", report_out, "Report JSON path")->required();
    eval_cmd->add_option("--roc-out", roc_out, "ROC points CSV path");
    add_common(eval_cmd, common);

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "Per-image CSC probability");
    std::string infer_model;
    std::vector<std::string> infer_images;
    infer_cmd->add_option("--model", infer_model, "Trained model file")->required();
    infer_cmd->add_option("images", infer_images, "Image files")->required();
    add_common(infer_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        csc::PipelineConfig cfg = resolve_config(common);

        if (synth->parsed()) {
            std::uint64_t seed = common.seed_set ? common.seed : 0;
            std::string manifest = csc::cmd_synth(synth_n, seed, synth_out);
            std::cout << manifest << "\n";
            return kExitOk;
        }

        if (preprocess->parsed()) {
            if (pre_size > 0) cfg.preprocess_size = pre_size;
            if (!pre_threshold.empty())
                cfg.threshold_policy = pre_threshold == "otsu"
                                           ? csc::ThresholdPolicy::otsu()
                                           : csc::ThresholdPolicy::fixed(std::stoi(pre_threshold));
            auto summary = csc::cmd_preprocess(pre_manifest, pre_out, cfg.preprocess_size,
                                               cfg.threshold_policy);
            std::cerr << "processed " << summary.processed << ", skipped " << summary.skipped << "\n";
            std::cout << summary.out_manifest << "\n";
            return kExitOk;
        }

        if (split->parsed()) {
            if (!split_ratios.empty()) {
                cfg.split.train_ratio = split_ratios[0];
                cfg.split.val_ratio = split_ratios[1];
                cfg.split.test_ratio = split_ratios[2];
            }
            if (no_stratify) cfg.split.stratified = false;
            cfg.split.validate();
            std::cout << csc::cmd_split(split_manifest, cfg.split, respect_existing, split_out)
                      << "\n";
            return kExitOk;
        }

        if (train_cmd->parsed()) {
            if (input_size > 0) cfg.model.input_size = input_size;
            auto result = csc::cmd_train(train_manifest, cfg, model_out, history_out);
            std::cerr << "best epoch " << result.best_epoch << ", val loss "
                      << result.best_val_loss << "\n";
            std::cout << model_out << "\n";
            return kExitOk;
        }

        if (eval_cmd->parsed()) {
            if (eval_threshold >= 0) cfg.eval_threshold = eval_threshold;
            csc::EvalInputs ev;
            if (!eval_scores.empty()) {
                ev = csc::load_scores_csv(eval_scores);
            } else {
                if (eval_model.empty() || eval_manifest.empty())
                    throw CLI::ValidationError("eval", "need --scores or both --model and --manifest");
                ev = csc::score_test_split(eval_model, eval_manifest);
            }
            std::vector<std::pair<std::string, std::string>> raters;
            for (std::size_t i = 0; i < rater_paths.size(); ++i)
                raters.emplace_back("rater" + std::to_string(i + 1), rater_paths[i]);
            auto report = csc::cmd_eval(ev, raters, cfg.eval_threshold, report_out, roc_out);
            std::cout << "auc," << report["model"]["auc"].get<double>() << "\n";
            std::cout << "accuracy," << report["model"]["accuracy"].get<double>() << "\n";
            return kExitOk;
        }

        if (infer_cmd->parsed()) {
            auto [params, spec] = csc::load_model(infer_model);
            bool any_failed = false, any_ok = false;
            for (const auto& path : infer_images) {
                try {
                    double p = csc::infer_image(spec, params, path, cfg.threshold_policy);
                    std::cout << path << "," << p << "\n";
                    any_ok = true;
                } catch (const std::exception& e) {
                    std::cout << path << ",error\n";
                    std::cerr << path << ": " << e.what() << "\n";
                    any_failed = true;
                }
            }
            return any_failed ? kExitData : (any_ok ? kExitOk : kExitData);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const csc::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const csc::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const csc::ImageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const csc::FitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitUsage;
}
