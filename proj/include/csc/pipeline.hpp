#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csc/dataset.hpp"
#include "csc/fov.hpp"
#include "csc/image_io.hpp"
#include "csc/imaging.hpp"
#include "csc/model.hpp"
#include "csc/stats.hpp"
#include "csc/synth.hpp"

namespace csc {

namespace fs = std::filesystem;

struct PipelineConfig {
    int preprocess_size = 299;
    ThresholdPolicy threshold_policy = ThresholdPolicy::fixed(10);
    SplitSpec split;
    AugmentParams augment;
    ModelSpec model;
    TrainConfig train_cfg;
    double eval_threshold = 0.5;
};

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    PipelineConfig cfg;
    if (j.contains("preprocess")) {
        const auto& p = j["preprocess"];
        if (p.contains("size")) cfg.preprocess_size = p["size"].get<int>();
        if (p.contains("threshold")) {
            const auto& t = p["threshold"];
            if (t.is_string() && t == "otsu")
                cfg.threshold_policy = ThresholdPolicy::otsu();
            else
                cfg.threshold_policy = ThresholdPolicy::fixed(t.get<int>());
        }
    }
    if (j.contains("split")) {
        const auto& s = j["split"];
        if (s.contains("ratios")) {
            auto r = s["ratios"].get<std::vector<double>>();
            if (r.size() != 3) throw DataError("split.ratios must have 3 entries");
            cfg.split.train_ratio = r[0];
            cfg.split.val_ratio = r[1];
            cfg.split.test_ratio = r[2];
        }
        if (s.contains("seed")) cfg.split.seed = s["seed"].get<std::uint64_t>();
        if (s.contains("stratified")) cfg.split.stratified = s["stratified"].get<bool>();
    }
    if (j.contains("augment")) {
        const auto& a = j["augment"];
        if (a.contains("rotation_max")) cfg.augment.rotation_max_deg = a["rotation_max"].get<double>();
        if (a.contains("hflip_prob")) cfg.augment.hflip_prob = a["hflip_prob"].get<double>();
        if (a.contains("vflip_prob")) cfg.augment.vflip_prob = a["vflip_prob"].get<double>();
        if (a.contains("scale_range")) {
            auto r = a["scale_range"].get<std::vector<double>>();
            if (r.size() != 2 || r[0] <= 0 || r[0] > r[1])
                throw DataError("augment.scale_range must be a positive [lo, hi]");
            cfg.augment.scale_lo = r[0];
            cfg.augment.scale_hi = r[1];
        }
        if (a.contains("translate_frac")) cfg.augment.translate_frac = a["translate_frac"].get<double>();
        if (a.contains("seed")) cfg.augment.seed = a["seed"].get<std::uint64_t>();
    }
    if (j.contains("model")) cfg.model = j["model"].get<ModelSpec>();
    if (j.contains("train")) {
        const auto& t = j["train"];
        if (t.contains("batch_size")) cfg.train_cfg.batch_size = t["batch_size"].get<int>();
        if (t.contains("max_epochs")) cfg.train_cfg.max_epochs = t["max_epochs"].get<int>();
        if (t.contains("patience")) cfg.train_cfg.patience = t["patience"].get<int>();
        if (t.contains("learning_rate")) cfg.train_cfg.learning_rate = t["learning_rate"].get<double>();
        if (t.contains("seed")) cfg.train_cfg.seed = t["seed"].get<std::uint64_t>();
    }
    if (j.contains("eval") && j["eval"].contains("threshold"))
        cfg.eval_threshold = j["eval"]["threshold"].get<double>();
    cfg.split.validate();
    cfg.train_cfg.validate();
    return cfg;
}

inline std::string cmd_synth(int n_per_class, std::uint64_t seed, const std::string& out_dir) {
    SynthConfig cfg;
    cfg.n_per_class = n_per_class;
    cfg.seed = seed;
    return generate_synthetic(cfg, out_dir);
}

// detect_fov -> masked equalization -> mask -> crop -> resize:
// the standard normalization chain for one image.
inline FundusImage preprocess_image(const FundusImage& img, int size,
                                    ThresholdPolicy policy = {}) {
    Ellipse fov = detect_fov(img, policy);
    BinaryMask inside = ellipse_mask(fov, img.width, img.height);
    FundusImage eq = equalize_color_hue_preserving(img, inside);
    FundusImage masked = mask_outside_ellipse(eq, fov);
    FundusImage cropped = crop_to_ellipse_bbox(masked, fov);
    return resize_bilinear(cropped, size, size);
}

struct PreprocessSummary {
    int processed = 0;
    int skipped = 0;
    std::string out_manifest;
};

inline PreprocessSummary cmd_preprocess(const std::string& manifest_path,
                                        const std::string& out_dir, int size = 299,
                                        ThresholdPolicy policy = {},
                                        std::ostream& diag = std::cerr) {
    auto samples = load_manifest(manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();
    fs::create_directories(out_dir);
    std::vector<Sample> out_samples;
    PreprocessSummary summary;
    for (const auto& s : samples) {
        try {
            FundusImage img = read_image((base / s.path).string());
            FundusImage processed = preprocess_image(img, size, policy);
            std::string out_name = fs::path(s.path).filename().string();
            write_image(processed, (fs::path(out_dir) / out_name).string());
            out_samples.push_back({out_name, s.label, s.split});
            ++summary.processed;
        } catch (const std::exception& e) {
            diag << "skipping " << s.path << ": " << e.what() << "\n";
            ++summary.skipped;
        }
    }
    if (summary.processed == 0) throw DataError("all images failed preprocessing");
    summary.out_manifest = (fs::path(out_dir) / "manifest.csv").string();
    save_manifest(out_samples, summary.out_manifest);
    return summary;
}

inline std::string cmd_split(const std::string& manifest_path, const SplitSpec& spec,
                             bool respect_existing = false, std::string out_path = "") {
    auto samples = load_manifest(manifest_path);
    if (out_path.empty()) out_path = manifest_path;
    bool all_assigned = !samples.empty() &&
                        std::all_of(samples.begin(), samples.end(),
                                    [](const Sample& s) { return s.split != Split::Unassigned; });
    if (!(respect_existing && all_assigned)) samples = split_dataset(std::move(samples), spec);
    save_manifest(samples, out_path);
    return out_path;
}

namespace detail {

inline std::vector<TrainExample> load_split(const std::vector<Sample>& samples,
                                            const fs::path& base, Split which) {
    std::vector<TrainExample> out;
    for (const auto& s : samples) {
        if (s.split != which) continue;
        out.push_back({read_image((base / s.path).string()), s.label});
    }
    return out;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

inline TrainResult cmd_train(const std::string& manifest_path, const PipelineConfig& cfg,
                             const std::string& model_out, const std::string& history_out) {
    auto samples = load_manifest(manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();
    auto train_set = detail::load_split(samples, base, Split::Train);
    auto val_set = detail::load_split(samples, base, Split::Val);
    if (train_set.empty()) throw DataError("manifest has no train split");
    if (val_set.empty()) throw DataError("manifest has no val split");

    TrainResult result = train(cfg.model, train_set, val_set, cfg.train_cfg, &cfg.augment);
    save_model(result.params, cfg.model, model_out);

    std::ofstream hist(history_out, std::ios::binary);
    if (!hist) throw DataError("cannot write history: " + history_out);
    hist << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& e : result.history)
        hist << e.epoch << "," << detail::format_double(e.train_loss) << ","
             << detail::format_double(e.train_acc) << "," << detail::format_double(e.val_loss)
             << "," << detail::format_double(e.val_acc) << "\n";
    return result;
}

// Rater file: CSV `case_id,label`, case_id matching the manifest path.
inline std::map<std::string, int> load_rater_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open rater file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty rater file: " + path);
    if (auto f = detail::split_csv_line(line); f.size() != 2 || f[0] != "case_id" || f[1] != "label")
        throw DataError("rater file header must be 'case_id,label'");
    std::map<std::string, int> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 2 || (f[1] != "0" && f[1] != "1"))
            throw DataError("malformed rater row at line " + std::to_string(line_no) + " in " + path);
        out[f[0]] = f[1] == "1" ? 1 : 0;
    }
    return out;
}

inline void write_scores_csv(const std::vector<std::string>& ids,
                             const std::vector<double>& scores, const std::vector<int>& labels,
                             const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write scores: " + path);
    out << "case_id,score,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
        out << ids[i] << "," << detail::format_double(scores[i]) << "," << labels[i] << "\n";
}

inline void write_roc_csv(const RocCurve& curve, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write ROC csv: " + path);
    out << "fpr,tpr,threshold\n";
    for (const auto& p : curve.points)
        out << detail::format_double(p.fpr) << "," << detail::format_double(p.tpr) << ","
            << detail::format_double(p.threshold) << "\n";
}

struct EvalInputs {
    std::vector<std::string> case_ids;
    std::vector<double> scores;
    std::vector<int> truth;
};

inline EvalInputs score_test_split(const std::string& model_path,
                                   const std::string& manifest_path) {
    auto [params, spec] = load_model(model_path);
    auto samples = load_manifest(manifest_path);
    fs::path base = fs::path(manifest_path).parent_path();
    EvalInputs ev;
    for (const auto& s : samples) {
        if (s.split != Split::Test) continue;
        FundusImage img = read_image((base / s.path).string());
        ev.case_ids.push_back(s.path);
        ev.scores.push_back(predict(spec, params, img));
        ev.truth.push_back(s.label);
    }
    if (ev.case_ids.empty()) throw DataError("manifest has no test split");
    return ev;
}

// Scores file alternative to a model: CSV `case_id,score,label`.
inline EvalInputs load_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scores file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty scores file: " + path);
    if (auto f = detail::split_csv_line(line);
        f.size() != 3 || f[0] != "case_id" || f[1] != "score" || f[2] != "label")
        throw DataError("scores file header must be 'case_id,score,label'");
    EvalInputs ev;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 3) throw DataError("malformed scores row at line " + std::to_string(line_no));
        ev.case_ids.push_back(f[0]);
        ev.scores.push_back(std::stod(f[1]));
        if (f[2] != "0" && f[2] != "1")
            throw DataError("label must be 0 or 1 at line " + std::to_string(line_no));
        ev.truth.push_back(f[2] == "1" ? 1 : 0);
    }
    return ev;
}

inline nlohmann::json cmd_eval(const EvalInputs& ev,
                               const std::vector<std::pair<std::string, std::string>>& rater_files,
                               double threshold, const std::string& report_out,
                               const std::string& roc_out = "") {
    std::vector<RaterSet> raters;
    for (const auto& [name, path] : rater_files) {
        auto by_id = load_rater_file(path);
        RaterSet rs;
        rs.name = name;
        for (const auto& id : ev.case_ids) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw DataError("rater file " + path + " missing case " + id);
            rs.labels.push_back(it->second);
        }
        raters.push_back(std::move(rs));
    }
    nlohmann::json report = evaluation_report(ev.scores, ev.truth, raters, threshold);
    if (!report_out.empty()) {
        std::ofstream out(report_out, std::ios::binary);
        if (!out) throw DataError("cannot write report: " + report_out);
        out << report.dump(2) << "\n";
    }
    if (!roc_out.empty()) {
        std::vector<ScoredCase> cases(ev.truth.size());
        for (std::size_t i = 0; i < ev.truth.size(); ++i) cases[i] = {ev.scores[i], ev.truth[i]};
        write_roc_csv(roc_curve(cases), roc_out);
    }
    return report;
}

inline double infer_image(const ModelSpec& spec, const ModelParams& params,
                          const std::string& image_path, ThresholdPolicy policy = {}) {
    FundusImage img = read_image(image_path);
    FundusImage processed = preprocess_image(img, spec.input_size, policy);
    return predict(spec, params, processed);
}

}  // namespace csc
