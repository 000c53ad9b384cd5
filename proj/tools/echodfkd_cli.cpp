// echodfkd: phantom generation, distillation, and evaluation pipeline.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "echodfkd/annotator_bounds.hpp"
#include "echodfkd/csv.hpp"
#include "echodfkd/distill.hpp"
#include "echodfkd/image_io.hpp"
#include "echodfkd/lvm_eval.hpp"
#include "echodfkd/phantom.hpp"
#include "echodfkd/phase_detect.hpp"
#include "echodfkd/scaling_laws.hpp"
#include "echodfkd/seg_metrics.hpp"

using json = nlohmann::json;
using namespace echodfkd;

namespace {

constexpr const char* kVersion = "0.1.0";

uint64_t fnv1a(const std::string& s, uint64_t seed) {
    uint64_t h = 14695981039346656037ull ^ seed;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

// all randomness flows from --seed; sub-seeds are stable hashes
uint64_t sub_seed(uint64_t seed, const std::string& subcommand,
                  const std::string& key = "") {
    return fnv1a(subcommand + '\x1f' + key, seed);
}

struct Paths {
    std::string data_dir = "data";
    std::string cache_dir = "cache";
    std::string out_dir = "out";
};

struct EvalOpts {
    std::string policy = "full";
    std::string scorer = "mock";
    int dilation_px = 5;
    int prepad_frames = 0;
};

struct RunConfig {
    Paths paths;
    ModelConfig model;
    TrainingConfig training;
    EvalOpts eval;
    uint64_t seed = 0;
    std::string raw;  // dump used for the config hash
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) {
        rc.raw = "{}";
        return rc;
    }
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    if (j.value("schema_version", 1) != 1)
        throw ConfigError("unsupported schema_version");
    if (j.contains("paths")) {
        const json& p = j["paths"];
        rc.paths.data_dir = p.value("data_dir", rc.paths.data_dir);
        rc.paths.cache_dir = p.value("cache_dir", rc.paths.cache_dir);
        rc.paths.out_dir = p.value("out_dir", rc.paths.out_dir);
    }
    if (j.contains("model"))
        rc.model = model_config_from_json_string(j["model"].dump());
    if (j.contains("training")) {
        const json& t = j["training"];
        if (t.contains("loss"))
            rc.training.loss = loss_kind_from_string(t["loss"].get<std::string>());
        rc.training.learning_rate = t.value("learning_rate", rc.training.learning_rate);
        rc.training.momentum = t.value("momentum", rc.training.momentum);
        rc.training.decay_factor = t.value("decay_factor", rc.training.decay_factor);
        rc.training.decay_at_fraction =
            t.value("decay_at_fraction", rc.training.decay_at_fraction);
        rc.training.batch_size = t.value("batch_size", rc.training.batch_size);
        rc.training.sequence_length =
            t.value("sequence_length", rc.training.sequence_length);
        rc.training.max_epochs = t.value("max_epochs", rc.training.max_epochs);
        rc.training.clips_per_epoch =
            t.value("clips_per_epoch", rc.training.clips_per_epoch);
        rc.training.val_window = t.value("val_window", rc.training.val_window);
    }
    if (j.contains("evaluation")) {
        const json& e = j["evaluation"];
        rc.eval.policy = e.value("policy", rc.eval.policy);
        rc.eval.scorer = e.value("scorer", rc.eval.scorer);
        rc.eval.dilation_px = e.value("dilation_px", rc.eval.dilation_px);
        rc.eval.prepad_frames = e.value("prepad_frames", rc.eval.prepad_frames);
    }
    rc.seed = j.value("seed", rc.seed);
    rc.raw = j.dump();
    return rc;
}

std::string resolve_out_dir(const std::string& flag_value) {
    if (const char* env = std::getenv("ECHODFKD_OUT"); env && *env) return env;
    return flag_value;
}

void write_run_manifest(const std::filesystem::path& out_dir,
                        const std::string& subcommand, const json& inputs,
                        const std::string& config_text, uint64_t seed) {
    json m{{"subcommand", subcommand},
           {"schema_version", 1},
           {"version", kVersion},
           {"seed", seed},
           {"inputs", inputs},
           {"config_hash", fnv1a(config_text, 0)}};
    atomic_write(out_dir / (subcommand + "_run_manifest.json"), m.dump(2) + "\n");
}

EvalPolicy parse_policy(const std::string& s) {
    if (s == "full") return EvalPolicy::FULL;
    if (s == "exclude-corrupted") return EvalPolicy::EXCLUDE_CORRUPTED;
    throw ConfigError("unknown policy '" + s + "'");
}

// ---- phantom-gen ----

int cmd_phantom_gen(const RunConfig& rc, int n_train, int n_val, int n_test,
                    int t, int hw, double period, double amplitude,
                    double noise_std, double fps, uint64_t seed,
                    const std::string& out_dir_flag) {
    std::filesystem::path data_dir = rc.paths.data_dir;
    std::filesystem::path out_dir = resolve_out_dir(out_dir_flag);

    DatasetManifest manifest;
    int idx = 0;
    auto gen_split = [&](Split split, int count) {
        for (int i = 0; i < count; ++i, ++idx) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "phantom_%04d", idx);
            std::string id = idbuf;
            std::mt19937_64 rng(sub_seed(seed, "phantom-gen", id));
            std::uniform_real_distribution<double> u01(0.0, 1.0);

            PhantomParams p;
            p.t = t;
            p.h = p.w = hw;
            p.cx = p.cy = hw / 2.0;
            p.period_frames = period * (0.8 + 0.4 * u01(rng));
            p.amplitude = amplitude * (0.8 + 0.4 * u01(rng));
            p.phase = 2.0 * 3.14159265358979323846 * u01(rng);
            p.noise_std = noise_std;
            p.seed = rng();

            PhantomClip pc = generate_phantom(p, id, fps);
            save_clip(pc.clip, data_dir);
            save_binary_masks(pc.ground_truth, data_dir / "gt");

            ManifestRecord rec;
            rec.clip_id = id;
            rec.split = split;
            rec.fps = fps;
            rec.num_frames = t;
            rec.labels = pc.labels;
            manifest.records.push_back(std::move(rec));
        }
    };
    gen_split(Split::TRAIN, n_train);
    gen_split(Split::VAL, n_val);
    gen_split(Split::TEST, n_test);
    save_manifest(manifest, data_dir / "manifest");

    write_run_manifest(out_dir, "phantom-gen",
                       json{{"data_dir", data_dir.string()},
                            {"train", n_train},
                            {"val", n_val},
                            {"test", n_test},
                            {"t", t},
                            {"hw", hw}},
                       rc.raw, seed);
    std::cout << json{{"clips", idx}, {"data_dir", data_dir.string()}}.dump()
              << "\n";
    return 0;
}

// ---- pseudolabel ----

int cmd_pseudolabel(const RunConfig& rc, const std::string& gt_dir_flag,
                    uint64_t seed, const std::string& out_dir_flag) {
    std::filesystem::path data_dir = rc.paths.data_dir;
    std::filesystem::path gt_dir =
        gt_dir_flag.empty() ? data_dir / "gt" : std::filesystem::path(gt_dir_flag);
    std::filesystem::path out_dir = resolve_out_dir(out_dir_flag);

    DatasetManifest manifest = load_manifest(data_dir / "manifest");
    AnalyticPhantomTeacher teacher(gt_dir, sub_seed(seed, "pseudolabel"));
    PseudoLabelResult res =
        generate_pseudolabels(teacher, manifest, data_dir, rc.paths.cache_dir);

    std::string skips = "clip_id,error\n";
    for (const auto& [id, err] : res.skip_list)
        skips += join_csv_row({id, err});
    atomic_write(out_dir / "pseudolabel_skiplist.csv", skips);
    write_run_manifest(out_dir, "pseudolabel",
                       json{{"data_dir", data_dir.string()},
                            {"gt_dir", gt_dir.string()},
                            {"store_dir", res.store_dir.string()}},
                       rc.raw, seed);
    std::cout << json{{"generated", res.generated},
                      {"skipped_existing", res.skipped_existing},
                      {"skipped_failed", res.skip_list.size()},
                      {"store_dir", res.store_dir.string()}}
                     .dump()
              << "\n";
    return 0;
}

// ---- train ----

int cmd_train(RunConfig rc, const std::string& labels_dir_flag, uint64_t seed,
              const std::string& out_dir_flag) {
    std::filesystem::path data_dir = rc.paths.data_dir;
    std::filesystem::path out_dir = resolve_out_dir(out_dir_flag);
    std::filesystem::path labels_dir =
        labels_dir_flag.empty()
            ? std::filesystem::path(rc.paths.cache_dir) / "analytic-phantom-v1"
            : std::filesystem::path(labels_dir_flag);

    DatasetManifest manifest = load_manifest(data_dir / "manifest");
    rc.training.seed = sub_seed(seed, "train");
    TrainResult result =
        train(rc.model, labels_dir, manifest, data_dir, rc.training);

    CalibrationResult cal = calibrate_threshold(
        result.model, rc.model, manifest, labels_dir, data_dir,
        rc.eval.prepad_frames);
    rc.model.threshold = cal.threshold;

    CheckpointMeta meta;
    meta.config = rc.model;
    meta.seed = rc.training.seed;
    meta.epoch = result.history.best_epoch;
    meta.val_loss = result.history.val_loss[result.history.best_epoch];
    save_checkpoint(out_dir / "student.ckpt", result.model, meta);
    atomic_write(out_dir / "training_history.csv", result.history.to_csv());

    write_run_manifest(out_dir, "train",
                       json{{"data_dir", data_dir.string()},
                            {"labels_dir", labels_dir.string()},
                            {"family", rc.model.family_name()},
                            {"epochs", rc.training.max_epochs}},
                       rc.raw, seed);
    std::cout << json{{"best_epoch", result.history.best_epoch},
                      {"val_loss", meta.val_loss},
                      {"threshold", cal.threshold},
                      {"calibration_dice", cal.best_dice},
                      {"param_count", param_count(rc.model)},
                      {"checkpoint", (out_dir / "student.ckpt").string()}}
                     .dump()
              << "\n";
    return 0;
}

// ---- prediction helper shared by eval-seg / eval-afd ----

std::filesystem::path materialize_predictions(
    const std::string& checkpoint, const std::string& pred_dir_flag,
    const DatasetManifest& manifest, const std::filesystem::path& data_dir,
    const std::filesystem::path& out_dir, int prepad_frames, Split split,
    bool all_splits) {
    if (!pred_dir_flag.empty()) return pred_dir_flag;
    if (checkpoint.empty())
        throw ConfigError("need --pred-dir or --checkpoint");
    auto [model, meta] = load_checkpoint(checkpoint);
    std::filesystem::path pred_dir = out_dir / "pred_masks";
    for (const auto& rec : manifest.records) {
        if (!all_splits && rec.split != split) continue;
        VideoClip clip = load_clip(data_dir, rec.clip_id, rec.fps);
        SoftMaskSequence soft = forward(model, meta.config, clip, prepad_frames);
        BinaryMaskSequence hard =
            soft.threshold(static_cast<float>(meta.config.threshold));
        save_binary_masks(hard, pred_dir);
    }
    return pred_dir;
}

// ---- eval-seg ----

int cmd_eval_seg(const RunConfig& rc, const std::string& pred_dir_flag,
                 const std::string& checkpoint, const std::string& ref_dir_flag,
                 const std::string& split_flag, const std::string& out_dir_flag,
                 uint64_t seed) {
    std::filesystem::path data_dir = rc.paths.data_dir;
    std::filesystem::path out_dir = resolve_out_dir(out_dir_flag);
    DatasetManifest manifest = load_manifest(data_dir / "manifest");

    bool all_splits = split_flag == "all";
    Split split = all_splits ? Split::TEST : split_from_string(split_flag);
    if (!all_splits) {
        DatasetManifest filtered;
        filtered.corrupted = manifest.corrupted;
        for (const auto& rec : manifest.records)
            if (rec.split == split) filtered.records.push_back(rec);
        manifest = std::move(filtered);
    }

    std::filesystem::path ref_dir =
        ref_dir_flag.empty() ? data_dir / "gt" : std::filesystem::path(ref_dir_flag);
    std::filesystem::path pred_dir = materialize_predictions(
        checkpoint, pred_dir_flag, manifest, data_dir, out_dir,
        rc.eval.prepad_frames, split, all_splits);

    SegScoreReport report = evaluate_segmentation(pred_dir, ref_dir, manifest,
                                                  parse_policy(rc.eval.policy));

    std::string csv = "clip_id,dice_ed,dice_es,iou_ed,iou_es,missing_mask\n";
    for (const auto& c : report.per_clip)
        csv += join_csv_row({c.clip_id, fmt_float(c.dice_ed), fmt_float(c.dice_es),
                             fmt_float(c.iou_ed), fmt_float(c.iou_es),
                             c.missing_mask ? "1" : "0"});
    atomic_write(out_dir / "seg_scores.csv", csv);

    json summary{{"mean_dice", report.mean_dice},
                 {"mean_iou", report.mean_iou},
                 {"mean_dice_per_clip", report.mean_dice_per_clip},
                 {"mean_iou_per_clip", report.mean_iou_per_clip},
                 {"clips", report.per_clip.size()},
                 {"excluded", report.excluded.size()}};
    if (report.mean_dice_excl) summary["mean_dice_excl"] = *report.mean_dice_excl;
    if (report.mean_iou_excl) summary["mean_iou_excl"] = *report.mean_iou_excl;
    atomic_write(out_dir / "seg_summary.json", summary.dump(2) + "\n");

    write_run_manifest(out_dir, "eval-seg",
                       json{{"pred_dir", pred_dir.string()},
                            {"ref_dir", ref_dir.string()},
                            {"split", split_flag},
                            {"policy", rc.eval.policy}},
                       rc.raw, seed);
    std::cout << summary.dump() << "\n";
    return 0;
}

// ---- eval-afd ----

int cmd_eval_afd(const RunConfig& rc, const std::string& pred_dir_flag,
                 const std::string& checkpoint, const std::string& split_flag,
                 const std::string& out_dir_flag, uint64_t seed) {
    std::filesystem::path data_dir = rc.paths.data_dir;
    std::filesystem::path out_dir = resolve_out_dir(out_dir_flag);
    DatasetManifest manifest = load_manifest(data_dir / "manifest");

    bool all_splits = split_flag == "all";
    Split split = all_splits ? Split::TEST : split_from_string(split_flag);
    std::filesystem::path pred_dir = materialize_predictions(
        checkpoint, pred_dir_flag, manifest, data_dir, out_dir,
        rc.eval.prepad_frames, split, all_splits);

    std::string csv =
        "clip_id,pred_ed,pred_es,label_ed,label_es,abs_err_ed,abs_err_es,fps,"
        "degenerate_flags\n";
    std::vector<int> pred_ed, lab_ed, pred_es, lab_es;
    std::vector<std::pair<double, double>> fps_err;
    for (const auto& rec : manifest.records) {
        if (!all_splits && rec.split != split) continue;
        if (!rec.labels) continue;
        BinaryMaskSequence masks = load_binary_masks(pred_dir, rec.clip_id);
        AreaSeries series;
        series.clip_id = rec.clip_id;
        series.fps = rec.fps;
        for (int t = 0; t < masks.t; ++t)
            series.values.push_back(static_cast<double>(mask_area(masks, t)));
        PhaseEvents ev =
            detect_phases(series, rec.labels->ed_frame, rec.labels->es_frame);
        pred_ed.push_back(ev.ed_frame);
        lab_ed.push_back(rec.labels->ed_frame);
        pred_es.push_back(ev.es_frame);
        lab_es.push_back(rec.labels->es_frame);
        fps_err.emplace_back(rec.fps,
                             0.5 * (std::abs(ev.ed_frame - rec.labels->ed_frame) +
                                    std::abs(ev.es_frame - rec.labels->es_frame)));
        std::string flags;
        if (ev.ed_degenerate) flags += "ED";
        if (ev.es_degenerate) flags += flags.empty() ? "ES" : "+ES";
        csv += join_csv_row({rec.clip_id, std::to_string(ev.ed_frame),
                             std::to_string(ev.es_frame),
                             std::to_string(rec.labels->ed_frame),
                             std::to_string(rec.labels->es_frame),
                             std::to_string(std::abs(ev.ed_frame - rec.labels->ed_frame)),
                             std::to_string(std::abs(ev.es_frame - rec.labels->es_frame)),
                             fmt_float(rec.fps), flags});
    }
    if (pred_ed.empty()) throw InputError("no labeled clips in split");
    atomic_write(out_dir / "afd_frames.csv", csv);

    SamplingRateBins bins = afd_by_sampling_rate(fps_err);
    std::string bcsv = "bin_fps_lo,mean_abs_error,count\n";
    for (size_t i = 0; i < bins.bin_fps_lo.size(); ++i)
        bcsv += join_csv_row({fmt_float(bins.bin_fps_lo[i]),
                              fmt_float(bins.mean_abs_error[i]),
                              std::to_string(bins.counts[i])});
    atomic_write(out_dir / "afd_by_fps.csv", bcsv);

    json summary{{"afd_ed", afd(pred_ed, lab_ed)},
                 {"afd_es", afd(pred_es, lab_es)},
                 {"offset_ed", systematic_offset(pred_ed, lab_ed)},
                 {"offset_es", systematic_offset(pred_es, lab_es)},
                 {"fps_slope", bins.slope},
                 {"clips", pred_ed.size()}};
    atomic_write(out_dir / "afd_summary.json", summary.dump(2) + "\n");
    write_run_manifest(out_dir, "eval-afd",
                       json{{"pred_dir", pred_dir.string()}, {"split", split_flag}},
                       rc.raw, seed);
    std::cout << summary.dump() << "\n";
    return 0;
}

// ---- eval-lvm ----

int cmd_eval_lvm(const RunConfig& rc, const std::string& masks_dir,
                 const std::string& gt_dir_flag, const std::string& scores_file,
                 const std::string& out_dir_flag, uint64_t seed) {
    std::filesystem::path data_dir = rc.paths.data_dir;
    std::filesystem::path out_dir = resolve_out_dir(out_dir_flag);
    DatasetManifest manifest = load_manifest(data_dir / "manifest");

    std::unique_ptr<PromptScorer> scorer;
    if (rc.eval.scorer == "mock") {
        MockScorerSpec spec;
        spec.ground_truth_dir =
            gt_dir_flag.empty() ? data_dir / "gt" : std::filesystem::path(gt_dir_flag);
        scorer = build_mock_scorer(spec);
    } else if (rc.eval.scorer == "scores-file") {
        if (scores_file.empty()) throw ConfigError("--scores-file required");
        scorer = build_scores_file_scorer(scores_file);
    } else {
        throw ConfigError("unknown scorer '" + rc.eval.scorer + "'");
    }

    MaskQualityReport report = evaluate_mask_quality(
        manifest, data_dir, masks_dir, *scorer, rc.eval.dilation_px);

    std::string csv = "clip_id,overflow_score,coverage_score\n";
    for (const auto& c : report.clips)
        csv += join_csv_row(
            {c.clip_id, fmt_float(c.overflow), fmt_float(c.coverage)});
    atomic_write(out_dir / "lvm_scores.csv", csv);

    // orientation of the Fig. 3-style statistic is inferred; print both signs
    json summary{{"mean_overflow", report.mean_overflow},
                 {"mean_coverage", report.mean_coverage},
                 {"neg_mean_coverage", -report.mean_coverage},
                 {"scorer", scorer->name()},
                 {"clips", report.clips.size()}};
    atomic_write(out_dir / "lvm_summary.json", summary.dump(2) + "\n");
    write_run_manifest(out_dir, "eval-lvm",
                       json{{"masks_dir", masks_dir},
                            {"scorer", rc.eval.scorer},
                            {"dilation_px", rc.eval.dilation_px}},
                       rc.raw, seed);
    std::cout << summary.dump() << "\n";
    return 0;
}

// ---- bounds ----

int cmd_bounds(double rmse, double corr) {
    json out{{"rmse_floor", rmse_floor(rmse)}, {"corr_ceiling", corr_ceiling(corr)}};
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_bounds_fit(const std::string& diffs_path) {
    CsvTable tab = read_csv(diffs_path);
    int di = tab.require_col("diff");
    std::vector<int> diffs;
    for (const auto& row : tab.rows) diffs.push_back(std::stoi(row[di]));
    AnnotatorNoiseModel model = fit_noise_mixture(diffs);
    json out{{"w", model.mixture_weight},
             {"U", model.uniform_halfwidth},
             {"b", model.laplace_scale},
             {"expected_abs", expected_abs(model)},
             {"log_likelihood", model.log_likelihood},
             {"degenerate", model.degenerate}};
    std::cout << out.dump() << "\n";
    return 0;
}

// ---- scaling-fit ----

int cmd_scaling_fit(const RunConfig& rc, const std::string& points_path,
                    const std::string& out_dir_flag, uint64_t seed) {
    std::filesystem::path out_dir = resolve_out_dir(out_dir_flag);
    CsvTable tab = read_csv(points_path);
    int ni = tab.require_col("param_count");
    int ki = tab.require_col("metric_kind");
    int vi = tab.require_col("metric_value");
    std::vector<ScalingPoint> points;
    for (const auto& row : tab.rows) {
        ScalingPoint p;
        p.param_count = std::stoll(row[ni]);
        p.metric_kind = metric_kind_from_string(row[ki]);
        p.metric_value = std::stod(row[vi]);
        points.push_back(p);
    }

    LogLogFit fit = fit_loglog(points);
    json out{{"slope", fit.slope},
             {"intercept", fit.intercept},
             {"r_squared", fit.r_squared}};
    if (points.size() >= 4) out["knee"] = saturation_split(points).knee;
    atomic_write(out_dir / "scaling_fit.json", out.dump(2) + "\n");

    std::string csv = "param_count,log_param_count,transformed_value\n";
    for (const auto& p : points)
        csv += join_csv_row({std::to_string(p.param_count),
                             fmt_float(std::log(static_cast<double>(p.param_count))),
                             fmt_float(-std::log(p.metric_value))});
    atomic_write(out_dir / "scaling_points_transformed.csv", csv);
    write_run_manifest(out_dir, "scaling-fit", json{{"points", points_path}},
                       rc.raw, seed);
    std::cout << out.dump() << "\n";
    return 0;
}

// ---- report ----

int cmd_report(const RunConfig& rc, const std::string& sweep_path,
               const std::string& out_dir_flag, uint64_t seed) {
    std::filesystem::path out_dir = resolve_out_dir(out_dir_flag);
    CsvTable tab = read_csv(sweep_path);
    int fi = tab.require_col("family");
    int pi = tab.require_col("param_count");
    int di = tab.require_col("dice");
    int ii = tab.require_col("iou");
    int ei = tab.require_col("afd_ed");
    int si = tab.require_col("afd_es");

    std::map<std::string, std::vector<std::string>> by_family;
    for (const auto& row : tab.rows) by_family[row[fi]] = row;

    // Table-1-shaped grids: rows l1..l4, columns B1..B4
    auto grid = [&](int col) {
        std::string csv = ",B1,B2,B3,B4\n";
        for (int l = 1; l <= 4; ++l) {
            std::vector<std::string> cells{"l" + std::to_string(l)};
            for (int b = 1; b <= 4; ++b) {
                auto it = by_family.find("B" + std::to_string(b) + "_l" +
                                         std::to_string(l));
                cells.push_back(it == by_family.end() ? "" : it->second[col]);
            }
            csv += join_csv_row(cells);
        }
        return csv;
    };
    atomic_write(out_dir / "table1_dice.csv", grid(di));
    atomic_write(out_dir / "table1_iou.csv", grid(ii));

    // Table-2-shaped method comparison
    std::string t2 = "method,param_count,afd_ed,afd_es\n";
    for (const auto& [fam, row] : by_family)
        t2 += join_csv_row({fam, row[pi], row[ei], row[si]});
    t2 += join_csv_row({"reference_teacher_full", "",
                        fmt_float(reference::kAfdEdFull),
                        fmt_float(reference::kAfdEsFull)});
    t2 += join_csv_row({"reference_teacher_subset", "",
                        fmt_float(reference::kAfdEdSubset),
                        fmt_float(reference::kAfdEsSubset)});
    atomic_write(out_dir / "table2_methods.csv", t2);

    write_run_manifest(out_dir, "report", json{{"sweep", sweep_path}}, rc.raw,
                       seed);
    std::cout << json{{"families", by_family.size()},
                      {"out_dir", out_dir.string()}}
                     .dump()
              << "\n";
    return 0;
}

int exit_code_for(const Error& e) {
    if (e.kind == "ConfigError" || e.kind == "PhantomConfigError") return 2;
    if (e.kind == "DivergenceError" || e.kind == "DegenerateSeries" ||
        e.kind == "DegeneratePhantom" || e.kind == "BudgetError")
        return 4;
    return 3;  // data errors: Io/Manifest/Input/Shape/tracing
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"echodfkd: data-free distillation lab for echo video segmentation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config_path, out_dir = "out", data_dir, cache_dir;
    uint64_t seed = 0;
    app.add_option("--config", config_path, "RunConfig JSON file");
    app.add_option("--seed", seed, "master seed; sub-seeds derive from it");
    app.add_option("--out-dir", out_dir, "artifact directory (env ECHODFKD_OUT overrides)");
    app.add_option("--data-dir", data_dir, "dataset directory");
    app.add_option("--cache-dir", cache_dir, "pseudo-label cache directory");

    // phantom-gen
    auto* pg = app.add_subcommand("phantom-gen", "generate phantom clips + manifest");
    int n_train = 20, n_val = 5, n_test = 5, pg_t = 64, pg_hw = 64;
    double pg_period = 20.0, pg_amp = 0.25, pg_noise = 0.05, pg_fps = 50.0;
    pg->add_option("--train", n_train);
    pg->add_option("--val", n_val);
    pg->add_option("--test", n_test);
    pg->add_option("--frames", pg_t);
    pg->add_option("--size", pg_hw);
    pg->add_option("--period", pg_period);
    pg->add_option("--amplitude", pg_amp);
    pg->add_option("--noise-std", pg_noise);
    pg->add_option("--fps", pg_fps);

    // pseudolabel
    auto* pl = app.add_subcommand("pseudolabel", "teacher pseudo-labels into the cache");
    std::string pl_gt_dir;
    pl->add_option("--gt-dir", pl_gt_dir, "teacher ground-truth mask dir");

    // train
    auto* tr = app.add_subcommand("train", "distill the student");
    std::string tr_labels_dir, tr_loss;
    int tr_blocks = -1, tr_layers = -1, tr_epochs = -1, tr_batch = -1, tr_seq = -1;
    int tr_clips_per_epoch = -1, tr_val_window = -1;
    double tr_lr = -1.0;
    tr->add_option("--labels-dir", tr_labels_dir, "pseudo-label store");
    tr->add_option("--blocks", tr_blocks);
    tr->add_option("--layers", tr_layers);
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--batch", tr_batch);
    tr->add_option("--seq-len", tr_seq);
    tr->add_option("--clips-per-epoch", tr_clips_per_epoch);
    tr->add_option("--val-window", tr_val_window);
    tr->add_option("--loss", tr_loss, "DICE|BCE|DICE_PLUS_BCE");

    // eval-seg
    auto* es = app.add_subcommand("eval-seg", "Dice/IoU at labeled ED/ES frames");
    std::string es_pred, es_ckpt, es_ref, es_split = "TEST", es_policy;
    es->add_option("--pred-dir", es_pred, "predicted binary masks");
    es->add_option("--checkpoint", es_ckpt, "student checkpoint (predicts if no --pred-dir)");
    es->add_option("--ref-dir", es_ref, "reference masks (default <data>/gt)");
    es->add_option("--split", es_split, "TRAIN|VAL|TEST|all");
    es->add_option("--policy", es_policy, "full|exclude-corrupted");

    // eval-afd
    auto* ea = app.add_subcommand("eval-afd", "ED/ES frame distances from mask areas");
    std::string ea_pred, ea_ckpt, ea_split = "TEST";
    ea->add_option("--pred-dir", ea_pred);
    ea->add_option("--checkpoint", ea_ckpt);
    ea->add_option("--split", ea_split);

    // eval-lvm
    auto* el = app.add_subcommand("eval-lvm", "annotation-free mask quality protocols");
    std::string el_masks, el_gt, el_scores, el_scorer;
    int el_dilation = -1;
    el->add_option("--masks-dir", el_masks)->required();
    el->add_option("--gt-dir", el_gt, "mock scorer ground truth (default <data>/gt)");
    el->add_option("--scorer", el_scorer, "mock|scores-file");
    el->add_option("--scores-file", el_scores);
    el->add_option("--dilation", el_dilation);

    // bounds
    auto* bo = app.add_subcommand("bounds", "intra-annotator floors and ceilings");
    double bo_rmse = reference::kCamusIntraRmse, bo_corr = reference::kCamusIntraCorr;
    bo->add_option("--rmse", bo_rmse);
    bo->add_option("--corr", bo_corr);
    auto* bf = bo->add_subcommand("fit", "MLE of the noise mixture");
    std::string bf_diffs;
    bf->add_option("--diffs", bf_diffs, "csv with a 'diff' column")->required();

    // scaling-fit
    auto* sf = app.add_subcommand("scaling-fit", "log-log regression + knee");
    std::string sf_points;
    sf->add_option("--points", sf_points, "csv: param_count,metric_kind,metric_value")
        ->required();

    // report
    auto* rp = app.add_subcommand("report", "Table-1/Table-2-shaped summaries");
    std::string rp_sweep;
    rp->add_option("--sweep", rp_sweep, "csv: family,param_count,dice,iou,afd_ed,afd_es")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc = load_run_config(config_path);
        if (!data_dir.empty()) rc.paths.data_dir = data_dir;
        if (!cache_dir.empty()) rc.paths.cache_dir = cache_dir;
        if (seed != 0 || config_path.empty()) rc.seed = seed;

        if (*pg)
            return cmd_phantom_gen(rc, n_train, n_val, n_test, pg_t, pg_hw,
                                   pg_period, pg_amp, pg_noise, pg_fps, rc.seed,
                                   out_dir);
        if (*pl) return cmd_pseudolabel(rc, pl_gt_dir, rc.seed, out_dir);
        if (*tr) {
            if (tr_blocks > 0) rc.model.num_blocks = tr_blocks;
            if (tr_layers > 0) rc.model.layers_per_block = tr_layers;
            if (tr_epochs > 0) rc.training.max_epochs = tr_epochs;
            if (tr_lr >= 0.0) rc.training.learning_rate = tr_lr;
            if (tr_batch > 0) rc.training.batch_size = tr_batch;
            if (tr_seq > 0) rc.training.sequence_length = tr_seq;
            if (tr_clips_per_epoch >= 0) rc.training.clips_per_epoch = tr_clips_per_epoch;
            if (tr_val_window >= 0) rc.training.val_window = tr_val_window;
            if (!tr_loss.empty()) rc.training.loss = loss_kind_from_string(tr_loss);
            return cmd_train(rc, tr_labels_dir, rc.seed, out_dir);
        }
        if (*es) {
            RunConfig rc2 = rc;
            if (!es_policy.empty()) rc2.eval.policy = es_policy;
            return cmd_eval_seg(rc2, es_pred, es_ckpt, es_ref, es_split, out_dir,
                                rc.seed);
        }
        if (*ea) return cmd_eval_afd(rc, ea_pred, ea_ckpt, ea_split, out_dir, rc.seed);
        if (*el) {
            RunConfig rc2 = rc;
            if (!el_scorer.empty()) rc2.eval.scorer = el_scorer;
            if (el_dilation >= 0) rc2.eval.dilation_px = el_dilation;
            return cmd_eval_lvm(rc2, el_masks, el_gt, el_scores, out_dir, rc.seed);
        }
        if (*bo) {
            if (*bf) return cmd_bounds_fit(bf_diffs);
            return cmd_bounds(bo_rmse, bo_corr);
        }
        if (*sf) return cmd_scaling_fit(rc, sf_points, out_dir, rc.seed);
        if (*rp) return cmd_report(rc, rp_sweep, out_dir, rc.seed);
        return 2;
    } catch (const Error& e) {
        std::cerr << json{{"error", e.kind}, {"message", e.what()}}.dump() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "Unhandled"}, {"message", e.what()}}.dump()
                  << "\n";
        return 3;
    }
}
