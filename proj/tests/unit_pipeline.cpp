#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "echodfkd/distill.hpp"
#include "echodfkd/image_io.hpp"
#include "echodfkd/phantom.hpp"
#include "echodfkd/seg_metrics.hpp"

using namespace echodfkd;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("echodfkd_pipe_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// small on-disk phantom dataset: clips + gt + manifest + pseudo-labels
struct Fixture {
    std::filesystem::path root, data, gt, cache, labels;
    DatasetManifest manifest;

    explicit Fixture(const std::string& tag, int n_train = 2, int n_val = 1,
                     int n_test = 0, int t = 12, int hw = 32) {
        root = temp_dir(tag);
        data = root / "data";
        gt = data / "gt";
        cache = root / "cache";
        int n = n_train + n_val + n_test;
        for (int i = 0; i < n; ++i) {
            PhantomParams p;
            p.t = t;
            p.h = p.w = hw;
            p.cx = p.cy = hw / 2.0;
            p.a0 = hw * 7.0 / 32.0;
            p.b0 = hw * 5.0 / 32.0;
            p.wall_thickness = 2.0;
            p.period_frames = 8.0;
            p.phase = 0.4 * i;
            p.seed = 100 + i;
            char id[16];
            std::snprintf(id, sizeof id, "clip_%03d", i);
            PhantomClip pc = generate_phantom(p, id);
            save_clip(pc.clip, data);
            save_binary_masks(pc.ground_truth, gt);
            ManifestRecord rec;
            rec.clip_id = id;
            rec.split = i < n_train ? Split::TRAIN
                        : i < n_train + n_val ? Split::VAL
                                              : Split::TEST;
            rec.fps = 50.0;
            rec.num_frames = t;
            rec.labels = pc.labels;
            manifest.records.push_back(rec);
        }
    }

    std::filesystem::path pseudolabel() {
        AnalyticPhantomTeacher teacher(gt, 7);
        auto res = generate_pseudolabels(teacher, manifest, data, cache);
        labels = res.store_dir;
        return labels;
    }
};

double dice_vs_gt(const BinaryMaskSequence& a, const BinaryMaskSequence& b) {
    double total = 0.0;
    for (int t = 0; t < a.t; ++t)
        total += dice_frame(a, t, b, t);
    return total / a.t;
}

}  // namespace

TEST_CASE("loss closed forms") {
    std::vector<float> p = {1.0f, 0.0f, 0.5f}, t = {1.0f, 0.0f, 1.0f};
    double inter = 1.5, ps = 1.5, ts = 2.0;
    CHECK(dice_loss(p, t) ==
          doctest::Approx(1.0 - (2 * inter + 1.0) / (ps + ts + 1.0)).epsilon(1e-12));
    CHECK(dice_loss(t, t) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bce_loss(t, t) == doctest::Approx(0.0).epsilon(1e-5));

    std::vector<float> q = {0.3f}, r = {1.0f};
    CHECK(bce_loss(q, r) == doctest::Approx(-std::log(0.3)).epsilon(1e-6));
    std::vector<float> bad = {0.1f, 0.2f};
    CHECK_THROWS_AS(dice_loss(p, bad), ShapeError);
    CHECK_THROWS_AS(bce_loss(p, bad), ShapeError);
}

TEST_CASE("analytic teacher: deterministic, binary, near ground truth") {
    // full-size cavities: a +/-1 px boundary nudge costs little Dice
    Fixture fx("teacher", 10, 0, 0, 12, 64);
    AnalyticPhantomTeacher teacher(fx.gt, 5);
    double mean = 0.0;
    for (const auto& rec : fx.manifest.records) {
        VideoClip clip = load_clip(fx.data, rec.clip_id, rec.fps);
        SoftMaskSequence a = teacher.infer(clip);
        SoftMaskSequence b = teacher.infer(clip);
        CHECK(a.masks.v == b.masks.v);
        for (float v : a.masks.v) CHECK((v == 0.0f || v == 1.0f));
        BinaryMaskSequence gt = load_binary_masks(fx.gt, rec.clip_id);
        mean += dice_vs_gt(a.threshold(0.5f), gt);
    }
    CHECK(mean / 10.0 >= 0.9);

    // distinct seeds corrupt different frames
    AnalyticPhantomTeacher other(fx.gt, 6);
    VideoClip clip = load_clip(fx.data, "clip_000", 50.0);
    CHECK(teacher.infer(clip).masks.v != other.infer(clip).masks.v);
}

TEST_CASE("pseudo-label cache: idempotent, skip-list on failure") {
    Fixture fx("plcache", 3, 1, 0);
    AnalyticPhantomTeacher teacher(fx.gt, 9);

    auto first = generate_pseudolabels(teacher, fx.manifest, fx.data, fx.cache);
    CHECK(first.generated == 4);
    CHECK(first.skipped_existing == 0);
    CHECK(first.skip_list.empty());
    CHECK(first.store_dir.filename() == "analytic-phantom-v1");

    auto again = generate_pseudolabels(teacher, fx.manifest, fx.data, fx.cache);
    CHECK(again.generated == 0);
    CHECK(again.skipped_existing == 4);

    // missing clip data ends up on the skip list, not as an exception
    DatasetManifest broken = fx.manifest;
    ManifestRecord ghost;
    ghost.clip_id = "clip_999";
    ghost.fps = 50.0;
    ghost.num_frames = 12;
    broken.records.push_back(ghost);
    auto res = generate_pseudolabels(teacher, broken, fx.data, fx.cache);
    REQUIRE(res.skip_list.size() == 1);
    CHECK(res.skip_list[0].first == "clip_999");

    // wrong-shape ground truth also lands on the skip list
    Fixture fx2("plshape", 1, 0, 0);
    BinaryMaskSequence wrong;
    wrong.clip_id = "clip_000";
    wrong.t = 12;
    wrong.h = wrong.w = 16;
    wrong.masks.assign(12 * 16 * 16, 0);
    std::filesystem::path badgt = fx2.root / "badgt";
    save_binary_masks(wrong, badgt);
    AnalyticPhantomTeacher badteacher(badgt, 9);
    auto res2 = generate_pseudolabels(badteacher, fx2.manifest, fx2.data, fx2.cache);
    CHECK(res2.generated == 0);
    REQUIRE(res2.skip_list.size() == 1);
    CHECK(res2.skip_list[0].second.find("shape") != std::string::npos);
}

TEST_CASE("training: lr=0 keeps the initialization") {
    Fixture fx("lr0");
    auto labels = fx.pseudolabel();
    ModelConfig mc;
    mc.num_blocks = 1;
    mc.layers_per_block = 1;
    mc.channel_widths = {4};
    TrainingConfig tc;
    tc.learning_rate = 0.0;
    tc.max_epochs = 1;
    tc.sequence_length = 8;
    tc.batch_size = 2;
    tc.seed = 11;
    TrainResult r = train(mc, labels, fx.manifest, fx.data, tc);
    Model init = build_model(mc, tc.seed);
    CHECK(r.model.params == init.params);
    CHECK(r.history.train_loss.size() == 1);
    CHECK(r.history.val_loss.size() == 1);
    CHECK(r.history.best_epoch == 0);
}

TEST_CASE("training: deterministic and loss decreases") {
    Fixture fx("det");
    auto labels = fx.pseudolabel();
    ModelConfig mc;
    mc.num_blocks = 1;
    mc.layers_per_block = 1;
    mc.channel_widths = {4};
    TrainingConfig tc;
    tc.learning_rate = 0.05;
    tc.max_epochs = 3;
    tc.sequence_length = 8;
    tc.batch_size = 2;
    tc.seed = 13;

    TrainResult a = train(mc, labels, fx.manifest, fx.data, tc);
    TrainResult b = train(mc, labels, fx.manifest, fx.data, tc);
    CHECK(a.history.to_csv() == b.history.to_csv());
    CHECK(std::memcmp(a.model.params.data(), b.model.params.data(),
                      a.model.params.size() * sizeof(float)) == 0);

    // best epoch is the argmin of validation loss (first on ties)
    int argmin = 0;
    for (size_t i = 1; i < a.history.val_loss.size(); ++i)
        if (a.history.val_loss[i] < a.history.val_loss[argmin])
            argmin = static_cast<int>(i);
    CHECK(a.history.best_epoch == argmin);
    CHECK(a.history.val_loss.back() < a.history.val_loss.front());

    std::string csv = a.history.to_csv();
    CHECK(csv.rfind("epoch,train_loss,val_loss\n", 0) == 0);
}

TEST_CASE("training: config and split validation") {
    Fixture fx("cfgerr", 2, 0, 1);  // no VAL clips
    auto labels = fx.pseudolabel();
    ModelConfig mc;
    mc.num_blocks = 1;
    mc.layers_per_block = 1;
    mc.channel_widths = {4};
    TrainingConfig tc;
    tc.max_epochs = 1;
    tc.sequence_length = 8;
    CHECK_THROWS_AS(train(mc, labels, fx.manifest, fx.data, tc), ConfigError);

    TrainingConfig bad;
    bad.sequence_length = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainingConfig{};
    bad.max_epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainingConfig{};
    bad.learning_rate = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    CHECK(loss_kind_from_string(to_string(LossKind::DICE_PLUS_BCE)) ==
          LossKind::DICE_PLUS_BCE);
    CHECK_THROWS_AS(loss_kind_from_string("HUBER"), ConfigError);
}

TEST_CASE("threshold calibration edge cases") {
    Fixture fx("calib");
    auto labels = fx.pseudolabel();
    DatasetManifest val;
    for (const auto& r : fx.manifest.records)
        if (r.split == Split::VAL) val.records.push_back(r);

    ModelConfig mc;
    mc.num_blocks = 1;
    mc.layers_per_block = 1;
    mc.channel_widths = {4};
    Model m = build_model(mc, 3);

    // head bias -100 with zero weights -> all-zero masks -> degenerate
    std::fill(m.params.begin(), m.params.end(), 0.0f);
    m.params[m.layout.head.b_off] = -100.0f;
    CalibrationResult deg = calibrate_threshold(m, mc, val, labels, fx.data);
    CHECK(deg.degenerate);
    CHECK(deg.threshold == doctest::Approx(0.5));

    // constant 0.5 output: every threshold below 0.5 ties, pick nearest 0.5
    m.params[m.layout.head.b_off] = 0.0f;
    CalibrationResult tie = calibrate_threshold(m, mc, val, labels, fx.data);
    CHECK_FALSE(tie.degenerate);
    CHECK(tie.threshold == doctest::Approx(0.45));

    // a fresh random-init model lands somewhere on the interior grid
    Model fresh = build_model(mc, 3);
    CalibrationResult c = calibrate_threshold(fresh, mc, val, labels, fx.data);
    CHECK(c.threshold >= 0.05);
    CHECK(c.threshold <= 0.95);
    CHECK(c.best_dice >= 0.0);
    CHECK(c.best_dice <= 1.0);
}

TEST_CASE("image io round trips") {
    auto dir = temp_dir("io");
    std::mt19937_64 rng(2);

    std::vector<uint8_t> img(24 * 17);
    for (auto& v : img) v = static_cast<uint8_t>(rng() % 256);
    write_png_gray8(dir / "a.png", 24, 17, img);
    int h = 0, w = 0;
    auto back = read_png_gray8(dir / "a.png", h, w);
    CHECK(h == 24);
    CHECK(w == 17);
    CHECK(back == img);

    std::vector<float> f(5 * 6);
    for (auto& v : f) v = static_cast<float>(rng() % 1000) / 999.0f;
    save_raw_f32(dir / "t", {5, 6}, f);
    std::vector<int> shape;
    auto fb = load_raw_f32(dir / "t", shape);
    CHECK(shape == std::vector<int>{5, 6});
    CHECK(std::memcmp(fb.data(), f.data(), f.size() * sizeof(float)) == 0);

    VideoClip clip;
    clip.id = "rt";
    clip.fps = 32.5;
    clip.frames = Tensor<float>(3, 1, 8, 8);
    for (auto& v : clip.frames.v) v = static_cast<float>(rng() % 1000) / 999.0f;
    save_clip(clip, dir);
    VideoClip lc = load_clip(dir, "rt", 32.5);
    REQUIRE(lc.frames.v.size() == clip.frames.v.size());
    for (size_t i = 0; i < lc.frames.v.size(); ++i)  // u8 storage quantizes
        CHECK(std::abs(lc.frames.v[i] - clip.frames.v[i]) <= 0.5f / 255.0f);
    CHECK(lc.t() == 3);
    CHECK_THROWS_AS(load_clip(dir, "nope", 50.0), IoError);

    SoftMaskSequence sm;
    sm.clip_id = "rt";
    sm.masks = Tensor<float>(3, 1, 8, 8);
    for (auto& v : sm.masks.v) v = static_cast<float>(rng() % 1000) / 999.0f;
    save_soft_masks(sm, dir / "masks");
    CHECK(soft_masks_exist(dir / "masks", "rt"));
    CHECK_FALSE(soft_masks_exist(dir / "masks", "other"));
    SoftMaskSequence smb = load_soft_masks(dir / "masks", "rt");
    CHECK(smb.masks.v == sm.masks.v);

    BinaryMaskSequence bm;
    bm.clip_id = "rt";
    bm.t = 2;
    bm.h = bm.w = 4;
    bm.masks.assign(32, 0);
    bm.masks[5] = 1;
    save_binary_masks(bm, dir / "bin");
    BinaryMaskSequence bmb = load_binary_masks(dir / "bin", "rt");
    CHECK(bmb.masks == bm.masks);
}
