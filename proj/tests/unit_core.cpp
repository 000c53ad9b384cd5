#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "echodfkd/data_model.hpp"
#include "echodfkd/image_io.hpp"
#include "echodfkd/phantom.hpp"
#include "echodfkd/phase_detect.hpp"
#include "echodfkd/seg_metrics.hpp"

using namespace echodfkd;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("echodfkd_test_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Independent even-odd point-in-polygon oracle sampled at (x+0.5, y),
// the same half-open pixel convention the scanline fill documents.
bool pip(const std::vector<std::pair<double, double>>& poly, double px, double py) {
    int crossings = 0;
    size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        auto [x1, y1] = poly[i];
        auto [x2, y2] = poly[(i + 1) % n];
        if ((y1 <= py) == (y2 <= py)) continue;
        double xint = x1 + (py - y1) / (y2 - y1) * (x2 - x1);
        if (xint <= px) ++crossings;
    }
    return crossings % 2 == 1;
}

// Convex "cavity" tracing: vertical principal axis, horizontal chords.
PolygonalTracing make_convex_tracing(double cx, double y0, double y1,
                                     const std::vector<std::pair<double, double>>& rows) {
    PolygonalTracing tr;
    tr.chords.push_back({cx, y0, cx, y1});
    for (auto [y, r] : rows) tr.chords.push_back({cx - r, y, cx + r, y});
    return tr;
}

std::vector<std::pair<double, double>> convex_polygon(
    double cx, double y0, double y1,
    std::vector<std::pair<double, double>> rows) {
    std::sort(rows.begin(), rows.end());
    std::vector<std::pair<double, double>> poly;
    poly.push_back({cx, y0});
    for (auto [y, r] : rows) poly.push_back({cx - r, y});  // left side, ascending
    poly.push_back({cx, y1});
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
        poly.push_back({cx + it->second, it->first});  // right side, descending
    return poly;
}

int brute_force_extreme(const std::vector<double>& v, int ref, bool es) {
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    double med = sorted[(sorted.size() - 1) / 2];

    struct Block {
        int lo, hi;
    };
    std::vector<Block> blocks;
    int n = static_cast<int>(v.size());
    for (int i = 0; i < n;) {
        bool in = es ? v[i] < med : v[i] > med;
        if (!in) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 < n && (es ? v[j + 1] < med : v[j + 1] > med)) ++j;
        blocks.push_back({i, j});
        i = j + 1;
    }
    if (blocks.empty()) return -1;
    const Block* best = nullptr;
    long best_d = -1;
    for (const auto& b : blocks) {
        long d = (ref >= b.lo && ref <= b.hi)
                     ? 0
                     : std::min(std::labs(ref - b.lo), std::labs(ref - b.hi));
        if (!best || d < best_d) {
            best = &b;
            best_d = d;
        }
    }
    int idx = best->lo;
    for (int i = best->lo; i <= best->hi; ++i)
        if (es ? v[i] < v[idx] : v[i] > v[idx]) idx = i;
    return idx;
}

}  // namespace

// ---------------- data_model ----------------

TEST_CASE("rasterize: degenerate 2-chord row") {
    PolygonalTracing tr;
    tr.chords.push_back({2, 3.5, 8, 3.5});
    tr.chords.push_back({5, 3, 5, 4});
    BinaryMask m = rasterize_tracing(tr, 8, 12);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 12; ++x) {
            bool expect = y == 3 && x >= 2 && x <= 7;
            CHECK(m.at(y, x) == (expect ? 1 : 0));
        }
}

TEST_CASE("rasterize matches independent point-in-polygon oracle") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        double cx = 14 + 4 * u01(rng);
        double y0 = 2 + u01(rng), y1 = 25 + 3 * u01(rng);
        int nrows = 3 + trial % 6;
        std::vector<std::pair<double, double>> rows;
        for (int i = 0; i < nrows; ++i) {
            double t = (i + 1.0) / (nrows + 1.0);
            double y = y0 + t * (y1 - y0);
            // radii shaped like an ellipse keep the polygon convex
            double r = (2.0 + 9.0 * std::sin(3.14159265 * t)) + 0.3 * u01(rng);
            rows.push_back({y, r});
        }
        BinaryMask m = rasterize_tracing(make_convex_tracing(cx, y0, y1, rows), 32, 32);
        auto poly = convex_polygon(cx, y0, y1, rows);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                CHECK(m.at(y, x) == (pip(poly, x + 0.5, y + 0.5) ? 1 : 0));
    }
}

TEST_CASE("rasterize: shoelace area oracle on a hexagon") {
    double cx = 16;
    std::vector<std::pair<double, double>> rows{{8.25, 6.5}, {16.25, 10.5}, {24.25, 6.5}};
    auto tr = make_convex_tracing(cx, 2.25, 29.25, rows);
    BinaryMask m = rasterize_tracing(tr, 32, 32);
    auto poly = convex_polygon(cx, 2.25, 29.25, rows);
    double area2 = 0, perim = 0;
    for (size_t i = 0; i < poly.size(); ++i) {
        auto [x1, y1] = poly[i];
        auto [x2, y2] = poly[(i + 1) % poly.size()];
        area2 += x1 * y2 - x2 * y1;
        perim += std::hypot(x2 - x1, y2 - y1);
    }
    double shoelace = std::abs(area2) / 2.0;
    CHECK(std::abs(mask_area(m) - shoelace) <= perim / 2.0);
}

TEST_CASE("rasterize: rectangle-ish area and connectivity") {
    // near-rectangle: axis vertical, all chords the same half-width
    std::vector<std::pair<double, double>> rows;
    for (int i = 1; i <= 19; ++i) rows.push_back({2.25 + i * (20.0 / 20.0), 5.0});
    auto tr = make_convex_tracing(16, 2.25, 22.25, rows);
    BinaryMask m = rasterize_tracing(tr, 32, 32);
    CHECK(mask_area(m) == doctest::Approx(200).epsilon(0.15));
    std::vector<uint8_t> comp(m.px.size());
    largest_component(m.px.data(), comp.data(), m.h, m.w);
    CHECK(comp == m.px);  // single connected component
}

TEST_CASE("rasterize errors") {
    PolygonalTracing tr;
    tr.chords.push_back({2, 3, 8, 3});
    CHECK_THROWS_AS(rasterize_tracing(tr, 8, 12), DegenerateTracing);
    tr.chords.push_back({5, -1, 5, 4});
    CHECK_THROWS_AS(rasterize_tracing(tr, 8, 12), InvalidTracing);
}

TEST_CASE("mask_area basics and union monotonicity") {
    BinaryMask a{4, 4, std::vector<uint8_t>(16, 0)};
    CHECK(mask_area(a) == 0);
    BinaryMask b{4, 4, std::vector<uint8_t>(16, 1)};
    CHECK(mask_area(b) == 16);
    BinaryMask cb{4, 4, {}};
    for (int i = 0; i < 16; ++i) cb.px.push_back((i / 4 + i % 4) % 2);
    CHECK(mask_area(cb) == 8);

    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        BinaryMask u = a, x = a, y = a;
        for (int i = 0; i < 16; ++i) {
            x.px[i] = rng() % 2;
            y.px[i] = rng() % 2;
            u.px[i] = x.px[i] | y.px[i];
        }
        CHECK(mask_area(u) >= std::max(mask_area(x), mask_area(y)));
    }
}

TEST_CASE("morphology and largest component") {
    int h = 7, w = 7;
    std::vector<uint8_t> in(h * w, 0), out(h * w, 0);
    in[3 * w + 3] = 1;
    dilate_chebyshev(in.data(), out.data(), h, w, 1);
    int cnt = 0;
    for (auto v : out) cnt += v;
    CHECK(cnt == 9);  // 3x3 square
    std::vector<uint8_t> back(h * w, 0);
    erode_chebyshev(out.data(), back.data(), h, w, 1);
    CHECK(back == in);

    // two blobs: 4-px square and single pixel
    std::vector<uint8_t> two(h * w, 0);
    two[0] = two[1] = two[w] = two[w + 1] = 1;
    two[6 * w + 6] = 1;
    std::vector<uint8_t> big(h * w, 0);
    largest_component(two.data(), big.data(), h, w);
    CHECK(big[0] == 1);
    CHECK(big[6 * w + 6] == 0);
}

TEST_CASE("manifest round trip") {
    auto dir = temp_dir("manifest");
    DatasetManifest m;
    ManifestRecord r1;
    r1.clip_id = "clip_a";
    r1.split = Split::TRAIN;
    r1.fps = 50;
    r1.num_frames = 64;
    ClipLabels labels;
    labels.ed_frame = 3;
    labels.es_frame = 12;
    labels.ef = 55.5;
    PolygonalTracing tr;
    tr.frame_index = 3;
    tr.chords.push_back({1, 2, 3, 4});
    tr.chords.push_back({2, 1.5, 2, 4.5});
    labels.tracings.push_back(tr);
    r1.labels = labels;
    m.records.push_back(r1);
    ManifestRecord r2;
    r2.clip_id = "clip_b";
    r2.split = Split::TEST;
    r2.fps = 32;
    r2.num_frames = 100;
    m.records.push_back(r2);
    m.corrupted["clip_b"] = CorruptReason::VIDEO_CORRUPT;

    save_manifest(m, dir / "manifest");
    DatasetManifest l = load_manifest(dir / "manifest");
    REQUIRE(l.records.size() == 2);
    CHECK(l.records[0].clip_id == "clip_a");
    CHECK(l.records[0].split == Split::TRAIN);
    CHECK(l.records[0].fps == doctest::Approx(50));
    REQUIRE(l.records[0].labels.has_value());
    CHECK(l.records[0].labels->ed_frame == 3);
    CHECK(l.records[0].labels->es_frame == 12);
    CHECK(l.records[0].labels->ef == doctest::Approx(55.5));
    REQUIRE(l.records[0].labels->tracings.size() == 1);
    CHECK(l.records[0].labels->tracings[0].chords.size() == 2);
    CHECK(l.records[0].labels->tracings[0].chords[1].y2 == doctest::Approx(4.5));
    CHECK(!l.records[1].labels.has_value());
    REQUIRE(l.corrupted.count("clip_b") == 1);
    CHECK(l.corrupted.at("clip_b") == CorruptReason::VIDEO_CORRUPT);
}

TEST_CASE("manifest supplement corrupted ids load") {
    auto dir = temp_dir("manifest2");
    DatasetManifest m;
    for (const char* id :
         {"0X39348579B2E55470", "0X234005576A8B5EB1", "0X35291BE9AB90FA51"})
        m.corrupted[id] = CorruptReason::VIDEO_CORRUPT;
    save_manifest(m, dir / "manifest");
    DatasetManifest l = load_manifest(dir / "manifest");
    CHECK(l.corrupted.size() == 3);
    CHECK(l.corrupted.at("0X39348579B2E55470") == CorruptReason::VIDEO_CORRUPT);
}

TEST_CASE("manifest duplicate id rejected") {
    DatasetManifest m;
    ManifestRecord r;
    r.clip_id = "dup";
    r.num_frames = 4;
    r.fps = 1;
    m.records.push_back(r);
    m.records.push_back(r);
    CHECK_THROWS_AS(m.validate(), ManifestError);
}

TEST_CASE("soft mask thresholding") {
    SoftMaskSequence s;
    s.clip_id = "x";
    s.masks = Tensor<float>(1, 1, 2, 2);
    s.masks.v = {0.1f, 0.5f, 0.51f, 0.9f};
    BinaryMaskSequence b = s.threshold(0.5f);
    CHECK(b.masks == std::vector<uint8_t>{0, 0, 1, 1});
}

// ---------------- phantom ----------------

TEST_CASE("phantom determinism and ranges") {
    PhantomParams p;
    p.seed = 99;
    PhantomClip a = generate_phantom(p, "c");
    PhantomClip b = generate_phantom(p, "c");
    CHECK(a.clip.frames.v == b.clip.frames.v);
    CHECK(a.ground_truth.masks == b.ground_truth.masks);
    for (float v : a.clip.frames.v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    // center pixel always inside, corner outside
    for (int t = 0; t < a.ground_truth.t; ++t) {
        CHECK(a.ground_truth.at(t, 32, 32) == 1);
        CHECK(a.ground_truth.at(t, 1, 1) == 0);
    }
}

TEST_CASE("phantom ED/ES equal brute-force area extrema over the middle beat") {
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        PhantomParams p;
        p.seed = seed;
        p.period_frames = 17.0 + seed;
        p.phase = 0.4 * seed;
        PhantomClip pc = generate_phantom(p, "c");
        // independent recomputation from the ground-truth rasters
        int beat = static_cast<int>((p.t / 2) / p.period_frames);
        int lo = static_cast<int>(std::ceil(beat * p.period_frames));
        int hi = std::min(p.t, static_cast<int>(std::ceil((beat + 1) * p.period_frames)));
        int ed = lo, es = lo;
        for (int t = lo; t < hi; ++t) {
            if (mask_area(pc.ground_truth, t) > mask_area(pc.ground_truth, ed)) ed = t;
            if (mask_area(pc.ground_truth, t) < mask_area(pc.ground_truth, es)) es = t;
        }
        CHECK(pc.labels.ed_frame == ed);
        CHECK(pc.labels.es_frame == es);
        double ef = 100.0 * (1.0 - static_cast<double>(mask_area(pc.ground_truth, es)) /
                                       mask_area(pc.ground_truth, ed));
        CHECK(pc.labels.ef == doctest::Approx(ef));
    }
}

TEST_CASE("phantom ES near analytic sin minimum") {
    PhantomParams p;
    p.period_frames = 20;
    p.phase = 0.0;
    p.t = 40;
    PhantomClip pc = generate_phantom(p, "c");
    // beat containing frame 20 is [20,40); sin = -1 at t = 35
    CHECK(std::abs(pc.labels.es_frame - 35) <= 1);
}

TEST_CASE("phantom degenerate and invalid configs") {
    PhantomParams p;
    p.amplitude = 0.0;
    CHECK_THROWS_AS(generate_phantom(p, "c"), DegeneratePhantom);
    PhantomParams q;
    q.a0 = 40;  // wall would leave the frame
    CHECK_THROWS_AS(generate_phantom(q, "c"), PhantomConfigError);
}

TEST_CASE("phantom wall strictly brighter than cavity without noise") {
    PhantomParams p;
    p.noise_std = 0.0;
    PhantomClip pc = generate_phantom(p, "c");
    for (int t : {0, 7, 31}) {
        auto ring = phantom_wall_ring(pc.ground_truth, t, 3);
        size_t hw = 64 * 64;
        float min_wall = 1e9f, max_cav = -1e9f;
        for (size_t i = 0; i < hw; ++i) {
            float v = pc.clip.frames.v[t * hw + i];
            if (ring[i]) min_wall = std::min(min_wall, v);
            if (pc.ground_truth.masks[t * hw + i]) max_cav = std::max(max_cav, v);
        }
        CHECK(max_cav < min_wall);
    }
}

// ---------------- phase_detect ----------------

TEST_CASE("detect_extreme_frame worked examples") {
    AreaSeries s;
    s.values = {5, 3, 1, 3, 5, 7, 9, 7, 5};
    CHECK(detect_extreme_frame(s, 2, PhaseMode::ES) == 2);
    CHECK(detect_extreme_frame(s, 6, PhaseMode::ED) == 6);

    AreaSeries two;
    two.values.assign(16, 5.0);
    for (int i : {1, 2, 3}) two.values[i] = 1.0;
    for (int i : {11, 12, 13}) two.values[i] = 2.0;
    two.values[6] = 9.0;  // keeps the median at 5
    CHECK(detect_extreme_frame(two, 12, PhaseMode::ES) == 11);
    CHECK(detect_extreme_frame(two, 0, PhaseMode::ES) == 1);
}

TEST_CASE("constant series is degenerate; detect_phases falls back") {
    AreaSeries s;
    s.values.assign(10, 4.0);
    CHECK_THROWS_AS(detect_extreme_frame(s, 3, PhaseMode::ES), DegenerateSeries);
    PhaseEvents ev = detect_phases(s, 2, 7);
    CHECK(ev.ed_frame == 2);
    CHECK(ev.es_frame == 7);
    CHECK(ev.ed_degenerate);
    CHECK(ev.es_degenerate);
}

TEST_CASE("oracle equivalence on seeded random series") {
    std::mt19937_64 rng(1234);
    int done = 0;
    while (done < 200) {
        int n = 16 + static_cast<int>(rng() % 241);
        std::vector<double> v(n);
        for (auto& x : v) x = static_cast<double>(rng() % 101);
        int ref = static_cast<int>(rng() % n);
        bool es = rng() % 2;
        int expect = brute_force_extreme(v, ref, es);
        if (expect < 0) continue;  // degenerate draw
        AreaSeries s;
        s.values = v;
        CHECK(detect_extreme_frame(s, ref, es ? PhaseMode::ES : PhaseMode::ED) ==
              expect);
        ++done;
    }
}

TEST_CASE("tie-break determinism") {
    AreaSeries s;
    s.values = {5, 1, 1, 5, 9, 5, 1, 1, 5};
    int first = detect_extreme_frame(s, 4, PhaseMode::ES);
    for (int i = 0; i < 5; ++i)
        CHECK(detect_extreme_frame(s, 4, PhaseMode::ES) == first);
    CHECK(first == 1);  // equidistant blocks -> earlier block, earlier index
}

TEST_CASE("afd and systematic offset") {
    CHECK(afd({3, 10}, {5, 10}) == doctest::Approx(1.0));
    CHECK(afd({5, 10}, {5, 10}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(afd({1}, {1, 2}), InputError);
    CHECK(systematic_offset({3, 8}, {5, 10}) == doctest::Approx(-2.0));
    CHECK(systematic_offset({1, 2}, {1, 2}) == doctest::Approx(0.0));
}

TEST_CASE("afd_by_sampling_rate slope oracle") {
    std::vector<std::pair<double, double>> data;
    double k = 0.07;
    for (double fps : {15.0, 25.0, 35.0, 52.0, 61.0}) data.push_back({fps, k * fps});
    SamplingRateBins bins = afd_by_sampling_rate(data);
    CHECK(bins.slope == doctest::Approx(k).epsilon(1e-9));
    for (size_t i = 0; i < bins.bin_fps_lo.size(); ++i) CHECK(bins.counts[i] >= 1);

    std::vector<std::pair<double, double>> zeros{{20, 0}, {44, 0}};
    SamplingRateBins zb = afd_by_sampling_rate(zeros);
    CHECK(zb.slope == doctest::Approx(0.0));
    for (double m : zb.mean_abs_error) CHECK(m == doctest::Approx(0.0));
}

// ---------------- seg_metrics ----------------

TEST_CASE("dice and iou hand values") {
    BinaryMask a{2, 2, {1, 1, 0, 0}}, b{2, 2, {0, 1, 1, 0}};
    CHECK(dice(a, b) == doctest::Approx(0.5));
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
    BinaryMask e{2, 2, {0, 0, 0, 0}};
    CHECK(dice(e, e) == doctest::Approx(1.0));
    CHECK(iou(e, e) == doctest::Approx(1.0));
    CHECK(dice(a, a) == doctest::Approx(1.0));
    BinaryMask c{2, 2, {0, 0, 1, 1}};
    CHECK(dice(a, c) == doctest::Approx(0.0));
    BinaryMask wrong{3, 2, {0, 0, 0, 0, 0, 0}};
    CHECK_THROWS_AS(dice(a, wrong), ShapeError);
}

TEST_CASE("dice-iou identity and symmetry on random pairs") {
    std::mt19937_64 rng(77);
    for (int t = 0; t < 1000; ++t) {
        BinaryMask a{8, 8, std::vector<uint8_t>(64)}, b = a;
        for (int i = 0; i < 64; ++i) {
            a.px[i] = rng() % 2;
            b.px[i] = rng() % 2;
        }
        double d = dice(a, b), j = iou(a, b);
        CHECK(std::abs(d - 2.0 * j / (1.0 + j)) <= 1e-12);
        CHECK(dice(b, a) == doctest::Approx(d));
        CHECK(iou(b, a) == doctest::Approx(j));
    }
}

TEST_CASE("evaluate_segmentation policies and missing masks") {
    auto dir = temp_dir("segeval");
    DatasetManifest manifest;
    std::vector<PhantomClip> clips;
    for (int i = 0; i < 4; ++i) {
        PhantomParams p;
        p.seed = 100 + i;
        p.period_frames = 19 + i;
        std::string id = "c" + std::to_string(i);
        PhantomClip pc = generate_phantom(p, id);
        save_binary_masks(pc.ground_truth, dir / "ref");
        if (i < 3) save_binary_masks(pc.ground_truth, dir / "pred");  // c3 missing
        ManifestRecord rec;
        rec.clip_id = id;
        rec.split = Split::TEST;
        rec.fps = 50;
        rec.num_frames = p.t;
        rec.labels = pc.labels;
        manifest.records.push_back(rec);
        clips.push_back(std::move(pc));
    }
    manifest.corrupted["c1"] = CorruptReason::LABEL_CORRUPT;

    SegScoreReport full =
        evaluate_segmentation(dir / "pred", dir / "ref", manifest, EvalPolicy::FULL);
    REQUIRE(full.per_clip.size() == 4);
    CHECK(full.per_clip[0].dice_ed == doctest::Approx(1.0));
    CHECK(full.per_clip[3].missing_mask);
    CHECK(full.per_clip[3].dice_ed == doctest::Approx(0.0));
    CHECK(full.mean_dice == doctest::Approx((1.0 * 6 + 0.0 * 2) / 8));
    REQUIRE(full.mean_dice_excl.has_value());

    SegScoreReport excl = evaluate_segmentation(dir / "pred", dir / "ref", manifest,
                                                EvalPolicy::EXCLUDE_CORRUPTED);
    CHECK(excl.per_clip.size() == 3);  // c1 excluded
    CHECK(excl.excluded.size() == 1);
    CHECK(*full.mean_dice_excl == doctest::Approx(excl.mean_dice));
}
