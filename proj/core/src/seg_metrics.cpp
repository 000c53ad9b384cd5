#include "echodfkd/seg_metrics.hpp"

#include "echodfkd/image_io.hpp"

namespace echodfkd {

namespace {

struct Overlap {
    int64_t a = 0, b = 0, inter = 0;
};

Overlap overlap(const uint8_t* a, const uint8_t* b, size_t n) {
    Overlap o;
    for (size_t i = 0; i < n; ++i) {
        o.a += a[i] != 0;
        o.b += b[i] != 0;
        o.inter += (a[i] != 0) && (b[i] != 0);
    }
    return o;
}

double dice_of(const Overlap& o) {
    if (o.a + o.b == 0) return 1.0;
    return 2.0 * o.inter / static_cast<double>(o.a + o.b);
}

double iou_of(const Overlap& o) {
    int64_t uni = o.a + o.b - o.inter;
    if (uni == 0) return 1.0;
    return o.inter / static_cast<double>(uni);
}

}  // namespace

double dice(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("mask shape mismatch");
    return dice_of(overlap(a.px.data(), b.px.data(), a.px.size()));
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("mask shape mismatch");
    return iou_of(overlap(a.px.data(), b.px.data(), a.px.size()));
}

double dice_frame(const BinaryMaskSequence& a, int fa, const BinaryMaskSequence& b,
                  int fb) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("mask shape mismatch");
    size_t n = static_cast<size_t>(a.h) * a.w;
    return dice_of(overlap(a.masks.data() + static_cast<size_t>(fa) * n,
                           b.masks.data() + static_cast<size_t>(fb) * n, n));
}

double iou_frame(const BinaryMaskSequence& a, int fa, const BinaryMaskSequence& b,
                 int fb) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("mask shape mismatch");
    size_t n = static_cast<size_t>(a.h) * a.w;
    return iou_of(overlap(a.masks.data() + static_cast<size_t>(fa) * n,
                          b.masks.data() + static_cast<size_t>(fb) * n, n));
}

SegScoreReport evaluate_segmentation(const std::filesystem::path& pred_dir,
                                     const std::filesystem::path& ref_dir,
                                     const DatasetManifest& manifest,
                                     EvalPolicy policy) {
    SegScoreReport rep;
    rep.policy = policy;
    double sum_dice = 0.0, sum_iou = 0.0;
    double sum_dice_ex = 0.0, sum_iou_ex = 0.0;
    double sum_dice_clip = 0.0, sum_iou_clip = 0.0;
    int frames = 0, frames_ex = 0, clips = 0;

    for (const auto& rec : manifest.records) {
        if (!rec.labels) continue;
        bool corrupted = manifest.corrupted.count(rec.clip_id) > 0;
        if (corrupted) {
            rep.excluded.push_back(
                {rec.clip_id, to_string(manifest.corrupted.at(rec.clip_id))});
            if (policy == EvalPolicy::EXCLUDE_CORRUPTED) continue;
        }

        ClipSegScore s;
        s.clip_id = rec.clip_id;
        try {
            BinaryMaskSequence pred = load_binary_masks(pred_dir, rec.clip_id);
            BinaryMaskSequence ref = load_binary_masks(ref_dir, rec.clip_id);
            int ed = rec.labels->ed_frame, es = rec.labels->es_frame;
            s.dice_ed = dice_frame(pred, ed, ref, ed);
            s.dice_es = dice_frame(pred, es, ref, es);
            s.iou_ed = iou_frame(pred, ed, ref, ed);
            s.iou_es = iou_frame(pred, es, ref, es);
            size_t n = static_cast<size_t>(pred.h) * pred.w;
            for (int f : {ed, es}) {
                bool any = false;
                const uint8_t* pp = pred.masks.data() + static_cast<size_t>(f) * n;
                const uint8_t* rp = ref.masks.data() + static_cast<size_t>(f) * n;
                for (size_t i = 0; i < n && !any; ++i) any = pp[i] || rp[i];
                if (!any) s.empty_empty = true;
            }
        } catch (const IoError&) {
            s.missing_mask = true;  // scored as 0, reported, never dropped
        }
        rep.per_clip.push_back(s);

        double d = (s.dice_ed + s.dice_es) / 2.0, j = (s.iou_ed + s.iou_es) / 2.0;
        sum_dice += s.dice_ed + s.dice_es;
        sum_iou += s.iou_ed + s.iou_es;
        frames += 2;
        sum_dice_clip += d;
        sum_iou_clip += j;
        ++clips;
        if (!corrupted) {
            sum_dice_ex += s.dice_ed + s.dice_es;
            sum_iou_ex += s.iou_ed + s.iou_es;
            frames_ex += 2;
        }
    }

    if (frames > 0) {
        rep.mean_dice = sum_dice / frames;
        rep.mean_iou = sum_iou / frames;
        rep.mean_dice_per_clip = sum_dice_clip / clips;
        rep.mean_iou_per_clip = sum_iou_clip / clips;
    }
    if (policy == EvalPolicy::FULL && frames_ex > 0) {
        rep.mean_dice_excl = sum_dice_ex / frames_ex;
        rep.mean_iou_excl = sum_iou_ex / frames_ex;
    }
    return rep;
}

}  // namespace echodfkd
