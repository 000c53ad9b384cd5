#include "echodfkd/lvm_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "echodfkd/csv.hpp"
#include "echodfkd/image_io.hpp"
#include "echodfkd/phantom.hpp"

namespace echodfkd {

namespace {

class MockScorer : public PromptScorer {
  public:
    explicit MockScorer(MockScorerSpec spec) : spec_(std::move(spec)) {}

    double score(const std::string& clip_id, int frame, const float* image,
                 int h, int w, const std::string& prompt) override {
        const ClipCache& cc = cache(clip_id);
        if (frame < 0 || frame >= cc.gt.t)
            throw InputError("frame " + std::to_string(frame) +
                             " out of range for clip " + clip_id);
        if (h != cc.gt.h || w != cc.gt.w)
            throw ShapeError("image shape mismatch for clip " + clip_id);
        size_t hw = static_cast<size_t>(h) * w;

        if (prompt == prompts::kWall) {
            const std::vector<uint8_t>& ring = cc.wall_rings[frame];
            int64_t total = 0, lit = 0;
            for (size_t i = 0; i < hw; ++i)
                if (ring[i]) {
                    ++total;
                    lit += image[i] > 0.0f;
                }
            return total == 0 ? 0.0 : static_cast<double>(lit) / total;
        }
        if (prompt == prompts::kLeftVentricle) {
            int64_t total = 0, lit = 0;
            for (size_t i = 0; i < hw; ++i)
                if (cc.gt.masks[frame * hw + i]) {
                    ++total;
                    lit += image[i] > 0.0f;
                }
            return total == 0 ? 0.0 : static_cast<double>(lit) / total;
        }
        if (prompt == prompts::kNothing) {
            double s = std::accumulate(image, image + hw, 0.0);
            return 1.0 - s / static_cast<double>(hw);
        }
        if (prompt == prompts::kMitralClosed || prompt == prompts::kMitralOpen) {
            if (cc.mean_area <= 0.0) return 0.0;
            double dev = (cc.areas[frame] - cc.mean_area) / cc.mean_area;
            return prompt == prompts::kMitralClosed ? dev : -dev;
        }
        return 0.0;
    }

    std::string name() const override { return "mock"; }
    bool reentrant() const override { return false; }  // mutable cache

  private:
    struct ClipCache {
        BinaryMaskSequence gt;
        std::vector<std::vector<uint8_t>> wall_rings;
        std::vector<double> areas;
        double mean_area = 0.0;
    };

    const ClipCache& cache(const std::string& clip_id) {
        auto it = cache_.find(clip_id);
        if (it != cache_.end()) return it->second;
        ClipCache cc;
        try {
            cc.gt = load_binary_masks(spec_.ground_truth_dir, clip_id);
        } catch (const std::exception& e) {
            throw InputError("unknown clip '" + clip_id + "': " + e.what());
        }
        cc.wall_rings.reserve(cc.gt.t);
        cc.areas.reserve(cc.gt.t);
        for (int t = 0; t < cc.gt.t; ++t) {
            cc.wall_rings.push_back(
                phantom_wall_ring(cc.gt, t, spec_.wall_thickness));
            cc.areas.push_back(static_cast<double>(mask_area(cc.gt, t)));
        }
        cc.mean_area = std::accumulate(cc.areas.begin(), cc.areas.end(), 0.0) /
                       std::max<size_t>(cc.areas.size(), 1);
        return cache_.emplace(clip_id, std::move(cc)).first->second;
    }

    MockScorerSpec spec_;
    std::map<std::string, ClipCache> cache_;
};

class ConstantScorer : public PromptScorer {
  public:
    explicit ConstantScorer(double v) : v_(v) {}
    double score(const std::string&, int, const float*, int, int,
                 const std::string&) override {
        return v_;
    }
    std::string name() const override { return "constant"; }
    bool reentrant() const override { return true; }

  private:
    double v_;
};

class ScoresFileScorer : public PromptScorer {
  public:
    explicit ScoresFileScorer(const std::filesystem::path& path) {
        CsvTable tab = read_csv(path);
        int ci = tab.require_col("clip_id"), fi = tab.require_col("frame");
        int pi = tab.require_col("prompt"), si = tab.require_col("similarity");
        for (const auto& row : tab.rows)
            scores_[row[ci] + '\x1f' + row[fi] + '\x1f' + row[pi]] =
                std::stod(row[si]);
    }

    double score(const std::string& clip_id, int frame, const float*, int, int,
                 const std::string& prompt) override {
        auto it = scores_.find(clip_id + '\x1f' + std::to_string(frame) +
                               '\x1f' + prompt);
        if (it == scores_.end())
            throw InputError("no precomputed score for clip " + clip_id +
                             " frame " + std::to_string(frame) + " prompt '" +
                             prompt + "'");
        return it->second;
    }

    std::string name() const override { return "scores-file"; }
    bool reentrant() const override { return true; }

  private:
    std::map<std::string, double> scores_;
};

void check_shapes(const VideoClip& clip, const BinaryMaskSequence& masks) {
    if (masks.t != clip.t() || masks.h != clip.height() || masks.w != clip.width())
        throw ShapeError("mask/clip shape mismatch for " + clip.id);
}

double score_frame(PromptScorer& scorer, const VideoClip& clip, int frame,
                   const float* image, const std::string& prompt) {
    try {
        return scorer.score(clip.id, frame, image, clip.height(), clip.width(),
                            prompt);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError("scorer failed on clip " + clip.id + " frame " +
                         std::to_string(frame) + ": " + e.what());
    }
}

}  // namespace

std::unique_ptr<PromptScorer> build_mock_scorer(const MockScorerSpec& spec) {
    return std::make_unique<MockScorer>(spec);
}

std::unique_ptr<PromptScorer> build_constant_scorer(double value) {
    return std::make_unique<ConstantScorer>(value);
}

std::unique_ptr<PromptScorer> build_scores_file_scorer(
    const std::filesystem::path& csv_path) {
    return std::make_unique<ScoresFileScorer>(csv_path);
}

std::vector<int> protocol_frames(const VideoClip& clip, const ClipLabels* labels) {
    std::vector<int> frames;
    if (labels && (labels->ed_frame >= 0 || labels->es_frame >= 0)) {
        if (labels->ed_frame >= 0 && labels->ed_frame < clip.t())
            frames.push_back(labels->ed_frame);
        if (labels->es_frame >= 0 && labels->es_frame < clip.t())
            frames.push_back(labels->es_frame);
        std::sort(frames.begin(), frames.end());
        frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
    }
    if (frames.empty())
        for (int t = 0; t < clip.t(); t += 8) frames.push_back(t);
    return frames;
}

double overflow_score(const VideoClip& clip, const BinaryMaskSequence& masks,
                      PromptScorer& scorer, const ClipLabels* labels) {
    check_shapes(clip, masks);
    std::vector<int> frames = protocol_frames(clip, labels);
    size_t hw = static_cast<size_t>(clip.height()) * clip.width();
    std::vector<float> img(hw);
    double total = 0.0;
    for (int f : frames) {
        const float* src = clip.frames.data() + f * hw;
        for (size_t i = 0; i < hw; ++i)
            img[i] = masks.masks[f * hw + i] ? 0.0f : src[i];
        total += score_frame(scorer, clip, f, img.data(), prompts::kWall);
    }
    return total / frames.size();
}

double coverage_score(const VideoClip& clip, const BinaryMaskSequence& masks,
                      PromptScorer& scorer, const ClipLabels* labels,
                      int dilation_px) {
    check_shapes(clip, masks);
    if (dilation_px < 0) throw InputError("dilation_px must be >= 0");
    std::vector<int> frames = protocol_frames(clip, labels);
    int h = clip.height(), w = clip.width();
    size_t hw = static_cast<size_t>(h) * w;
    std::vector<uint8_t> dilated(hw);
    std::vector<float> img(hw);
    double total = 0.0;
    for (int f : frames) {
        dilate_chebyshev(masks.masks.data() + f * hw, dilated.data(), h, w,
                         dilation_px);
        const float* src = clip.frames.data() + f * hw;
        for (size_t i = 0; i < hw; ++i) img[i] = dilated[i] ? 0.0f : src[i];
        total += score_frame(scorer, clip, f, img.data(), prompts::kLeftVentricle) -
                 score_frame(scorer, clip, f, img.data(), prompts::kNothing);
    }
    return total / frames.size();
}

AreaSeries mitral_phase_signal(const VideoClip& clip, PromptScorer& scorer) {
    int n = clip.t();
    if (n < 3) throw InputError("mitral_phase_signal needs T >= 3");
    size_t hw = static_cast<size_t>(clip.height()) * clip.width();

    AreaSeries out;
    out.clip_id = clip.id;
    out.fps = clip.fps;
    out.values.resize(n);
    double cum = 0.0;
    for (int t = 0; t < n; ++t) {
        const float* img = clip.frames.data() + t * hw;
        cum += score_frame(scorer, clip, t, img, prompts::kMitralClosed) -
               score_frame(scorer, clip, t, img, prompts::kMitralOpen);
        out.values[t] = cum;
    }

    // remove the least-squares linear trend
    double tm = (n - 1) / 2.0;
    double sm = std::accumulate(out.values.begin(), out.values.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (int t = 0; t < n; ++t) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (out.values[t] - sm);
    }
    double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    for (int t = 0; t < n; ++t) out.values[t] -= sm + slope * (t - tm);
    return out;
}

MaskQualityReport evaluate_mask_quality(const DatasetManifest& manifest,
                                        const std::filesystem::path& data_dir,
                                        const std::filesystem::path& masks_dir,
                                        PromptScorer& scorer, int dilation_px) {
    MaskQualityReport report;
    for (const auto& rec : manifest.records) {
        VideoClip clip = load_clip(data_dir, rec.clip_id, rec.fps);
        BinaryMaskSequence masks = load_binary_masks(masks_dir, rec.clip_id);
        const ClipLabels* labels = rec.labels ? &*rec.labels : nullptr;
        ClipMaskQuality q;
        q.clip_id = rec.clip_id;
        q.overflow = overflow_score(clip, masks, scorer, labels);
        q.coverage = coverage_score(clip, masks, scorer, labels, dilation_px);
        report.clips.push_back(q);
        report.mean_overflow += q.overflow;
        report.mean_coverage += q.coverage;
    }
    if (!report.clips.empty()) {
        report.mean_overflow /= report.clips.size();
        report.mean_coverage /= report.clips.size();
    }
    return report;
}

}  // namespace echodfkd
