#pragma once

#include <filesystem>
#include <memory>

#include "echodfkd/data_model.hpp"
#include "echodfkd/phase_detect.hpp"

namespace echodfkd {

// Image-text similarity oracle. Scores a single grayscale frame against a
// prompt; the clip id and frame index give context for offline scorers.
class PromptScorer {
  public:
    virtual ~PromptScorer() = default;
    virtual double score(const std::string& clip_id, int frame,
                         const float* image, int h, int w,
                         const std::string& prompt) = 0;
    virtual std::string name() const = 0;
    virtual bool reentrant() const { return false; }
};

// Deterministic stand-in keyed to phantom ground truth.
struct MockScorerSpec {
    std::filesystem::path ground_truth_dir;
    int wall_thickness = 3;  // px, matches the phantom wall ring
};

std::unique_ptr<PromptScorer> build_mock_scorer(const MockScorerSpec& spec);
std::unique_ptr<PromptScorer> build_constant_scorer(double value);
// Offline mode: CSV with columns clip_id,frame,prompt,similarity.
std::unique_ptr<PromptScorer> build_scores_file_scorer(
    const std::filesystem::path& csv_path);

// Frames scored by the mask-quality protocols: labeled ED/ES when labels
// exist, else every 8th frame.
std::vector<int> protocol_frames(const VideoClip& clip, const ClipLabels* labels);

// Blacken under-mask pixels, score "WALL", average over frames.
// Higher = wall still visible = mask did not overflow.
double overflow_score(const VideoClip& clip, const BinaryMaskSequence& masks,
                      PromptScorer& scorer, const ClipLabels* labels = nullptr);

// Dilate the mask, blacken, score "LEFT VENTRICLE" - "NOTHING", average.
// A mask covering the whole ventricle drives the difference down.
double coverage_score(const VideoClip& clip, const BinaryMaskSequence& masks,
                      PromptScorer& scorer, const ClipLabels* labels = nullptr,
                      int dilation_px = 5);

// Detrended cumulative sum of sim(CLOSED) - sim(OPEN); feeds
// detect_extreme_frame as an area-series surrogate.
AreaSeries mitral_phase_signal(const VideoClip& clip, PromptScorer& scorer);

struct ClipMaskQuality {
    std::string clip_id;
    double overflow = 0.0;
    double coverage = 0.0;
};

struct MaskQualityReport {
    std::vector<ClipMaskQuality> clips;
    double mean_overflow = 0.0;
    double mean_coverage = 0.0;
};

MaskQualityReport evaluate_mask_quality(const DatasetManifest& manifest,
                                        const std::filesystem::path& data_dir,
                                        const std::filesystem::path& masks_dir,
                                        PromptScorer& scorer, int dilation_px = 5);

namespace prompts {
inline constexpr const char* kWall = "WALL";
inline constexpr const char* kLeftVentricle = "LEFT VENTRICLE";
inline constexpr const char* kNothing = "NOTHING";
inline constexpr const char* kMitralClosed = "THE MITRAL VALVE IS CLOSED";
inline constexpr const char* kMitralOpen = "THE MITRAL VALVE IS OPEN";
}  // namespace prompts

}  // namespace echodfkd
