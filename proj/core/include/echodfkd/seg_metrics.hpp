#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "echodfkd/data_model.hpp"

namespace echodfkd {

// 2|A∩B| / (|A|+|B|); both masks empty scores 1.0.
double dice(const BinaryMask& a, const BinaryMask& b);
double iou(const BinaryMask& a, const BinaryMask& b);
double dice_frame(const BinaryMaskSequence& a, int fa, const BinaryMaskSequence& b, int fb);
double iou_frame(const BinaryMaskSequence& a, int fa, const BinaryMaskSequence& b, int fb);

enum class EvalPolicy { FULL, EXCLUDE_CORRUPTED };

struct ClipSegScore {
    std::string clip_id;
    double dice_ed = 0.0, dice_es = 0.0;
    double iou_ed = 0.0, iou_es = 0.0;
    bool missing_mask = false;
    bool empty_empty = false;  // empty-vs-empty convention triggered
};

struct SegScoreReport {
    std::vector<ClipSegScore> per_clip;
    double mean_dice = 0.0, mean_iou = 0.0;           // per-frame average
    double mean_dice_per_clip = 0.0, mean_iou_per_clip = 0.0;
    std::vector<std::pair<std::string, std::string>> excluded;  // id, reason
    EvalPolicy policy = EvalPolicy::FULL;
    // FULL runs also carry the EXCLUDE_CORRUPTED aggregates
    std::optional<double> mean_dice_excl, mean_iou_excl;
};

// Scores predicted masks against reference masks at the labeled ED/ES
// frames of each labeled record. A clip whose predicted mask is missing
// is scored 0 under FULL, never silently dropped.
SegScoreReport evaluate_segmentation(const std::filesystem::path& pred_mask_dir,
                                     const std::filesystem::path& ref_mask_dir,
                                     const DatasetManifest& manifest,
                                     EvalPolicy policy);

// Published aggregates for table formatting (Table 1-style context).
namespace reference {
inline constexpr double kB4l2DicePercent = 91.11;
inline constexpr double kB4l2MeanIouPercent = 83.96;
}  // namespace reference

}  // namespace echodfkd
