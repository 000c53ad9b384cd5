#pragma once

#include <string>
#include <vector>

#include "echodfkd/errors.hpp"

namespace echodfkd {

struct AreaSeries {
    std::vector<double> values;
    std::string clip_id;
    double fps = 0.0;
};

struct PhaseEvents {
    int ed_frame = -1;
    int es_frame = -1;
    bool ed_degenerate = false;
    bool es_degenerate = false;
};

enum class PhaseMode { ES, ED };

// Median split of the area series: maximal contiguous blocks strictly
// below (ES) or above (ED) the median, pick the block nearest the
// reference frame, return the extreme index within it. Ties go to the
// earlier block / earlier index. Even-length series use the lower median.
int detect_extreme_frame(const AreaSeries& series, int reference_frame,
                         PhaseMode mode);

// Both events; a degenerate detection falls back to the reference frame
// so no example is ever dropped.
PhaseEvents detect_phases(const AreaSeries& series, int ed_reference,
                          int es_reference);

double afd(const std::vector<int>& predicted_frames,
           const std::vector<int>& label_frames);

struct SamplingRateBins {
    std::vector<double> bin_fps_lo;  // inclusive lower edge, width 10
    std::vector<double> mean_abs_error;
    std::vector<int> counts;
    double slope = 0.0;  // least-squares err ~ slope * fps through origin
};

SamplingRateBins afd_by_sampling_rate(
    const std::vector<std::pair<double, double>>& per_clip_fps_and_abs_error);

// Mean signed difference a - b; negative means a earlier.
double systematic_offset(const std::vector<int>& frames_a,
                         const std::vector<int>& frames_b);

// Published reference values kept for report tables (not reproducible here).
namespace reference {
inline constexpr double kAfdEdSubset = 2.72;
inline constexpr double kAfdEsSubset = 2.83;
inline constexpr double kAfdEdFull = 2.77;
inline constexpr double kAfdEsFull = 2.83;
inline constexpr double kHumanVsTeacherOffsetFrames = 2.3;  // human earlier
}  // namespace reference

}  // namespace echodfkd
