#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "echodfkd/errors.hpp"

namespace echodfkd {

enum class MetricKind { AFD_SUM, ONE_MINUS_DICE, ONE_MINUS_IOU };

std::string to_string(MetricKind k);
MetricKind metric_kind_from_string(const std::string& s);

struct ScalingPoint {
    int64_t param_count = 0;
    double metric_value = 0.0;
    MetricKind metric_kind = MetricKind::AFD_SUM;
};

struct LogLogFit {
    double slope = 0.0;      // positive slope = improvement with size
    double intercept = 0.0;
    double r_squared = 0.0;
};

// OLS of -log(metric_value) against log(param_count); every metric kind
// uses the same -log transform so slope signs are comparable.
LogLogFit fit_loglog(const std::vector<ScalingPoint>& points);

struct SaturationSplit {
    std::vector<ScalingPoint> linear_region;
    std::vector<ScalingPoint> plateau_region;
    int64_t knee = 0;  // largest param_count in the linear region
};

// Knee minimizing SSE of (line on the left) + (constant on the right),
// in transformed log-log space. Ties pick the smaller knee.
SaturationSplit saturation_split(const std::vector<ScalingPoint>& points);

namespace reference {
// Published log-slopes, synthetic-data regime then real-data regime.
inline constexpr double kSlopeAfdHuman = 0.15;
inline constexpr double kSlopeAfdEchoClip = 0.086;
inline constexpr double kSlopeDice = 0.16;
inline constexpr double kSlopeMeanIou = 0.11;
inline constexpr double kSlopeAfdHumanReal = 0.124;
inline constexpr double kSlopeAfdEchoClipReal = 0.07;
inline constexpr double kSlopeMeanIouReal = 0.067;
inline constexpr double kSlopeDiceReal = 0.088;
}  // namespace reference

}  // namespace echodfkd
