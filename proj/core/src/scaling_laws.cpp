#include "echodfkd/scaling_laws.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace echodfkd {

std::string to_string(MetricKind k) {
    switch (k) {
        case MetricKind::AFD_SUM: return "AFD_SUM";
        case MetricKind::ONE_MINUS_DICE: return "ONE_MINUS_DICE";
        case MetricKind::ONE_MINUS_IOU: return "ONE_MINUS_IOU";
    }
    return "?";
}

MetricKind metric_kind_from_string(const std::string& s) {
    if (s == "AFD_SUM") return MetricKind::AFD_SUM;
    if (s == "ONE_MINUS_DICE") return MetricKind::ONE_MINUS_DICE;
    if (s == "ONE_MINUS_IOU") return MetricKind::ONE_MINUS_IOU;
    throw InputError("unknown metric kind '" + s + "'");
}

namespace {

double transform_metric(const ScalingPoint& p, size_t index) {
    if (p.param_count <= 0)
        throw InputError("nonpositive param_count at point " + std::to_string(index));
    if (p.metric_value <= 0.0)
        throw InputError("nonpositive metric value at point " + std::to_string(index));
    if (p.metric_kind != MetricKind::AFD_SUM && p.metric_value > 1.0)
        throw InputError("1-minus metric above 1 at point " + std::to_string(index));
    return -std::log(p.metric_value);
}

struct XY {
    std::vector<double> x, y;
};

XY to_xy(const std::vector<ScalingPoint>& points) {
    XY d;
    for (size_t i = 0; i < points.size(); ++i) {
        d.x.push_back(std::log(static_cast<double>(points[i].param_count)));
        d.y.push_back(transform_metric(points[i], i));
    }
    return d;
}

struct OlsResult {
    double slope, intercept, sse, r2;
};

OlsResult ols(const std::vector<double>& x, const std::vector<double>& y,
              size_t lo, size_t hi) {  // [lo, hi)
    size_t n = hi - lo;
    double mx = 0, my = 0;
    for (size_t i = lo; i < hi; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = lo; i < hi; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    OlsResult r;
    r.slope = sxx > 0 ? sxy / sxx : 0.0;
    r.intercept = my - r.slope * mx;
    r.sse = 0;
    for (size_t i = lo; i < hi; ++i) {
        double e = y[i] - (r.intercept + r.slope * x[i]);
        r.sse += e * e;
    }
    r.r2 = syy > 0 ? 1.0 - r.sse / syy : 1.0;
    return r;
}

}  // namespace

LogLogFit fit_loglog(const std::vector<ScalingPoint>& points) {
    std::set<int64_t> sizes;
    for (const auto& p : points) sizes.insert(p.param_count);
    if (sizes.size() < 2)
        throw InputError("need at least 2 points with distinct param_counts");
    XY d = to_xy(points);
    OlsResult r = ols(d.x, d.y, 0, d.x.size());
    return {r.slope, r.intercept, r.r2};
}

SaturationSplit saturation_split(const std::vector<ScalingPoint>& points) {
    if (points.size() < 4) throw InputError("need at least 4 points");
    std::vector<ScalingPoint> sorted = points;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScalingPoint& a, const ScalingPoint& b) {
                  return a.param_count < b.param_count;
              });
    XY d = to_xy(sorted);
    size_t n = sorted.size();

    // knee index k = last index of the linear region (-1: all plateau,
    // n-1: no plateau). A one-point plateau is disallowed since a
    // constant fits any single point exactly.
    double best_sse = 0.0;
    int best_k = 0;
    bool have = false;
    for (int k = -1; k < static_cast<int>(n); ++k) {
        int plateau = static_cast<int>(n) - 1 - k;
        if (plateau == 1) continue;
        double sse = 0.0;
        if (k >= 1) sse += ols(d.x, d.y, 0, k + 1).sse;
        if (plateau >= 2) {
            double mean = 0.0;
            for (size_t i = k + 1; i < n; ++i) mean += d.y[i];
            mean /= plateau;
            for (size_t i = k + 1; i < n; ++i)
                sse += (d.y[i] - mean) * (d.y[i] - mean);
        }
        if (!have || sse < best_sse - 1e-12) {  // ties keep the smaller knee
            best_sse = sse;
            best_k = k;
            have = true;
        }
    }

    SaturationSplit out;
    for (int i = 0; i < static_cast<int>(n); ++i)
        (i <= best_k ? out.linear_region : out.plateau_region).push_back(sorted[i]);
    out.knee = sorted[std::max(best_k, 0)].param_count;
    return out;
}

}  // namespace echodfkd
