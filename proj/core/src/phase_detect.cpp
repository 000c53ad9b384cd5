#include "echodfkd/phase_detect.hpp"

#include <algorithm>
#include <cmath>

namespace echodfkd {

namespace {

// lower median: element at index floor((T-1)/2) of the sorted values,
// so the median is always an attained value
double lower_median(std::vector<double> v) {
    size_t k = (v.size() - 1) / 2;
    std::nth_element(v.begin(), v.begin() + k, v.end());
    return v[k];
}

struct Block {
    int first, last;  // inclusive
    int extreme;      // index of extreme value within the block
};

int block_distance(const Block& b, int reference) {
    if (reference >= b.first && reference <= b.last) return 0;
    return std::min(std::abs(reference - b.first), std::abs(reference - b.last));
}

}  // namespace

int detect_extreme_frame(const AreaSeries& series, int reference_frame,
                         PhaseMode mode) {
    const auto& v = series.values;
    int t = static_cast<int>(v.size());
    if (t < 3) throw InputError("series too short (T < 3)");
    if (reference_frame < 0 || reference_frame >= t)
        throw InputError("reference frame out of range");

    double m = lower_median(v);
    auto qualifies = [&](double x) {
        return mode == PhaseMode::ES ? x < m : x > m;
    };
    auto better = [&](double x, double best) {
        return mode == PhaseMode::ES ? x < best : x > best;
    };

    std::vector<Block> blocks;
    for (int i = 0; i < t; ++i) {
        if (!qualifies(v[i])) continue;
        if (blocks.empty() || blocks.back().last != i - 1) {
            blocks.push_back({i, i, i});
        } else {
            Block& b = blocks.back();
            b.last = i;
            if (better(v[i], v[b.extreme])) b.extreme = i;
        }
    }
    if (blocks.empty())
        throw DegenerateSeries("no values strictly " +
                               std::string(mode == PhaseMode::ES ? "below" : "above") +
                               " the median");

    const Block* chosen = &blocks[0];
    int best_d = block_distance(blocks[0], reference_frame);
    for (size_t i = 1; i < blocks.size(); ++i) {
        int d = block_distance(blocks[i], reference_frame);
        if (d < best_d) {  // ties keep the earlier block
            best_d = d;
            chosen = &blocks[i];
        }
    }
    return chosen->extreme;
}

PhaseEvents detect_phases(const AreaSeries& series, int ed_reference,
                          int es_reference) {
    PhaseEvents ev;
    try {
        ev.ed_frame = detect_extreme_frame(series, ed_reference, PhaseMode::ED);
    } catch (const DegenerateSeries&) {
        ev.ed_frame = ed_reference;
        ev.ed_degenerate = true;
    }
    try {
        ev.es_frame = detect_extreme_frame(series, es_reference, PhaseMode::ES);
    } catch (const DegenerateSeries&) {
        ev.es_frame = es_reference;
        ev.es_degenerate = true;
    }
    return ev;
}

double afd(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size())
        throw InputError("frame list length mismatch");
    if (predicted.empty()) throw InputError("need at least one frame pair");
    double s = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i)
        s += std::abs(predicted[i] - labels[i]);
    return s / static_cast<double>(predicted.size());
}

SamplingRateBins afd_by_sampling_rate(
    const std::vector<std::pair<double, double>>& entries) {
    if (entries.empty()) throw InputError("no entries");
    SamplingRateBins out;
    std::vector<std::pair<int, std::pair<double, int>>> bins;  // lo -> (sum, n)
    double sxy = 0.0, sxx = 0.0;
    for (const auto& [fps, err] : entries) {
        int lo = static_cast<int>(std::floor(fps / 10.0)) * 10;
        auto it = std::find_if(bins.begin(), bins.end(),
                               [&](const auto& b) { return b.first == lo; });
        if (it == bins.end()) {
            bins.push_back({lo, {err, 1}});
        } else {
            it->second.first += err;
            it->second.second += 1;
        }
        sxy += fps * err;
        sxx += fps * fps;
    }
    std::sort(bins.begin(), bins.end());
    for (const auto& [lo, acc] : bins) {
        out.bin_fps_lo.push_back(lo);
        out.mean_abs_error.push_back(acc.first / acc.second);
        out.counts.push_back(acc.second);
    }
    out.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    return out;
}

double systematic_offset(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw InputError("frame list length mismatch");
    if (a.empty()) throw InputError("need at least one frame pair");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] - b[i];
    return s / static_cast<double>(a.size());
}

}  // namespace echodfkd
