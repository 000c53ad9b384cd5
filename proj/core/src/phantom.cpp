#include "echodfkd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace echodfkd {

namespace {

constexpr float kCavityIntensity = 0.08f;
constexpr float kWallIntensity = 0.9f;
constexpr float kBackgroundIntensity = 0.35f;

}  // namespace

void PhantomParams::validate() const {
    if (period_frames <= 2.0)
        throw PhantomConfigError("period_frames must be > 2");
    if (amplitude < 0.0 || amplitude >= 1.0)
        throw PhantomConfigError("amplitude must be in [0,1)");
    if (wall_thickness < 1.0)
        throw PhantomConfigError("wall_thickness must be >= 1");
    if (noise_std < 0.0) throw PhantomConfigError("noise_std must be >= 0");
    if (t < 1 || h < 8 || w < 8)
        throw PhantomConfigError("need T >= 1 and H,W >= 8");
    double grow = 1.0 + amplitude;
    if (std::max(a0, b0) * grow + wall_thickness >= std::min(h, w) / 2.0)
        throw PhantomConfigError("ellipse plus wall does not fit in the frame");
    if (period_frames >= t)
        throw PhantomConfigError("need at least one full beat (period < T)");
}

PhantomClip generate_phantom(const PhantomParams& p, const std::string& clip_id,
                             double fps) {
    p.validate();
    if (p.amplitude == 0.0)
        throw DegeneratePhantom("amplitude 0 produces no phase events");

    PhantomClip out;
    out.clip.id = clip_id;
    out.clip.fps = fps;
    out.clip.source = ClipSource::PHANTOM;
    out.clip.frames = Tensor<float>(p.t, 1, p.h, p.w);
    out.ground_truth.clip_id = clip_id;
    out.ground_truth.t = p.t;
    out.ground_truth.h = p.h;
    out.ground_truth.w = p.w;
    out.ground_truth.masks.assign(static_cast<size_t>(p.t) * p.h * p.w, 0);

    std::mt19937_64 rng(p.seed);
    std::normal_distribution<float> noise(0.0f, 1.0f);

    std::vector<int64_t> area(p.t, 0);
    for (int t = 0; t < p.t; ++t) {
        double pulse = 1.0 + p.amplitude * std::sin(2.0 * M_PI * t / p.period_frames + p.phase);
        double a = p.a0 * pulse, b = p.b0 * pulse;
        double aw = a + p.wall_thickness, bw = b + p.wall_thickness;
        for (int y = 0; y < p.h; ++y) {
            for (int x = 0; x < p.w; ++x) {
                double nx = (x - p.cx) / a, ny = (y - p.cy) / b;
                double wx = (x - p.cx) / aw, wy = (y - p.cy) / bw;
                float base;
                if (nx * nx + ny * ny <= 1.0) {
                    base = kCavityIntensity;
                    out.ground_truth.at(t, y, x) = 1;
                    ++area[t];
                } else if (wx * wx + wy * wy <= 1.0) {
                    base = kWallIntensity;
                } else {
                    base = kBackgroundIntensity;
                }
                if (p.noise_std > 0.0)
                    base += static_cast<float>(p.noise_std) * noise(rng);
                out.clip.frames.at(t, 0, y, x) = std::clamp(base, 0.0f, 1.0f);
            }
        }
    }

    // ED/ES from the exact rasterized area series, restricted to the beat
    // containing the middle frame.
    int mid = p.t / 2;
    int beat = static_cast<int>(std::floor(mid / p.period_frames));
    int t0 = std::max(0, static_cast<int>(std::ceil(beat * p.period_frames)));
    int t1 = std::min(p.t, static_cast<int>(std::ceil((beat + 1) * p.period_frames)));
    int ed = t0, es = t0;
    for (int t = t0; t < t1; ++t) {
        if (area[t] > area[ed]) ed = t;
        if (area[t] < area[es]) es = t;
    }
    if (ed == es) throw DegeneratePhantom("constant area series within the beat");
    out.labels.ed_frame = ed;
    out.labels.es_frame = es;
    // crude EF surrogate from the area extremes (area ~ volume^(2/3) is
    // ignored; this field is metadata only)
    out.labels.ef = 100.0 * (1.0 - static_cast<double>(area[es]) / area[ed]);
    return out;
}

std::vector<uint8_t> phantom_wall_ring(const BinaryMaskSequence& gt, int frame,
                                       int wall_thickness) {
    std::vector<uint8_t> cavity = gt.frame(frame);
    std::vector<uint8_t> dil(cavity.size());
    dilate_chebyshev(cavity.data(), dil.data(), gt.h, gt.w, wall_thickness);
    for (size_t i = 0; i < dil.size(); ++i) dil[i] = dil[i] && !cavity[i];
    return dil;
}

}  // namespace echodfkd
