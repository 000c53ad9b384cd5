#pragma once

#include "echodfkd/data_model.hpp"

namespace echodfkd {

// Pulsating-ellipse clip generator with exact ground truth; stands in for
// a synthetic echo dataset at desk scale.
struct PhantomParams {
    double period_frames = 20.0;  // > 2
    double amplitude = 0.25;      // in [0,1)
    double phase = 0.0;           // radians
    double a0 = 14.0, b0 = 10.0;  // base semiaxes, px
    double cx = 32.0, cy = 32.0;  // center, px
    double wall_thickness = 3.0;  // px, >= 1
    double noise_std = 0.05;      // >= 0
    int t = 64, h = 64, w = 64;
    uint64_t seed = 0;

    void validate() const;
};

struct PhantomClip {
    VideoClip clip;
    BinaryMaskSequence ground_truth;
    ClipLabels labels;
};

PhantomClip generate_phantom(const PhantomParams& params, const std::string& clip_id,
                             double fps = 50.0);

// Wall ring of a ground-truth cavity frame: dilation by wall_thickness
// minus the cavity itself. Used by the mock prompt scorer.
std::vector<uint8_t> phantom_wall_ring(const BinaryMaskSequence& gt, int frame,
                                       int wall_thickness);

}  // namespace echodfkd
