#pragma once

#include "emovid/rng.hpp"
#include "emovid/sample.hpp"

#include <string>
#include <vector>

namespace emovid {

enum class AugOp {
    Brightness,
    Contrast,
    TranslateX,
    TranslateY,
    Sharpness,
    HorizontalFlip,
};

std::string aug_op_name(AugOp op);

struct PlanStep {
    AugOp op;
    int magnitude = 0; // 0..9
    int sign = 1;      // -1 or +1; +1 for unsigned ops
};

// One plan is sampled per video and reused for every frame so all
// alterations of a video stay label-consistent.
struct AugmentPlan {
    std::vector<PlanStep> steps;
};

AugmentPlan sample_plan(const NoiseSpec& spec, Rng& rng);

// Magnitude maps (m in 0..9, all identities at m = 0):
//   brightness: add sign * 0.05 * m
//   contrast:   x -> mean_c + (1 + sign * 0.09 * m) * (x - mean_c), per channel
//   translate:  shift by round(sign * (m/9) * 0.10 * side) pixels, edge padded
//   sharpness:  blend (m/9) toward a 3x3 sharpen-kernel pass, edge padded
//   flip:       horizontal mirror, magnitude ignored
// Result is clamped to [0,1] after the full plan.
VideoSample apply_plan(const VideoSample& video, const AugmentPlan& plan);

} // namespace emovid
