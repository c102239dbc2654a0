#include "emovid/augment.hpp"

#include "emovid/error.hpp"

#include <algorithm>
#include <cmath>

namespace emovid {

namespace {

constexpr int kOpCount = 6;

bool is_signed_op(AugOp op) {
    return op == AugOp::Brightness || op == AugOp::Contrast || op == AugOp::TranslateX ||
           op == AugOp::TranslateY;
}

void brightness(std::vector<double>& ch, double delta) {
    for (auto& v : ch)
        v += delta;
}

void contrast(std::vector<double>& ch, double factor) {
    double mean = 0.0;
    for (double v : ch)
        mean += v;
    mean /= static_cast<double>(ch.size());
    for (auto& v : ch)
        v = mean + factor * (v - mean);
}

void translate(std::vector<double>& ch, int side, int dx, int dy) {
    if (dx == 0 && dy == 0)
        return;
    std::vector<double> out(ch.size());
    for (int y = 0; y < side; ++y) {
        const int sy = std::clamp(y - dy, 0, side - 1);
        for (int x = 0; x < side; ++x) {
            const int sx = std::clamp(x - dx, 0, side - 1);
            out[static_cast<size_t>(y) * side + x] = ch[static_cast<size_t>(sy) * side + sx];
        }
    }
    ch = std::move(out);
}

void sharpness(std::vector<double>& ch, int side, double blend) {
    if (blend == 0.0)
        return;
    // 3x3 sharpen kernel: 5 at the center, -1 on the cross, edge padded.
    std::vector<double> out(ch.size());
    auto at = [&](int y, int x) {
        return ch[static_cast<size_t>(std::clamp(y, 0, side - 1)) * side +
                  std::clamp(x, 0, side - 1)];
    };
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double sharp =
                5.0 * at(y, x) - at(y - 1, x) - at(y + 1, x) - at(y, x - 1) - at(y, x + 1);
            out[static_cast<size_t>(y) * side + x] = (1.0 - blend) * at(y, x) + blend * sharp;
        }
    ch = std::move(out);
}

void hflip(std::vector<double>& ch, int side) {
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side / 2; ++x)
            std::swap(ch[static_cast<size_t>(y) * side + x],
                      ch[static_cast<size_t>(y) * side + side - 1 - x]);
}

} // namespace

std::string aug_op_name(AugOp op) {
    switch (op) {
    case AugOp::Brightness: return "brightness";
    case AugOp::Contrast: return "contrast";
    case AugOp::TranslateX: return "translate_x";
    case AugOp::TranslateY: return "translate_y";
    case AugOp::Sharpness: return "sharpness";
    case AugOp::HorizontalFlip: return "horizontal_flip";
    }
    return "unknown";
}

AugmentPlan sample_plan(const NoiseSpec& spec, Rng& rng) {
    if (!spec.enabled)
        throw ConfigError("sample_plan: noise is disabled");
    if (spec.op_count_min < 0 || spec.op_count_max < spec.op_count_min ||
        spec.magnitude_min < 0 || spec.magnitude_max < spec.magnitude_min ||
        spec.magnitude_max > 9)
        throw ConfigError("sample_plan: bad op count or magnitude range");
    AugmentPlan plan;
    const int n = rng.uniform_int(spec.op_count_min, spec.op_count_max);
    plan.steps.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        PlanStep step;
        step.op = static_cast<AugOp>(rng.uniform_int(0, kOpCount - 1));
        step.magnitude = rng.uniform_int(spec.magnitude_min, spec.magnitude_max);
        step.sign = is_signed_op(step.op) ? (rng.uniform() < 0.5 ? -1 : 1) : 1;
        plan.steps.push_back(step);
    }
    return plan;
}

VideoSample apply_plan(const VideoSample& video, const AugmentPlan& plan) {
    VideoSample out = video;
    const int side = video.side;
    const size_t plane = static_cast<size_t>(side) * side;
    for (auto& frame : out.frames) {
        if (frame.size() != static_cast<size_t>(9) * plane)
            throw InputError("apply_plan: frame size does not match video side " +
                             std::to_string(side));
        for (int c = 0; c < 9; ++c) {
            std::vector<double> ch(frame.begin() + static_cast<long>(c * plane),
                                   frame.begin() + static_cast<long>((c + 1) * plane));
            for (const auto& step : plan.steps) {
                const double m = static_cast<double>(step.magnitude);
                switch (step.op) {
                case AugOp::Brightness:
                    brightness(ch, step.sign * 0.05 * m);
                    break;
                case AugOp::Contrast:
                    contrast(ch, 1.0 + step.sign * 0.09 * m);
                    break;
                case AugOp::TranslateX:
                    translate(ch, side,
                              static_cast<int>(std::lround(step.sign * (m / 9.0) * 0.10 * side)),
                              0);
                    break;
                case AugOp::TranslateY:
                    translate(ch, side, 0,
                              static_cast<int>(std::lround(step.sign * (m / 9.0) * 0.10 * side)));
                    break;
                case AugOp::Sharpness:
                    sharpness(ch, side, m / 9.0);
                    break;
                case AugOp::HorizontalFlip:
                    hflip(ch, side);
                    break;
                }
            }
            for (auto& v : ch)
                v = std::clamp(v, 0.0, 1.0);
            std::copy(ch.begin(), ch.end(), frame.begin() + static_cast<long>(c * plane));
        }
    }
    return out;
}

} // namespace emovid
