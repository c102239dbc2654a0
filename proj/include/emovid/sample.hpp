#pragma once

#include <string>
#include <vector>

namespace emovid {

inline constexpr int kNumClasses = 7;
inline constexpr int kUnlabelled = -1;

// Canonical class order; indices are stable across manifests, checkpoints and
// reports.
const std::vector<std::string>& class_names();
int class_index(const std::string& name); // -1 when unknown

// One video as a stack of preprocessed frames. Each frame is a 9-channel
// region stack (face RGB, eyes RGB, mouth RGB), row-major C x S x S, pixel
// values in [0,1].
struct VideoSample {
    std::string id;
    int side = 0;
    std::vector<std::vector<double>> frames;
    int label = kUnlabelled;
    double confidence = 1.0; // meaningful for pseudo-labelled samples

    size_t frame_len() const { return static_cast<size_t>(9) * side * side; }
};

// Noise injected during student training: random augmentations plus dropout
// before the classifier head.
struct NoiseSpec {
    bool enabled = false;
    int op_count_min = 2;
    int op_count_max = 4;
    int magnitude_min = 0;
    int magnitude_max = 9;
    double dropout_p = 0.5;
};

} // namespace emovid
