#pragma once

#include "emovid/params.hpp"
#include "emovid/rng.hpp"
#include "emovid/sample.hpp"
#include "emovid/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace emovid {

struct BackboneConfig {
    int num_blocks = 4;
    std::vector<int> channels_per_block = {24, 48, 96, 192};
    int input_side = 32;
    int groups = 3;
};

struct AttentionConfig {
    int hops = 2;      // rows of the spatial attention matrix M
    int hidden = 32;   // U
    int channel_r = 64;
    int frame_r = 64;
    bool concat_hops = false; // false: mean over hops, keeps block feature length D
    // Ablation toggles. A disabled level degrades to an unweighted average
    // over the same axis (constant attention, zero orthogonality penalty).
    bool use_spatial = true;
    bool use_channel = true;
    bool use_frame = true;
};

struct ModelConfig {
    BackboneConfig backbone;
    AttentionConfig attention;
    int num_classes = kNumClasses;
    double lambda_f = 1.0; // weight of the attention orthogonality penalty
};

struct SpatialResult {
    Tensor feature; // length D (or h*D when concatenating hops)
    Tensor penalty; // scalar ||M M^T - I||_F
};

struct ChannelResult {
    Tensor fused;                 // length l
    std::array<Tensor, 3> alphas; // face, eyes, mouth gates
};

struct FrameResult {
    Tensor fused;               // length l
    std::vector<Tensor> alphas; // one gate per frame
    // Content-determined fold order over frames; reductions that must be
    // permutation invariant (the fused vector, the penalty mean) follow it.
    std::vector<size_t> order;
};

// Per-video forward output with the attention diagnostics needed for
// inspection dumps and the regularized loss.
struct VideoOutput {
    Tensor logits;       // length num_classes
    Tensor penalty;      // scalar, mean over (block, region, frame) instances
    std::vector<std::array<double, 3>> channel_alphas; // per frame
    std::vector<double> frame_alphas;                  // per frame, input order
};

class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Length l of a region feature vector (concatenation over block taps).
    int feature_length() const { return feature_length_; }

    // Backbone: per-block feature taps for one 9-channel frame stack.
    std::vector<Tensor> forward_frame(const Tensor& frame) const;

    // Attention levels. spatial_attention consumes one region slice of one
    // tap; channel_attention fuses the three region vectors of a frame;
    // frame_attention pools per-frame vectors into the video vector.
    SpatialResult spatial_attention(int block, const Tensor& region_tap) const;
    ChannelResult channel_attention(const Tensor& f1, const Tensor& f2, const Tensor& f3) const;
    FrameResult frame_attention(const std::vector<Tensor>& frame_feats) const;

    // Full pipeline for one video. Dropout (from noise.dropout_p) is applied
    // before the head only when training and noise.enabled; rng must be
    // non-null in that case.
    VideoOutput classify_video(const VideoSample& sample, const NoiseSpec& noise, bool training,
                               Rng* rng = nullptr) const;

    Tensor frame_to_tensor(const std::vector<double>& frame) const;

private:
    Tensor residual_block(const Tensor& x, int block) const;
    void init_params(Rng& rng);
    Tensor he_tensor(std::vector<int> shape, long fan_in, Rng& rng);

    ModelConfig cfg_;
    ParamStore params_;
    int feature_length_ = 0;
};

} // namespace emovid
