#include "emovid/error.hpp"
#include "emovid/model.hpp"

#include <algorithm>
#include <numeric>

namespace emovid {

namespace {

// Sigmoid gate sigma(w^T relu(W^T f)) used by both channel and frame
// attention; returns a single-element tensor.
Tensor attention_gate(const Tensor& f, const Tensor& W, const Tensor& w) {
    Tensor col = reshape(f, {f.dim(0), 1});
    Tensor hidden = relu(matmul(transpose(W), col));
    Tensor score = matmul(reshape(w, {1, w.dim(0)}), hidden);
    return sigmoid(reshape(score, {1}));
}

// Gate-weighted average around a pivot: out = f_p + sum_i (a_i/S) (f_i - f_p).
// Algebraically equal to sum(a_i f_i)/sum(a_i), but exact when inputs
// coincide (the deltas vanish bitwise), which the fusion invariants rely on.
Tensor pivot_average(const std::vector<const Tensor*>& feats,
                     const std::vector<const Tensor*>& gates) {
    Tensor total = *gates[0];
    for (size_t i = 1; i < gates.size(); ++i)
        total = add(total, *gates[i]);
    Tensor out = *feats[0];
    for (size_t i = 1; i < feats.size(); ++i) {
        Tensor coef = div_scalar(*gates[i], total);
        out = add(out, mul_scalar(sub(*feats[i], *feats[0]), coef));
    }
    return out;
}

} // namespace

SpatialResult Model::spatial_attention(int block, const Tensor& region_tap) const {
    if (region_tap.ndim() != 3)
        throw ShapeError("spatial_attention: expected D x H x W tap, got " +
                         shape_str(region_tap.shape()));
    const int d = region_tap.dim(0);
    const int r = region_tap.dim(1) * region_tap.dim(2);
    const auto& w1 = params_.at("spatial.block" + std::to_string(block) + ".w1");
    const auto& w2 = params_.at("spatial.block" + std::to_string(block) + ".w2");
    if (w1.dim(1) != d)
        throw ShapeError("spatial_attention: tap depth " + std::to_string(d) +
                         " does not match block " + std::to_string(block) + " params");

    Tensor lt = reshape(region_tap, {d, r});           // L^T, descriptors as columns
    SpatialResult res;
    Tensor m;
    if (cfg_.attention.use_spatial) {
        m = softmax_rows(matmul(w2, tanh_op(matmul(w1, lt)))); // hops x R
        Tensor e = sub(matmul(m, transpose(m)), Tensor::identity(cfg_.attention.hops));
        res.penalty = sqrt_op(sum(mul(e, e)));
    } else {
        m = Tensor::full({cfg_.attention.hops, r}, 1.0 / r); // unweighted average
        res.penalty = Tensor::scalar(0.0);
    }
    Tensor hops = matmul(m, transpose(lt)); // hops x D

    if (cfg_.attention.concat_hops) {
        res.feature = reshape(hops, {cfg_.attention.hops * d});
    } else {
        Tensor avg = Tensor::full({1, cfg_.attention.hops}, 1.0 / cfg_.attention.hops);
        res.feature = reshape(matmul(avg, hops), {d});
    }
    return res;
}

ChannelResult Model::channel_attention(const Tensor& f1, const Tensor& f2,
                                       const Tensor& f3) const {
    for (const Tensor* f : {&f1, &f2, &f3})
        if (f->ndim() != 1 || f->dim(0) != feature_length_)
            throw ShapeError("channel_attention: region vector shape " + shape_str(f->shape()) +
                             ", expected [" + std::to_string(feature_length_) + "]");
    ChannelResult res;
    if (cfg_.attention.use_channel) {
        const auto& W = params_.at("channel.W");
        const auto& w = params_.at("channel.w");
        res.alphas = {attention_gate(f1, W, w), attention_gate(f2, W, w),
                      attention_gate(f3, W, w)};
    } else {
        res.alphas = {Tensor::full({1}, 1.0), Tensor::full({1}, 1.0), Tensor::full({1}, 1.0)};
    }
    res.fused = pivot_average({&f1, &f2, &f3},
                              {&res.alphas[0], &res.alphas[1], &res.alphas[2]});
    return res;
}

FrameResult Model::frame_attention(const std::vector<Tensor>& frame_feats) const {
    if (frame_feats.empty())
        throw InputError("frame_attention: empty video");

    FrameResult res;
    res.alphas.reserve(frame_feats.size());
    for (const auto& f : frame_feats) {
        if (f.ndim() != 1 || f.dim(0) != feature_length_)
            throw ShapeError("frame_attention: frame feature shape " + shape_str(f.shape()) +
                             ", expected [" + std::to_string(feature_length_) + "]");
        if (cfg_.attention.use_frame) {
            res.alphas.push_back(attention_gate(f, params_.at("frame.W"), params_.at("frame.w")));
        } else {
            res.alphas.push_back(Tensor::full({1}, 1.0));
        }
    }

    // Fold in a content-determined order so any permutation of the input
    // frames produces a bit-identical video vector.
    res.order.resize(frame_feats.size());
    std::iota(res.order.begin(), res.order.end(), size_t{0});
    std::stable_sort(res.order.begin(), res.order.end(), [&](size_t a, size_t b) {
        return frame_feats[a].value() < frame_feats[b].value();
    });
    std::vector<const Tensor*> feats, gates;
    feats.reserve(res.order.size());
    gates.reserve(res.order.size());
    for (size_t idx : res.order) {
        feats.push_back(&frame_feats[idx]);
        gates.push_back(&res.alphas[idx]);
    }
    res.fused = pivot_average(feats, gates);
    return res;
}

VideoOutput Model::classify_video(const VideoSample& sample, const NoiseSpec& noise,
                                  bool training, Rng* rng) const {
    if (sample.frames.empty())
        throw InputError("classify_video: video '" + sample.id + "' has no frames");
    const int g = cfg_.backbone.groups;

    std::vector<Tensor> frame_feats;
    std::vector<Tensor> frame_penalties; // per-frame sum over (block, region)
    frame_feats.reserve(sample.frames.size());
    frame_penalties.reserve(sample.frames.size());
    VideoOutput out;

    for (const auto& raw : sample.frames) {
        Tensor frame = frame_to_tensor(raw);
        std::vector<Tensor> taps = forward_frame(frame);

        std::array<std::vector<Tensor>, 3> region_parts;
        Tensor pen;
        for (int b = 0; b < cfg_.backbone.num_blocks; ++b) {
            const int dg = cfg_.backbone.channels_per_block[static_cast<size_t>(b)] / g;
            for (int region = 0; region < 3; ++region) {
                Tensor slice = slice_channels(taps[static_cast<size_t>(b)], region * dg,
                                              (region + 1) * dg);
                SpatialResult sp = spatial_attention(b, slice);
                region_parts[static_cast<size_t>(region)].push_back(sp.feature);
                pen = pen.defined() ? add(pen, sp.penalty) : sp.penalty;
            }
        }
        frame_penalties.push_back(pen);
        Tensor f_face = concat(region_parts[0]);
        Tensor f_eyes = concat(region_parts[1]);
        Tensor f_mouth = concat(region_parts[2]);

        ChannelResult ch = channel_attention(f_face, f_eyes, f_mouth);
        out.channel_alphas.push_back({ch.alphas[0].item(), ch.alphas[1].item(),
                                      ch.alphas[2].item()});
        frame_feats.push_back(ch.fused);
    }

    FrameResult fr = frame_attention(frame_feats);
    // Mean over every (block, region, frame) instance, folded in the same
    // canonical frame order as the video vector so the result is exactly
    // permutation invariant.
    Tensor penalty_sum = frame_penalties[fr.order[0]];
    for (size_t i = 1; i < fr.order.size(); ++i)
        penalty_sum = add(penalty_sum, frame_penalties[fr.order[i]]);
    const int penalty_count = 3 * cfg_.backbone.num_blocks *
                              static_cast<int>(sample.frames.size());
    out.frame_alphas.reserve(fr.alphas.size());
    for (const auto& a : fr.alphas)
        out.frame_alphas.push_back(a.item());

    Tensor video_vec = fr.fused;
    if (training && noise.enabled && noise.dropout_p > 0.0) {
        if (!rng)
            throw UsageError("classify_video: dropout requested without an rng");
        video_vec = dropout(video_vec, noise.dropout_p, *rng, true);
    }

    Tensor logits = matmul(params_.at("head.W"), reshape(video_vec, {feature_length_, 1}));
    out.logits = add(reshape(logits, {cfg_.num_classes}), params_.at("head.b"));
    out.penalty = scale(penalty_sum, 1.0 / penalty_count);
    return out;
}

} // namespace emovid
