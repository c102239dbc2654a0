#include "emovid/model.hpp"

#include "emovid/error.hpp"

#include <cmath>

namespace emovid {

namespace {

std::string block_prefix(int b) { return "block" + std::to_string(b); }

} // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    const auto& bb = cfg_.backbone;
    if (bb.num_blocks < 1)
        throw ConfigError("model: num_blocks must be >= 1");
    if (static_cast<int>(bb.channels_per_block.size()) != bb.num_blocks)
        throw ConfigError("model: channels_per_block has " +
                          std::to_string(bb.channels_per_block.size()) + " entries for " +
                          std::to_string(bb.num_blocks) + " blocks");
    if (bb.groups != 3)
        throw ConfigError("model: the region pipeline requires groups == 3");
    for (int c : bb.channels_per_block)
        if (c < bb.groups || c % bb.groups != 0)
            throw ConfigError("model: channel count " + std::to_string(c) +
                              " not divisible by " + std::to_string(bb.groups) + " groups");
    if (bb.input_side < 1)
        throw ConfigError("model: input_side must be positive");
    if (cfg_.attention.hops < 1 || cfg_.attention.hidden < 1 || cfg_.attention.channel_r < 1 ||
        cfg_.attention.frame_r < 1)
        throw ConfigError("model: attention dimensions must be >= 1");
    if (cfg_.num_classes < 2)
        throw ConfigError("model: need at least 2 classes");

    feature_length_ = 0;
    for (int c : bb.channels_per_block)
        feature_length_ += (cfg_.attention.concat_hops ? cfg_.attention.hops : 1) * c / bb.groups;

    Rng rng(seed);
    init_params(rng);
}

Tensor Model::he_tensor(std::vector<int> shape, long fan_in, Rng& rng) {
    long n = 1;
    for (int d : shape)
        n *= d;
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data)
        v = std_dev * rng.normal();
    return Tensor::from(std::move(shape), std::move(data));
}

void Model::init_params(Rng& rng) {
    const auto& bb = cfg_.backbone;
    const auto& at = cfg_.attention;
    const int g = bb.groups;

    for (int b = 0; b < bb.num_blocks; ++b) {
        const int cin = b == 0 ? 9 : bb.channels_per_block[static_cast<size_t>(b - 1)];
        const int cout = bb.channels_per_block[static_cast<size_t>(b)];
        const int stride = b == 0 ? 1 : 2;
        const std::string p = block_prefix(b);

        params_.add(p + ".conv1.w",
                    he_tensor({cout, cin / g, 3, 3}, static_cast<long>(cin / g) * 9, rng));
        params_.add(p + ".conv1.gamma", Tensor::full({cout}, 1.0));
        params_.add(p + ".conv1.beta", Tensor::zeros({cout}));
        params_.add(p + ".conv2.w",
                    he_tensor({cout, cout / g, 3, 3}, static_cast<long>(cout / g) * 9, rng));
        params_.add(p + ".conv2.gamma", Tensor::full({cout}, 1.0));
        params_.add(p + ".conv2.beta", Tensor::zeros({cout}));
        if (cin != cout || stride != 1) {
            params_.add(p + ".short.w", he_tensor({cout, cin / g, 1, 1}, cin / g, rng));
            params_.add(p + ".short.gamma", Tensor::full({cout}, 1.0));
            params_.add(p + ".short.beta", Tensor::zeros({cout}));
        }
    }

    for (int b = 0; b < bb.num_blocks; ++b) {
        const int d = bb.channels_per_block[static_cast<size_t>(b)] / g;
        const std::string p = "spatial." + block_prefix(b);
        params_.add(p + ".w1", he_tensor({at.hidden, d}, d, rng));
        params_.add(p + ".w2", he_tensor({at.hops, at.hidden}, at.hidden, rng));
    }

    const int l = feature_length_;
    params_.add("channel.W", he_tensor({l, at.channel_r}, l, rng));
    params_.add("channel.w", he_tensor({at.channel_r}, at.channel_r, rng));
    params_.add("frame.W", he_tensor({l, at.frame_r}, l, rng));
    params_.add("frame.w", he_tensor({at.frame_r}, at.frame_r, rng));
    params_.add("head.W", he_tensor({cfg_.num_classes, l}, l, rng));
    params_.add("head.b", Tensor::zeros({cfg_.num_classes}));
}

Tensor Model::residual_block(const Tensor& x, int block) const {
    const auto& bb = cfg_.backbone;
    const int stride = block == 0 ? 1 : 2;
    const std::string p = block_prefix(block);

    Tensor path = grouped_conv2d(x, params_.at(p + ".conv1.w"), bb.groups, stride, 1);
    path = channel_affine(path, params_.at(p + ".conv1.gamma"), params_.at(p + ".conv1.beta"));
    path = relu(path);
    path = grouped_conv2d(path, params_.at(p + ".conv2.w"), bb.groups, 1, 1);
    path = channel_affine(path, params_.at(p + ".conv2.gamma"), params_.at(p + ".conv2.beta"));

    Tensor shortcut = x;
    if (params_.contains(p + ".short.w")) {
        shortcut = grouped_conv2d(x, params_.at(p + ".short.w"), bb.groups, stride, 0);
        shortcut = channel_affine(shortcut, params_.at(p + ".short.gamma"),
                                  params_.at(p + ".short.beta"));
    }
    if (shortcut.shape() != path.shape())
        throw ConfigError("residual_block " + std::to_string(block) + ": branch shapes " +
                          shape_str(shortcut.shape()) + " vs " + shape_str(path.shape()));
    return relu(add(shortcut, path));
}

std::vector<Tensor> Model::forward_frame(const Tensor& frame) const {
    if (frame.ndim() != 3 || frame.dim(0) != 9)
        throw InputError("forward_frame: expected a 9-channel region stack, got " +
                         shape_str(frame.shape()));
    std::vector<Tensor> taps;
    taps.reserve(static_cast<size_t>(cfg_.backbone.num_blocks));
    Tensor x = frame;
    for (int b = 0; b < cfg_.backbone.num_blocks; ++b) {
        x = residual_block(x, b);
        taps.push_back(x);
    }
    return taps;
}

Tensor Model::frame_to_tensor(const std::vector<double>& frame) const {
    const int s = cfg_.backbone.input_side;
    const size_t want = static_cast<size_t>(9) * s * s;
    if (frame.size() != want)
        throw InputError("frame has " + std::to_string(frame.size()) + " values, expected " +
                         std::to_string(want) + " (9x" + std::to_string(s) + "x" +
                         std::to_string(s) + ")");
    return Tensor::from({9, s, s}, frame);
}

} // namespace emovid
