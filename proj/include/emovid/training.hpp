#pragma once

#include "emovid/model.hpp"
#include "emovid/params.hpp"
#include "emovid/sample.hpp"
#include "emovid/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace emovid {

// Inverse-frequency weights w_c = N / (K * N_c); satisfies
// sum_c w_c * N_c == N. Throws on a zero count.
std::vector<double> class_weights(const std::vector<long>& counts);

double lr_schedule(int epoch, double base_lr = 1e-5, double decay = 0.6, int every = 30);

// Weighted cross entropy plus the attention orthogonality penalty.
Tensor loss(const Tensor& logits, int label, const std::vector<double>& weights,
            const Tensor& penalty, double lambda_f);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(ParamStore& params, AdamConfig cfg = {});
    // One bias-corrected update from the currently accumulated gradients.
    // Missing gradients count as zeros; non-finite gradients abort.
    void step(double lr);
    long steps_taken() const { return t_; }

private:
    ParamStore* params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<long>> confusion; // rows = truth, cols = prediction
    long total = 0;
};

MetricsReport evaluate(const Model& model, const std::vector<VideoSample>& dataset);

// Per-class label histogram; throws InputError on any unlabelled video.
std::vector<long> label_counts(const std::vector<VideoSample>& set, int num_classes);

// One optimizer update on a mini-batch: forward + loss per sample (with the
// noise plan applied when enabled), mean, backward, Adam step. Returns the
// batch loss; `context` prefixes the numeric-failure message.
double train_batch(Model& model, Adam& opt, double lr,
                   const std::vector<const VideoSample*>& batch,
                   const std::vector<double>& weights, const NoiseSpec& noise, Rng& rng,
                   const std::string& context);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 16;
    double base_lr = 1e-5;
    double lr_decay = 0.6;
    int lr_every = 30;
    std::uint64_t seed = 0;
    NoiseSpec noise; // augmentation + head dropout when enabled
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_accuracy = -1.0;
};

// Supervised loop over labelled videos. Deterministic for a fixed seed. The
// model is left holding the best-validation-epoch parameters (ties keep the
// earlier epoch); with an empty validation set it keeps the final epoch.
TrainResult train(Model& model, const std::vector<VideoSample>& train_set,
                  const std::vector<VideoSample>& val_set, const TrainConfig& cfg);

struct GradCheckReport {
    double max_rel_error = 0.0;
    long coords_checked = 0;
    long coords_skipped = 0; // probes straddling a relu/max kink, resampled
    std::string worst_param;
};

// Central-difference check (h = 1e-6) of the full video loss against the
// tape gradients, sampling coordinates from every parameter tensor. Probes
// where the h and 2h central differences disagree sit on a kink and are
// discarded in favor of fresh coordinates.
GradCheckReport gradcheck_model(Model& model, const VideoSample& video,
                                const std::vector<double>& weights, std::uint64_t seed,
                                long min_coords = 100);

} // namespace emovid
