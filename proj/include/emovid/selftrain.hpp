#pragma once

#include "emovid/model.hpp"
#include "emovid/sample.hpp"
#include "emovid/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace emovid {

// Teacher predictions over an unlabelled set: the same videos with the
// argmax class written into `label` and the max softmax probability into
// `confidence`. Inference mode, no noise, deterministic.
std::vector<VideoSample> pseudo_label(const Model& teacher,
                                      const std::vector<VideoSample>& unlabelled);

struct BalanceSpec {
    std::vector<double> target_fractions; // per class, sums to 1
    double confidence_threshold = 0.5;    // applied to over-represented classes only
};

// Target fractions proportional to a labelled-set histogram.
BalanceSpec balance_spec_from_counts(const std::vector<long>& counts,
                                     double confidence_threshold = 0.5);

struct BalanceReport {
    std::vector<long> before; // per-class input counts
    std::vector<long> target; // apportioned per-class targets
    std::vector<long> after;  // per-class output counts
    std::vector<std::string> warnings;
};

// Reshapes a pseudo-labelled multiset toward the target distribution while
// keeping the total size. Under-represented classes are duplicated
// round-robin (highest confidence gets its next copy first); over-represented
// classes drop below-threshold samples, then trim from the low-confidence
// end. Whenever the threshold leaves enough samples, every output count
// lands within one video of its exact fractional target.
std::vector<VideoSample> balance(const std::vector<VideoSample>& pseudo, const BalanceSpec& spec,
                                 BalanceReport* report = nullptr);

// Mixed batch stream: each step yields `batch` labelled then `ratio * batch`
// pseudo samples. One epoch is a full shuffled pass over the pseudo set;
// the labelled side cycles through successive reshuffled permutations.
class CombinedScheduler {
public:
    CombinedScheduler(const std::vector<VideoSample>& labelled,
                      const std::vector<VideoSample>& pseudo, int batch, int ratio,
                      std::uint64_t seed, bool recycle_labelled = true);

    long steps_per_epoch() const;
    int batch() const { return batch_; }
    int ratio() const { return ratio_; }

    // Pointers into the caller's vectors, valid while those vectors live.
    std::vector<std::vector<const VideoSample*>> next_epoch();

private:
    const VideoSample* next_labelled();

    const std::vector<VideoSample>* labelled_;
    const std::vector<VideoSample>* pseudo_;
    int batch_;
    int ratio_;
    bool recycle_;
    Rng rng_;
    std::vector<size_t> labelled_order_;
    size_t labelled_cursor_;
};

// One scheduler epoch as a standalone call.
std::vector<std::vector<const VideoSample*>> combined_batches(
    const std::vector<VideoSample>& labelled, const std::vector<VideoSample>& pseudo, int ratio,
    int batch, std::uint64_t seed);

struct StudentConfig {
    TrainConfig train;                 // epochs, lr, seed, noise for the student phase
    int ratio = 3;                     // pseudo : labelled samples per step
    double confidence_threshold = 0.5; // majority-class filter during balancing
};

struct StudentResult {
    TrainResult train;
    BalanceReport balance; // empty when no unlabelled data was given
    long pseudo_total = 0; // post-balance pseudo multiset size
};

// Noisy-student phase: pseudo-label with the teacher, balance toward the
// labelled distribution, then train the student on combined batches. An
// empty unlabelled set reduces to supervised train(). The student must not
// have fewer parameters or a different class count than the teacher.
StudentResult train_student(const Model& teacher, Model& student,
                            const std::vector<VideoSample>& labelled,
                            const std::vector<VideoSample>& val,
                            const std::vector<VideoSample>& unlabelled, const StudentConfig& cfg);

struct GenerationRecord {
    int generation = 0; // 0 is the supervised teacher
    double val_accuracy = 0.0;
    double val_macro_f1 = 0.0;
    int best_epoch = -1;
    long pseudo_total = 0;
    BalanceReport balance; // empty for generation 0
};

struct SelfTrainConfig {
    ModelConfig teacher_model;
    ModelConfig student_model; // same or larger capacity
    TrainConfig teacher_train; // typically noise-free
    TrainConfig student_train; // noise on for the noisy-student recipe
    int ratio = 3;
    double confidence_threshold = 0.5;
    int max_generations = 4;
    // Stop below this accuracy gain (0.1 pp). Gains are never below -1, so
    // any epsilon_sat <= -1 disables the saturation stop entirely.
    double epsilon_sat = 0.001;
    std::uint64_t seed = 0;     // master seed; all phase seeds derive from it
};

struct IterationState {
    std::vector<GenerationRecord> history; // teacher + one entry per student
    int best_generation = 0;
    double best_val_accuracy = -1.0;
    Model model; // best checkpoint across generations
};

// Full loop: train teacher, then repeat pseudo-label -> balance -> train
// student -> student becomes teacher, until the accuracy gain over the best
// generation so far falls below epsilon_sat or max_generations is reached.
IterationState iterate(const std::vector<VideoSample>& labelled,
                       const std::vector<VideoSample>& val,
                       const std::vector<VideoSample>& unlabelled, const SelfTrainConfig& cfg);

} // namespace emovid
