#include "emovid/selftrain.hpp"

#include "emovid/error.hpp"
#include "emovid/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace emovid {

std::vector<VideoSample> pseudo_label(const Model& teacher,
                                      const std::vector<VideoSample>& unlabelled) {
    if (unlabelled.empty())
        throw InputError("pseudo_label: empty unlabelled set");
    const int k = teacher.config().num_classes;
    std::vector<VideoSample> out(unlabelled.begin(), unlabelled.end());
    NoiseSpec off;

#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(out.size()); ++i) {
        NoGradGuard guard;
        auto& video = out[static_cast<size_t>(i)];
        const auto logits = teacher.classify_video(video, off, false).logits.value();
        int pred = 0;
        for (int c = 1; c < k; ++c)
            if (logits[static_cast<size_t>(c)] > logits[static_cast<size_t>(pred)])
                pred = c;
        double denom = 0.0;
        for (int c = 0; c < k; ++c)
            denom += std::exp(logits[static_cast<size_t>(c)] - logits[static_cast<size_t>(pred)]);
        video.label = pred;
        video.confidence = 1.0 / denom;
    }
    return out;
}

BalanceSpec balance_spec_from_counts(const std::vector<long>& counts,
                                     double confidence_threshold) {
    long total = 0;
    for (long c : counts) {
        if (c < 0)
            throw ConfigError("balance_spec_from_counts: negative count");
        total += c;
    }
    if (total == 0)
        throw ConfigError("balance_spec_from_counts: all counts zero");
    BalanceSpec spec;
    spec.confidence_threshold = confidence_threshold;
    spec.target_fractions.reserve(counts.size());
    for (long c : counts)
        spec.target_fractions.push_back(static_cast<double>(c) / static_cast<double>(total));
    return spec;
}

namespace {

// Largest-remainder apportionment of `total` slots by fractions; every
// result is floor(f*total) or one more, so it stays within one of the exact
// fractional share.
std::vector<long> apportion(long total, const std::vector<double>& fractions) {
    const size_t k = fractions.size();
    std::vector<long> out(k, 0);
    std::vector<std::pair<double, size_t>> remainders;
    remainders.reserve(k);
    long assigned = 0;
    for (size_t c = 0; c < k; ++c) {
        const double quota = fractions[c] * static_cast<double>(total);
        out[c] = static_cast<long>(std::floor(quota));
        assigned += out[c];
        remainders.emplace_back(quota - std::floor(quota), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (long i = 0; i < total - assigned; ++i)
        out[remainders[static_cast<size_t>(i)].second] += 1;
    return out;
}

} // namespace

std::vector<VideoSample> balance(const std::vector<VideoSample>& pseudo, const BalanceSpec& spec,
                                 BalanceReport* report) {
    const size_t k = spec.target_fractions.size();
    if (k == 0)
        throw ConfigError("balance: empty target distribution");
    double sum = 0.0;
    for (double f : spec.target_fractions) {
        if (f < 0.0)
            throw ConfigError("balance: negative target fraction");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("balance: target fractions sum to " + std::to_string(sum));
    if (spec.confidence_threshold < 0.0 || spec.confidence_threshold > 1.0)
        throw ConfigError("balance: confidence threshold outside [0,1]");

    std::vector<std::vector<size_t>> by_class(k);
    for (size_t i = 0; i < pseudo.size(); ++i) {
        const int label = pseudo[i].label;
        if (label < 0 || label >= static_cast<int>(k))
            throw InputError("balance: video '" + pseudo[i].id + "' has label outside the table");
        by_class[static_cast<size_t>(label)].push_back(i);
    }
    for (auto& members : by_class)
        std::stable_sort(members.begin(), members.end(), [&](size_t a, size_t b) {
            return pseudo[a].confidence > pseudo[b].confidence;
        });

    const std::vector<long> targets = apportion(static_cast<long>(pseudo.size()),
                                                spec.target_fractions);

    BalanceReport rep;
    rep.target = targets;
    std::vector<VideoSample> out;
    out.reserve(pseudo.size());
    rep.before.resize(k);
    rep.after.assign(k, 0);

    for (size_t c = 0; c < k; ++c) {
        const auto& members = by_class[c];
        const long have = static_cast<long>(members.size());
        const long want = targets[c];
        rep.before[c] = have;

        if (have == 0) {
            if (want > 0)
                rep.warnings.push_back("class " + std::to_string(c) + ": no pseudo-labels, " +
                                       std::to_string(want) + " wanted");
            continue;
        }
        if (have > want) {
            // Over-represented: threshold first, then trim low-confidence.
            long kept = 0;
            while (kept < have &&
                   pseudo[members[static_cast<size_t>(kept)]].confidence >=
                       spec.confidence_threshold)
                ++kept;
            if (kept < want)
                rep.warnings.push_back("class " + std::to_string(c) + ": threshold leaves " +
                                       std::to_string(kept) + " of " + std::to_string(want) +
                                       " wanted");
            const long take = std::min(kept, want);
            for (long j = 0; j < take; ++j)
                out.push_back(pseudo[members[static_cast<size_t>(j)]]);
            rep.after[c] = take;
        } else {
            // Under-represented or exact: keep everything, then add whole
            // copies round-robin, highest confidence first.
            for (long j = 0; j < want; ++j)
                out.push_back(pseudo[members[static_cast<size_t>(j % have)]]);
            rep.after[c] = want;
        }
    }

    if (report)
        *report = std::move(rep);
    return out;
}

CombinedScheduler::CombinedScheduler(const std::vector<VideoSample>& labelled,
                                     const std::vector<VideoSample>& pseudo, int batch, int ratio,
                                     std::uint64_t seed, bool recycle_labelled)
    : labelled_(&labelled), pseudo_(&pseudo), batch_(batch), ratio_(ratio),
      recycle_(recycle_labelled), rng_(seed), labelled_cursor_(0) {
    if (labelled.empty() || pseudo.empty())
        throw InputError("scheduler: both sample sets must be non-empty");
    if (batch < 1 || ratio < 1)
        throw ConfigError("scheduler: batch and ratio must be >= 1");
    if (!recycle_ && static_cast<size_t>(batch) > labelled.size())
        throw ConfigError("scheduler: batch " + std::to_string(batch) + " exceeds " +
                          std::to_string(labelled.size()) +
                          " labelled samples and recycling is off");
    labelled_order_.resize(labelled.size());
    std::iota(labelled_order_.begin(), labelled_order_.end(), size_t{0});
    labelled_cursor_ = labelled_order_.size(); // force a shuffle on first use
}

long CombinedScheduler::steps_per_epoch() const {
    const long chunk = static_cast<long>(batch_) * ratio_;
    return (static_cast<long>(pseudo_->size()) + chunk - 1) / chunk;
}

const VideoSample* CombinedScheduler::next_labelled() {
    if (labelled_cursor_ >= labelled_order_.size()) {
        for (size_t i = labelled_order_.size(); i > 1; --i) {
            const size_t j =
                static_cast<size_t>(rng_.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(labelled_order_[i - 1], labelled_order_[j]);
        }
        labelled_cursor_ = 0;
    }
    return &(*labelled_)[labelled_order_[labelled_cursor_++]];
}

std::vector<std::vector<const VideoSample*>> CombinedScheduler::next_epoch() {
    std::vector<size_t> pseudo_order(pseudo_->size());
    std::iota(pseudo_order.begin(), pseudo_order.end(), size_t{0});
    for (size_t i = pseudo_order.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng_.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(pseudo_order[i - 1], pseudo_order[j]);
    }

    std::vector<std::vector<const VideoSample*>> batches;
    batches.reserve(static_cast<size_t>(steps_per_epoch()));
    const size_t chunk = static_cast<size_t>(batch_) * static_cast<size_t>(ratio_);
    for (size_t start = 0; start < pseudo_order.size(); start += chunk) {
        const size_t end = std::min(pseudo_order.size(), start + chunk);
        std::vector<const VideoSample*> step;
        step.reserve(static_cast<size_t>(batch_) + (end - start));
        for (int i = 0; i < batch_; ++i)
            step.push_back(next_labelled());
        for (size_t i = start; i < end; ++i)
            step.push_back(&(*pseudo_)[pseudo_order[i]]);
        batches.push_back(std::move(step));
    }
    return batches;
}

std::vector<std::vector<const VideoSample*>> combined_batches(
    const std::vector<VideoSample>& labelled, const std::vector<VideoSample>& pseudo, int ratio,
    int batch, std::uint64_t seed) {
    CombinedScheduler sched(labelled, pseudo, batch, ratio, seed);
    return sched.next_epoch();
}

StudentResult train_student(const Model& teacher, Model& student,
                            const std::vector<VideoSample>& labelled,
                            const std::vector<VideoSample>& val,
                            const std::vector<VideoSample>& unlabelled,
                            const StudentConfig& cfg) {
    if (student.config().num_classes != teacher.config().num_classes)
        throw ConfigError("train_student: teacher and student class counts differ");
    if (student.params().total_count() < teacher.params().total_count())
        throw ConfigError("train_student: student capacity " +
                          std::to_string(student.params().total_count()) +
                          " below teacher capacity " +
                          std::to_string(teacher.params().total_count()));

    StudentResult result;
    if (unlabelled.empty()) {
        result.train = train(student, labelled, val, cfg.train);
        return result;
    }

    const int k = student.config().num_classes;
    const std::vector<long> labelled_counts = label_counts(labelled, k);
    auto pseudo = pseudo_label(teacher, unlabelled);
    auto spec = balance_spec_from_counts(labelled_counts, cfg.confidence_threshold);
    auto balanced = balance(pseudo, spec, &result.balance);
    result.pseudo_total = static_cast<long>(balanced.size());
    if (balanced.empty()) {
        result.train = train(student, labelled, val, cfg.train);
        return result;
    }

    // Weight classes by the combined frequencies the student actually sees.
    std::vector<long> combined = labelled_counts;
    for (const auto& s : balanced)
        combined[static_cast<size_t>(s.label)] += 1;
    for (auto& c : combined)
        c = std::max<long>(c, 1);
    const std::vector<double> weights = class_weights(combined);

    Rng root(cfg.train.seed);
    const std::uint64_t sched_seed = root.next_u64();
    CombinedScheduler sched(labelled, balanced, cfg.train.batch_size, cfg.ratio, sched_seed);
    Adam opt(student.params());

    TrainResult& tr = result.train;
    std::vector<std::vector<double>> best = student.params().snapshot();
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const double lr =
            lr_schedule(epoch, cfg.train.base_lr, cfg.train.lr_decay, cfg.train.lr_every);
        Rng epoch_rng = root.fork(static_cast<std::uint64_t>(epoch));

        double epoch_loss = 0.0;
        long steps = 0;
        for (const auto& batch : sched.next_epoch()) {
            epoch_loss += train_batch(student, opt, lr, batch, weights, cfg.train.noise,
                                      epoch_rng,
                                      "train_student: epoch " + std::to_string(epoch) +
                                          ", step " + std::to_string(steps));
            ++steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = epoch_loss / static_cast<double>(steps);
        if (!val.empty()) {
            auto rep = evaluate(student, val);
            rec.val_accuracy = rep.accuracy;
            rec.val_macro_f1 = rep.macro_f1;
        }
        tr.history.push_back(rec);
        if (!val.empty() && rec.val_accuracy > tr.best_val_accuracy) {
            tr.best_val_accuracy = rec.val_accuracy;
            tr.best_epoch = epoch;
            best = student.params().snapshot();
        }
    }

    if (!val.empty() && cfg.train.epochs > 0)
        student.params().restore(best);
    else if (val.empty())
        tr.best_epoch = cfg.train.epochs - 1;
    return result;
}

IterationState iterate(const std::vector<VideoSample>& labelled,
                       const std::vector<VideoSample>& val,
                       const std::vector<VideoSample>& unlabelled, const SelfTrainConfig& cfg) {
    if (cfg.max_generations < 1)
        throw ConfigError("iterate: max_generations must be >= 1");
    if (val.empty())
        throw InputError("iterate: saturation is defined on validation accuracy; "
                         "provide a validation set");

    Rng master(cfg.seed);
    std::vector<GenerationRecord> history;

    Model teacher(cfg.teacher_model, master.next_u64());
    TrainConfig tcfg = cfg.teacher_train;
    tcfg.seed = master.next_u64();
    auto teacher_result = train(teacher, labelled, val, tcfg);

    GenerationRecord rec0;
    rec0.generation = 0;
    rec0.val_accuracy = teacher_result.best_val_accuracy;
    rec0.best_epoch = teacher_result.best_epoch;
    if (teacher_result.best_epoch >= 0)
        rec0.val_macro_f1 =
            teacher_result.history[static_cast<size_t>(teacher_result.best_epoch)].val_macro_f1;
    history.push_back(rec0);

    int best_generation = 0;
    double best_accuracy = teacher_result.best_val_accuracy;
    std::vector<std::vector<double>> best_params = teacher.params().snapshot();
    bool best_is_teacher_arch = true;

    Model current = std::move(teacher);
    for (int g = 1; g <= cfg.max_generations; ++g) {
        Model student(cfg.student_model, master.next_u64());
        StudentConfig scfg;
        scfg.train = cfg.student_train;
        scfg.train.seed = master.next_u64();
        scfg.ratio = cfg.ratio;
        scfg.confidence_threshold = cfg.confidence_threshold;

        auto res = train_student(current, student, labelled, val, unlabelled, scfg);

        GenerationRecord rec;
        rec.generation = g;
        rec.val_accuracy = res.train.best_val_accuracy;
        rec.best_epoch = res.train.best_epoch;
        if (res.train.best_epoch >= 0)
            rec.val_macro_f1 =
                res.train.history[static_cast<size_t>(res.train.best_epoch)].val_macro_f1;
        rec.pseudo_total = res.pseudo_total;
        rec.balance = res.balance;
        history.push_back(rec);

        const double gain = rec.val_accuracy - best_accuracy;
        if (rec.val_accuracy > best_accuracy) {
            best_accuracy = rec.val_accuracy;
            best_generation = g;
            best_params = student.params().snapshot();
            best_is_teacher_arch = false;
        }
        current = std::move(student);
        if (gain < cfg.epsilon_sat)
            break;
    }

    Model best_model(best_is_teacher_arch ? cfg.teacher_model : cfg.student_model, cfg.seed);
    best_model.params().restore(best_params);
    return IterationState{std::move(history), best_generation, best_accuracy,
                          std::move(best_model)};
}

} // namespace emovid
