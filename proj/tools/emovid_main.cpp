#include "emovid/dataio.hpp"
#include "emovid/error.hpp"
#include "emovid/geometry.hpp"
#include "emovid/model.hpp"
#include "emovid/rng.hpp"
#include "emovid/sample.hpp"
#include "emovid/selftrain.hpp"
#include "emovid/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

using namespace emovid;
namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
    return buf;
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "configuration file (key=value lines)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", opts.overrides, "override one config key (KEY=VALUE, repeatable)")
        ->type_name("KEY=VALUE");
}

void apply_overrides(Config& cfg, const std::vector<std::string>& overrides) {
    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
}

Config resolve_config(const CommonOpts& opts) {
    Config cfg = opts.config_path.empty() ? Config::defaults() : Config::load(opts.config_path);
    apply_overrides(cfg, opts.overrides);
    return cfg;
}

std::vector<VideoSample> load_samples(const std::string& path) {
    const Manifest m = load_manifest(path);
    return samples_from_manifest(m, fs::path(path).parent_path().string());
}

std::string path_in(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

json balance_json(const BalanceReport& rep) {
    json j;
    j["before"] = rep.before;
    j["target"] = rep.target;
    j["after"] = rep.after;
    j["warnings"] = rep.warnings;
    return j;
}

// ---- gen-data ----------------------------------------------------------

struct GenDataArgs {
    CommonOpts common;
    std::string out;
    bool force = false;
    long seed = 0;
    CLI::Option* seed_opt = nullptr;
};

int run_gen_data(const GenDataArgs& a) {
    Config cfg = resolve_config(a.common);
    if (a.seed_opt->count() > 0) cfg.set("train.seed", std::to_string(a.seed));
    Rng rng(static_cast<std::uint64_t>(cfg.get_int("train.seed")));
    const SyntheticData data = generate_synthetic(cfg.synthetic_spec(), rng);

    const std::string dir = prepare_run_dir(a.out, a.force);
    cfg.save(path_in(dir, "config.txt"));
    save_manifest(data.train, path_in(dir, "train.json"));
    save_manifest(data.val, path_in(dir, "val.json"));
    save_manifest(data.unlabelled, path_in(dir, "unlabelled.json"));
    std::cout << "gen-data: " << data.train.entries.size() << " train, "
              << data.val.entries.size() << " val, " << data.unlabelled.entries.size()
              << " unlabelled videos -> " << dir << "\n";
    return 0;
}

// ---- preprocess --------------------------------------------------------

struct PreprocessArgs {
    CommonOpts common;
    std::string landmarks;
    std::string frames;
    std::string id_prefix = "clip";
    std::string out;
    double frame_width = 0.0;
    double frame_height = 0.0;
    bool fixed_length = false;
    bool force = false;
};

int run_preprocess(const PreprocessArgs& a) {
    Config cfg = resolve_config(a.common);
    std::ifstream in(a.landmarks);
    if (!in) throw InputError("preprocess: cannot open '" + a.landmarks + "'");
    const std::vector<LandmarkRecord> records = parse_landmark_records(in);
    const std::vector<ClipSpan> spans =
        validate_clips(records, cfg.clip_rule(), a.frame_width, a.frame_height, a.fixed_length);

    const std::string dir = prepare_run_dir(a.out, a.force);
    cfg.save(path_in(dir, "config.txt"));
    write_text_file(path_in(dir, "clips.json"), clip_spans_to_json(spans));
    std::cout << "preprocess: " << records.size() << " records -> " << spans.size()
              << " valid clips\n";

    if (!a.frames.empty()) {
        const std::vector<FrameImage> images = load_frame_images(a.frames);
        if (images.size() != records.size()) {
            throw InputError("preprocess: " + std::to_string(images.size()) + " frame images for " +
                             std::to_string(records.size()) + " landmark records");
        }
        const int side = static_cast<int>(cfg.get_int("crop.side"));
        const long base = records.empty() ? 0 : records.front().frame_index;
        Manifest m;
        m.dataset_id = a.id_prefix;
        m.classes = class_names();
        for (size_t k = 0; k < spans.size(); ++k) {
            ManifestEntry e;
            e.id = a.id_prefix + "_" + std::to_string(k);
            e.side = side;
            const size_t i0 = static_cast<size_t>(spans[k].start - base);
            for (long j = 0; j < spans[k].length; ++j) {
                e.frames.push_back(build_region_stack(images[i0 + j], records[i0 + j], side).value());
            }
            m.entries.push_back(std::move(e));
        }
        save_manifest(m, path_in(dir, "stacks.json"));
        std::cout << "preprocess: rendered " << m.entries.size() << " region-stack videos at side "
                  << side << "\n";
    }
    return 0;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
    CommonOpts common;
    std::string data;
    std::string val;
    std::string out;
    bool force = false;
    long epochs = 0, batch = 0, seed = 0;
    double lr = 0.0;
    bool noise = false;
    CLI::Option *epochs_opt = nullptr, *batch_opt = nullptr, *seed_opt = nullptr,
                *lr_opt = nullptr, *noise_opt = nullptr;
};

int run_train(const TrainArgs& a) {
    Config cfg = resolve_config(a.common);
    if (a.epochs_opt->count() > 0) cfg.set("train.epochs", std::to_string(a.epochs));
    if (a.batch_opt->count() > 0) cfg.set("train.batch", std::to_string(a.batch));
    if (a.seed_opt->count() > 0) cfg.set("train.seed", std::to_string(a.seed));
    if (a.lr_opt->count() > 0) cfg.set("train.lr", fmt_double(a.lr));
    if (a.noise_opt->count() > 0) cfg.set("noise.enabled", a.noise ? "true" : "false");

    const std::vector<VideoSample> train_set = load_samples(a.data);
    const std::vector<VideoSample> val_set =
        a.val.empty() ? std::vector<VideoSample>{} : load_samples(a.val);

    const std::string dir = prepare_run_dir(a.out, a.force);
    cfg.save(path_in(dir, "config.txt"));

    const TrainConfig tc = cfg.train_config();
    Model model(cfg.model_config(), tc.seed);
    const TrainResult result = train(model, train_set, val_set, tc);

    write_text_file(path_in(dir, "history.jsonl"), history_to_jsonl(result.history));
    save_checkpoint(model, path_in(dir, "model.ckpt"));
    const MetricsReport rep = evaluate(model, val_set.empty() ? train_set : val_set);
    write_text_file(path_in(dir, "metrics.json"), metrics_to_json(rep, class_names()));

    std::cout << "train: " << result.history.size() << " epochs on " << train_set.size()
              << " videos, best epoch " << result.best_epoch << ", "
              << (val_set.empty() ? "train" : "val") << " accuracy " << fmt_pct(rep.accuracy)
              << ", macro F1 " << fmt_pct(rep.macro_f1) << " -> " << dir << "\n";
    return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    CommonOpts common;
    std::string checkpoint;
    std::string data;
    std::string out;
    bool force = false;
};

int run_eval(const EvalArgs& a) {
    const Model model = load_checkpoint(a.checkpoint);
    const std::vector<VideoSample> samples = load_samples(a.data);
    const MetricsReport rep = evaluate(model, samples);
    const std::string text = metrics_to_json(rep, class_names());
    std::cout << text;
    if (!a.out.empty()) {
        Config cfg = resolve_config(a.common);
        const std::string dir = prepare_run_dir(a.out, a.force);
        cfg.save(path_in(dir, "config.txt"));
        write_text_file(path_in(dir, "metrics.json"), text);
    }
    return 0;
}

// ---- pseudo-label ------------------------------------------------------

struct PseudoArgs {
    CommonOpts common;
    std::string checkpoint;
    std::string data;
    std::string labelled;
    std::string out;
    bool force = false;
    double threshold = 0.0;
    CLI::Option* threshold_opt = nullptr;
};

int run_pseudo_label(const PseudoArgs& a) {
    Config cfg = resolve_config(a.common);
    if (a.threshold_opt->count() > 0) cfg.set("selftrain.threshold", fmt_double(a.threshold));

    const Model model = load_checkpoint(a.checkpoint);
    const std::vector<VideoSample> unl = load_samples(a.data);
    std::vector<VideoSample> pseudo = pseudo_label(model, unl);

    const std::string dir = prepare_run_dir(a.out, a.force);
    cfg.save(path_in(dir, "config.txt"));

    if (!a.labelled.empty()) {
        const std::vector<VideoSample> lab = load_samples(a.labelled);
        const BalanceSpec spec = balance_spec_from_counts(
            label_counts(lab, kNumClasses), cfg.get_double("selftrain.threshold"));
        BalanceReport rep;
        pseudo = balance(pseudo, spec, &rep);
        write_text_file(path_in(dir, "balance.json"), balance_json(rep).dump(2) + "\n");
        for (const std::string& w : rep.warnings) std::cout << "pseudo-label: warning: " << w << "\n";
    }

    save_manifest(manifest_from_samples("pseudo", pseudo), path_in(dir, "pseudo.json"));
    std::vector<long> hist(kNumClasses, 0);
    for (const VideoSample& s : pseudo) ++hist[static_cast<size_t>(s.label)];
    std::cout << "pseudo-label: " << pseudo.size() << " videos, per class:";
    for (int c = 0; c < kNumClasses; ++c) {
        std::cout << " " << class_names()[static_cast<size_t>(c)] << "="
                  << hist[static_cast<size_t>(c)];
    }
    std::cout << " -> " << dir << "\n";
    return 0;
}

// ---- selftrain ---------------------------------------------------------

struct SelfTrainArgs {
    CommonOpts common;
    std::string data;
    std::string val;
    std::string unlabelled;
    std::string out;
    bool force = false;
    long generations = 0, ratio = 0, epochs = 0, seed = 0;
    double threshold = 0.0, epsilon_sat = 0.0;
    bool student_noise = false;
    CLI::Option *generations_opt = nullptr, *ratio_opt = nullptr, *epochs_opt = nullptr,
                *seed_opt = nullptr, *threshold_opt = nullptr, *epsilon_opt = nullptr,
                *noise_opt = nullptr;
};

int run_selftrain(const SelfTrainArgs& a) {
    Config cfg = resolve_config(a.common);
    if (a.generations_opt->count() > 0)
        cfg.set("selftrain.generations", std::to_string(a.generations));
    if (a.ratio_opt->count() > 0) cfg.set("selftrain.ratio", std::to_string(a.ratio));
    if (a.epochs_opt->count() > 0) cfg.set("train.epochs", std::to_string(a.epochs));
    if (a.seed_opt->count() > 0) cfg.set("train.seed", std::to_string(a.seed));
    if (a.threshold_opt->count() > 0) cfg.set("selftrain.threshold", fmt_double(a.threshold));
    if (a.epsilon_opt->count() > 0) cfg.set("selftrain.epsilon_sat", fmt_double(a.epsilon_sat));
    if (a.noise_opt->count() > 0)
        cfg.set("selftrain.student_noise", a.student_noise ? "true" : "false");

    const std::vector<VideoSample> labelled = load_samples(a.data);
    const std::vector<VideoSample> val_set = load_samples(a.val);
    const std::vector<VideoSample> unl = load_samples(a.unlabelled);

    const std::string dir = prepare_run_dir(a.out, a.force);
    cfg.save(path_in(dir, "config.txt"));
    const std::string hash = hash_hex(fnv1a64(cfg.to_text()));

    const IterationState state = iterate(labelled, val_set, unl, cfg.selftrain_config());

    for (const GenerationRecord& rec : state.history) {
        write_text_file(path_in(dir, "generation_" + std::to_string(rec.generation) + ".json"),
                        generation_report_json(rec, hash));
    }
    save_checkpoint(state.model, path_in(dir, "model.ckpt"));

    json summary;
    summary["generations"] = state.history.size() - 1; // students, excluding the teacher
    summary["best_generation"] = state.best_generation;
    summary["best_val_accuracy"] = state.best_val_accuracy;
    summary["config_hash"] = hash;
    write_text_file(path_in(dir, "summary.json"), summary.dump(2) + "\n");

    for (const GenerationRecord& rec : state.history) {
        std::cout << "selftrain: generation " << rec.generation
                  << (rec.generation == 0 ? " (teacher)" : "") << ": val accuracy "
                  << fmt_pct(rec.val_accuracy) << ", macro F1 " << fmt_pct(rec.val_macro_f1);
        if (rec.generation > 0) std::cout << ", pseudo size " << rec.pseudo_total;
        std::cout << "\n";
    }
    std::cout << "selftrain: best generation " << state.best_generation << " ("
              << fmt_pct(state.best_val_accuracy) << ") -> " << dir << "\n";
    return 0;
}

// ---- gradcheck -------------------------------------------------------------

struct GradCheckArgs {
    CommonOpts common;
    long seed = 1;
    long coords = 100;
    double tol = 1e-4;
};

int run_gradcheck(const GradCheckArgs& a) {
    Config cfg = Config::defaults();
    if (a.common.config_path.empty()) {
        // desk-sized model so the finite-difference sweep stays fast
        cfg.set("model.blocks", "2");
        cfg.set("model.channels", "12,24");
        cfg.set("model.input_side", "8");
        cfg.set("model.att_hidden", "4");
        cfg.set("model.channel_r", "4");
        cfg.set("model.frame_r", "4");
    } else {
        cfg = Config::load(a.common.config_path);
    }
    apply_overrides(cfg, a.common.overrides);

    const ModelConfig mc = cfg.model_config();
    const std::uint64_t seed = static_cast<std::uint64_t>(a.seed);
    Model model(mc, seed);
    Rng rng(seed);
    VideoSample video;
    video.id = "gradcheck";
    video.side = mc.backbone.input_side;
    video.label = 2 % mc.num_classes;
    for (int f = 0; f < 3; ++f) {
        std::vector<double> frame(video.frame_len());
        for (double& v : frame) v = rng.uniform();
        video.frames.push_back(std::move(frame));
    }
    const std::vector<double> weights(static_cast<size_t>(mc.num_classes), 1.0);

    const GradCheckReport rep = gradcheck_model(model, video, weights, seed, a.coords);
    std::printf("gradcheck: max relative error %.3e over %ld coordinates (worst: %s)\n",
                rep.max_rel_error, rep.coords_checked, rep.worst_param.c_str());
    if (rep.coords_skipped > 0)
        std::printf("gradcheck: resampled %ld probes that straddled an activation kink\n",
                    rep.coords_skipped);
    if (!(rep.max_rel_error < a.tol)) {
        throw NumericError("gradcheck: max relative error " + fmt_double(rep.max_rel_error) +
                           " is not below " + fmt_double(a.tol));
    }
    return 0;
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
    CommonOpts common;
    std::string run_dir;
    std::string out;
    bool ablation = false;
    bool force = false;
    long epochs = 0, seed = 0;
    CLI::Option *epochs_opt = nullptr, *seed_opt = nullptr;
};

void print_run_summary(const std::string& dir) {
    if (!fs::is_directory(dir)) throw InputError("report: no run directory at '" + dir + "'");
    std::cout << "report: run " << dir << "\n";
    const std::string metrics = path_in(dir, "metrics.json");
    if (fs::exists(metrics)) {
        const json j = json::parse(read_text_file(metrics));
        std::cout << "  accuracy " << fmt_pct(j.at("accuracy").get<double>()) << ", macro F1 "
                  << fmt_pct(j.at("macro_f1").get<double>()) << " over "
                  << j.at("total").get<long>() << " videos\n";
    }
    const std::string summary = path_in(dir, "summary.json");
    if (fs::exists(summary)) {
        const json j = json::parse(read_text_file(summary));
        std::cout << "  self-training: " << j.at("generations").get<long>()
                  << " generations, best " << j.at("best_generation").get<int>() << " at "
                  << fmt_pct(j.at("best_val_accuracy").get<double>()) << "\n";
    }
    for (int g = 0;; ++g) {
        const std::string gen = path_in(dir, "generation_" + std::to_string(g) + ".json");
        if (!fs::exists(gen)) break;
        const json j = json::parse(read_text_file(gen));
        std::cout << "  generation " << g << ": val accuracy "
                  << fmt_pct(j.at("val_accuracy").get<double>()) << ", macro F1 "
                  << fmt_pct(j.at("val_macro_f1").get<double>()) << "\n";
    }
    const std::string history = path_in(dir, "history.jsonl");
    if (fs::exists(history)) {
        const std::string text = read_text_file(history);
        const long lines = std::count(text.begin(), text.end(), '\n');
        std::cout << "  history: " << lines << " epochs\n";
    }
}

int run_report(const ReportArgs& a) {
    if (!a.ablation) {
        if (a.run_dir.empty()) throw UsageError("report: pass --run DIR or --ablation");
        print_run_summary(a.run_dir);
        return 0;
    }
    if (a.out.empty()) throw UsageError("report --ablation: an --out directory is required");

    Config cfg = resolve_config(a.common);
    if (a.epochs_opt->count() > 0) cfg.set("train.epochs", std::to_string(a.epochs));
    if (a.seed_opt->count() > 0) cfg.set("train.seed", std::to_string(a.seed));

    const std::string dir = prepare_run_dir(a.out, a.force);
    cfg.save(path_in(dir, "config.txt"));

    Rng rng(static_cast<std::uint64_t>(cfg.get_int("train.seed")));
    const SyntheticData data = generate_synthetic(cfg.synthetic_spec(), rng);
    const std::vector<VideoSample> labelled = samples_from_manifest(data.train);
    const std::vector<VideoSample> val_set = samples_from_manifest(data.val);
    const std::vector<VideoSample> unl = samples_from_manifest(data.unlabelled);

    struct Row {
        std::string component;
        double accuracy;
        double macro_f1;
    };
    std::vector<Row> rows;

    // Component ladder: attention levels first, each arm trained supervised
    // and noise-free, then the noisy-student iterations on the full model.
    const auto supervised_arm = [&](const std::string& name, bool spatial, bool channel) {
        Config arm = cfg;
        arm.set("model.use_spatial", spatial ? "true" : "false");
        arm.set("model.use_channel", channel ? "true" : "false");
        arm.set("model.use_frame", "false");
        TrainConfig tc = arm.train_config();
        tc.noise.enabled = false;
        Model model(arm.model_config(), tc.seed);
        train(model, labelled, val_set, tc);
        const MetricsReport rep = evaluate(model, val_set);
        rows.push_back({name, rep.accuracy, rep.macro_f1});
        std::cout << "report: " << name << ": " << fmt_pct(rep.accuracy) << "\n";
    };
    supervised_arm("unweighted-average baseline", false, false);
    supervised_arm("+ spatial attention", true, false);
    supervised_arm("+ channel attention", true, true);

    // The full supervised model is the teacher (generation 0) of the loop.
    const IterationState state = iterate(labelled, val_set, unl, cfg.selftrain_config());
    for (const GenerationRecord& rec : state.history) {
        const std::string name = rec.generation == 0
                                     ? "+ frame attention"
                                     : "+ self-training iteration " + std::to_string(rec.generation);
        rows.push_back({name, rec.val_accuracy, rec.val_macro_f1});
        std::cout << "report: " << name << ": " << fmt_pct(rec.val_accuracy) << "\n";
    }

    json out = json::array();
    for (const Row& r : rows) {
        out.push_back(json{{"component", r.component},
                           {"val_accuracy", r.accuracy},
                           {"val_macro_f1", r.macro_f1}});
    }
    write_text_file(path_in(dir, "ablation.json"), out.dump(2) + "\n");
    std::cout << "report: ablation ladder with " << rows.size() << " rows -> " << dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"emovid: three-level-attention video emotion classifier with "
                 "noisy-student self-training"};
    app.require_subcommand(1);
    int rc = 0;

    auto gen = std::make_shared<GenDataArgs>();
    {
        CLI::App* cmd = app.add_subcommand("gen-data", "generate synthetic video manifests");
        add_common(cmd, gen->common);
        cmd->add_option("--out", gen->out, "output directory")->required();
        cmd->add_flag("--force", gen->force, "reuse a non-empty output directory");
        gen->seed_opt = cmd->add_option("--seed", gen->seed, "override train.seed");
        cmd->callback([gen, &rc] { rc = run_gen_data(*gen); });
    }

    auto pre = std::make_shared<PreprocessArgs>();
    {
        CLI::App* cmd = app.add_subcommand(
            "preprocess", "validate landmark clips and optionally render region stacks");
        add_common(cmd, pre->common);
        cmd->add_option("--landmarks", pre->landmarks, "landmark record stream")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--frame-width", pre->frame_width, "source frame width in pixels")
            ->required();
        cmd->add_option("--frame-height", pre->frame_height, "source frame height in pixels")
            ->required();
        cmd->add_option("--frames", pre->frames,
                        "frame image JSON (one image per landmark record)")
            ->check(CLI::ExistingFile);
        cmd->add_option("--id", pre->id_prefix, "video id prefix for rendered stacks");
        cmd->add_flag("--fixed-length", pre->fixed_length,
                      "emit fixed-length clips of clip.min_frames");
        cmd->add_option("--out", pre->out, "output directory")->required();
        cmd->add_flag("--force", pre->force, "reuse a non-empty output directory");
        cmd->callback([pre, &rc] { rc = run_preprocess(*pre); });
    }

    auto tr = std::make_shared<TrainArgs>();
    {
        CLI::App* cmd = app.add_subcommand("train", "supervised training on a labelled manifest");
        add_common(cmd, tr->common);
        cmd->add_option("--data", tr->data, "labelled training manifest")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--val", tr->val, "validation manifest")->check(CLI::ExistingFile);
        cmd->add_option("--out", tr->out, "run directory")->required();
        cmd->add_flag("--force", tr->force, "reuse a non-empty run directory");
        tr->epochs_opt = cmd->add_option("--epochs", tr->epochs, "override train.epochs");
        tr->batch_opt = cmd->add_option("--batch", tr->batch, "override train.batch");
        tr->lr_opt = cmd->add_option("--lr", tr->lr, "override train.lr");
        tr->seed_opt = cmd->add_option("--seed", tr->seed, "override train.seed");
        tr->noise_opt = cmd->add_flag("--noise,!--no-noise", tr->noise,
                                      "override noise.enabled (augmentation + dropout)");
        cmd->callback([tr, &rc] { rc = run_train(*tr); });
    }

    auto ev = std::make_shared<EvalArgs>();
    {
        CLI::App* cmd = app.add_subcommand("eval", "evaluate a checkpoint on a labelled manifest");
        add_common(cmd, ev->common);
        cmd->add_option("--checkpoint", ev->checkpoint, "model checkpoint")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--data", ev->data, "labelled manifest")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", ev->out, "optional run directory for metrics.json");
        cmd->add_flag("--force", ev->force, "reuse a non-empty run directory");
        cmd->callback([ev, &rc] { rc = run_eval(*ev); });
    }

    auto pl = std::make_shared<PseudoArgs>();
    {
        CLI::App* cmd = app.add_subcommand(
            "pseudo-label", "write teacher predictions for an unlabelled manifest");
        add_common(cmd, pl->common);
        cmd->add_option("--checkpoint", pl->checkpoint, "teacher checkpoint")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--data", pl->data, "unlabelled manifest")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--balance", pl->labelled,
                        "labelled manifest whose class distribution to match")
            ->check(CLI::ExistingFile);
        pl->threshold_opt =
            cmd->add_option("--threshold", pl->threshold, "override selftrain.threshold");
        cmd->add_option("--out", pl->out, "output directory")->required();
        cmd->add_flag("--force", pl->force, "reuse a non-empty output directory");
        cmd->callback([pl, &rc] { rc = run_pseudo_label(*pl); });
    }

    auto st = std::make_shared<SelfTrainArgs>();
    {
        CLI::App* cmd = app.add_subcommand("selftrain", "noisy-student self-training loop");
        add_common(cmd, st->common);
        cmd->add_option("--data", st->data, "labelled training manifest")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--val", st->val, "validation manifest")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--unlabelled", st->unlabelled, "unlabelled manifest")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", st->out, "run directory")->required();
        cmd->add_flag("--force", st->force, "reuse a non-empty run directory");
        st->generations_opt =
            cmd->add_option("--generations", st->generations, "override selftrain.generations");
        st->ratio_opt = cmd->add_option("--ratio", st->ratio, "override selftrain.ratio");
        st->epochs_opt = cmd->add_option("--epochs", st->epochs, "override train.epochs");
        st->seed_opt = cmd->add_option("--seed", st->seed, "override train.seed");
        st->threshold_opt =
            cmd->add_option("--threshold", st->threshold, "override selftrain.threshold");
        st->epsilon_opt = cmd->add_option("--epsilon-sat", st->epsilon_sat,
                                          "override selftrain.epsilon_sat (negative: never stop)");
        st->noise_opt = cmd->add_flag("--student-noise,!--no-student-noise", st->student_noise,
                                      "override selftrain.student_noise");
        cmd->callback([st, &rc] { rc = run_selftrain(*st); });
    }

    auto gc = std::make_shared<GradCheckArgs>();
    {
        CLI::App* cmd = app.add_subcommand(
            "gradcheck", "finite-difference audit of the autodiff gradients (desk-sized "
                         "model unless --config is given)");
        add_common(cmd, gc->common);
        cmd->add_option("--seed", gc->seed, "model/data seed");
        cmd->add_option("--coords", gc->coords, "minimum coordinates to probe");
        cmd->add_option("--tol", gc->tol, "maximum allowed relative error");
        cmd->callback([gc, &rc] { rc = run_gradcheck(*gc); });
    }

    auto rp = std::make_shared<ReportArgs>();
    {
        CLI::App* cmd =
            app.add_subcommand("report", "summarize a run directory or run the ablation ladder");
        add_common(cmd, rp->common);
        cmd->add_option("--run", rp->run_dir, "existing run directory to summarize");
        cmd->add_flag("--ablation", rp->ablation,
                      "train the component ladder on synthetic data");
        cmd->add_option("--out", rp->out, "run directory for the ablation artifacts");
        cmd->add_flag("--force", rp->force, "reuse a non-empty run directory");
        rp->epochs_opt = cmd->add_option("--epochs", rp->epochs, "override train.epochs");
        rp->seed_opt = cmd->add_option("--seed", rp->seed, "override train.seed");
        cmd->callback([rp, &rc] { rc = run_report(*rp); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << app.help();
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "emovid: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "emovid: " << e.what() << "\n";
        return 1;
    } catch (const InputError& e) {
        std::cerr << "emovid: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "emovid: " << e.what() << "\n";
        return 2;
    } catch (const GeometryError& e) {
        std::cerr << "emovid: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "emovid: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "emovid: internal error: " << e.what() << "\n";
        return 3;
    }
    return rc;
}
