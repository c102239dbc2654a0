#include "emovid/dataio.hpp"

#include "emovid/error.hpp"
#include "emovid/model.hpp"
#include "emovid/rng.hpp"

#include "doctest.h"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace emovid;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / "emovid_dataio" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Manifest tiny_manifest() {
    Manifest m;
    m.dataset_id = "toy";
    m.classes = class_names();
    ManifestEntry a;
    a.id = "vid_a";
    a.label = 2;
    a.confidence = 0.7142857142857143;
    a.side = 2;
    a.frames = {std::vector<double>(36, 1.0 / 3.0), std::vector<double>(36, 0.1)};
    a.frames[0][7] = std::sqrt(2.0) / 2.0;
    a.frames[1][35] = 1e-17;
    ManifestEntry b;
    b.id = "vid_b";
    b.label = kUnlabelled;
    b.side = 2;
    b.frames = {std::vector<double>(36, 0.25)};
    ManifestEntry c;
    c.id = "vid_c";
    c.label = 6;
    c.side = 3;
    c.frame_paths = {"frames/c0.f64", "frames/c1.f64"};
    m.entries = {a, b, c};
    return m;
}

} // namespace

TEST_CASE("manifest json round trip preserves everything") {
    const Manifest m = tiny_manifest();
    const std::string text = manifest_to_json(m);
    const Manifest back = manifest_from_json(text);
    CHECK(back == m);

    // labels travel as class names, absent labels as null
    CHECK(text.find("\"sad\"") != std::string::npos);
    CHECK(text.find("null") != std::string::npos);
    CHECK(text.find("\"frame_files\"") != std::string::npos);

    SUBCASE("file round trip") {
        const fs::path dir = fresh_dir("manifest_rt");
        const std::string path = (dir / "m.json").string();
        save_manifest(m, path);
        CHECK(load_manifest(path) == m);
    }
}

TEST_CASE("manifest validation rejects malformed data") {
    CHECK_THROWS_AS(manifest_from_json("not json"), InputError);
    CHECK_THROWS_AS(manifest_from_json("[1,2]"), InputError);
    CHECK_THROWS_AS(manifest_from_json(R"({"dataset":"d","classes":[],"entries":[]})"),
                    InputError);

    Manifest m = tiny_manifest();
    m.entries[0].label = 9; // outside the class table
    CHECK_THROWS_AS(manifest_to_json(m), InputError);

    m = tiny_manifest();
    m.entries[0].side = 0;
    CHECK_THROWS_AS(manifest_to_json(m), InputError);

    m = tiny_manifest();
    m.entries[0].frames[1].resize(35); // 9*2*2 = 36 expected
    CHECK_THROWS_AS(manifest_to_json(m), InputError);

    m = tiny_manifest();
    m.entries[0].frame_paths = {"x.f64"}; // both inline and file-backed
    CHECK_THROWS_AS(manifest_to_json(m), InputError);

    m = tiny_manifest();
    m.entries[1].frames.clear(); // neither
    CHECK_THROWS_AS(manifest_to_json(m), InputError);

    m = tiny_manifest();
    m.entries[0].confidence = 1.5;
    CHECK_THROWS_AS(manifest_to_json(m), InputError);

    m = tiny_manifest();
    m.entries[1].confidence = 0.5; // entry 1 is unlabelled
    CHECK_THROWS_AS(manifest_to_json(m), InputError);

    const std::string unknown_label =
        R"({"dataset":"d","classes":["anger","sad"],)"
        R"("entries":[{"id":"v","label":"joy","side":1,"frames":[[0,0,0,0,0,0,0,0,0]]}]})";
    CHECK_THROWS_AS(manifest_from_json(unknown_label), InputError);
}

TEST_CASE("samples and manifests convert both ways") {
    SUBCASE("inline entries become samples and back") {
        Manifest m = tiny_manifest();
        m.entries.pop_back(); // drop the file-backed entry
        const std::vector<VideoSample> samples = samples_from_manifest(m);
        REQUIRE(samples.size() == 2);
        CHECK(samples[0].id == "vid_a");
        CHECK(samples[0].label == 2);
        CHECK(samples[0].side == 2);
        CHECK(samples[0].frames == m.entries[0].frames);
        CHECK(samples[0].confidence == 0.7142857142857143);
        CHECK(samples[1].label == kUnlabelled);
        CHECK(manifest_from_samples("toy", samples) == m);
    }

    SUBCASE("file-backed frames load from base_dir") {
        const fs::path dir = fresh_dir("frame_files");
        fs::create_directories(dir / "frames");
        std::vector<double> f0(81), f1(81);
        for (size_t i = 0; i < 81; ++i) {
            f0[i] = 0.01 * static_cast<double>(i);
            f1[i] = 1.0 - 0.007 * static_cast<double>(i);
        }
        for (auto [name, data] : {std::pair{"c0.f64", &f0}, std::pair{"c1.f64", &f1}}) {
            std::ofstream out(dir / "frames" / name, std::ios::binary);
            out.write(reinterpret_cast<const char*>(data->data()), 81 * sizeof(double));
        }
        Manifest m = tiny_manifest();
        m.entries.erase(m.entries.begin(), m.entries.begin() + 2);
        const std::vector<VideoSample> samples = samples_from_manifest(m, dir.string());
        REQUIRE(samples.size() == 1);
        REQUIRE(samples[0].frames.size() == 2);
        CHECK(samples[0].frames[0] == f0);
        CHECK(samples[0].frames[1] == f1);

        SUBCASE("wrong file length fails") {
            std::ofstream out(dir / "frames" / "c0.f64", std::ios::binary);
            out.write(reinterpret_cast<const char*>(f0.data()), 80 * sizeof(double));
            out.close();
            CHECK_THROWS_AS(samples_from_manifest(m, dir.string()), InputError);
        }
        SUBCASE("missing file fails") {
            fs::remove(dir / "frames" / "c1.f64");
            CHECK_THROWS_AS(samples_from_manifest(m, dir.string()), InputError);
        }
    }
}

TEST_CASE("synthetic generator is deterministic with exact counts") {
    SyntheticSpec spec;
    spec.per_class = 4;
    spec.val_per_class = 2;
    spec.unlabelled = 11;
    spec.side = 6;
    Rng r1(99), r2(99);
    const SyntheticData a = generate_synthetic(spec, r1);
    const SyntheticData b = generate_synthetic(spec, r2);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.unlabelled == b.unlabelled);

    CHECK(a.train.entries.size() == 28);
    CHECK(a.val.entries.size() == 14);
    CHECK(a.unlabelled.entries.size() == 11);

    std::vector<int> hist(kNumClasses, 0);
    for (const ManifestEntry& e : a.train.entries) {
        REQUIRE(e.label >= 0);
        ++hist[static_cast<size_t>(e.label)];
        CHECK(e.side == 6);
        CHECK(e.frames.size() >= 2);
        CHECK(e.frames.size() <= 4);
        for (const auto& frame : e.frames) {
            REQUIRE(frame.size() == 9u * 6 * 6);
            for (double v : frame) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
    for (int c = 0; c < kNumClasses; ++c) CHECK(hist[static_cast<size_t>(c)] == 4);
    for (const ManifestEntry& e : a.unlabelled.entries) CHECK(e.label == kUnlabelled);
    for (const ManifestEntry& e : a.val.entries) CHECK(e.label >= 0);
}

TEST_CASE("synthetic classes are recoverable by nearest centroid") {
    SyntheticSpec spec;
    spec.per_class = 12;
    spec.val_per_class = 0;
    spec.unlabelled = 0;
    spec.side = 9;
    spec.signal = 0.6;
    spec.label_noise = 0.0;
    Rng rng(7);
    const SyntheticData data = generate_synthetic(spec, rng);

    const size_t dim = 9u * 9 * 9;
    auto mean_frames = [&](const ManifestEntry& e) {
        std::vector<double> m(dim, 0.0);
        for (const auto& frame : e.frames) {
            for (size_t i = 0; i < dim; ++i) m[i] += frame[i];
        }
        for (double& v : m) v /= static_cast<double>(e.frames.size());
        return m;
    };

    std::vector<std::vector<double>> centroid(kNumClasses, std::vector<double>(dim, 0.0));
    for (const ManifestEntry& e : data.train.entries) {
        const std::vector<double> m = mean_frames(e);
        auto& c = centroid[static_cast<size_t>(e.label)];
        for (size_t i = 0; i < dim; ++i) c[i] += m[i] / spec.per_class;
    }

    long correct = 0;
    for (const ManifestEntry& e : data.train.entries) {
        const std::vector<double> m = mean_frames(e);
        int best = -1;
        double best_d = 0.0;
        for (int c = 0; c < kNumClasses; ++c) {
            double d = 0.0;
            for (size_t i = 0; i < dim; ++i) {
                const double diff = m[i] - centroid[static_cast<size_t>(c)][i];
                d += diff * diff;
            }
            if (best < 0 || d < best_d) {
                best = c;
                best_d = d;
            }
        }
        if (best == e.label) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(data.train.entries.size());
    CHECK(acc >= 0.99);
}

TEST_CASE("synthetic label noise flips roughly the requested fraction") {
    SyntheticSpec spec;
    spec.per_class = 60;
    spec.val_per_class = 0;
    spec.unlabelled = 0;
    spec.side = 4;
    spec.label_noise = 0.3;
    Rng rng(5);
    const SyntheticData data = generate_synthetic(spec, rng);

    long wrong = 0;
    for (const ManifestEntry& e : data.train.entries) {
        REQUIRE(e.id.rfind("train_c", 0) == 0);
        const int truth = e.id[7] - '0'; // ids encode the drawn class
        if (e.label != truth) ++wrong;
    }
    // 420 draws at p = 0.3: mean 126, sigma ~9.4; allow 4 sigma
    CHECK(wrong > 88);
    CHECK(wrong < 164);
}

TEST_CASE("lighting shifts each video's brightness by one per-video constant") {
    SyntheticSpec spec;
    spec.per_class = 2;
    spec.val_per_class = 0;
    spec.unlabelled = 0;
    spec.side = 6;
    SyntheticSpec lit = spec;
    lit.lighting = 0.09; // small enough that nothing clamps (values stay in [0.01, 0.89])

    Rng ra(31), rb(31), rc(31);
    const SyntheticData flat = generate_synthetic(spec, ra);
    const SyntheticData a = generate_synthetic(lit, rb);
    const SyntheticData b = generate_synthetic(lit, rc);
    CHECK(a.train == b.train);

    // Same seed, so the first video is composed from identical draws before
    // the shift is applied; every pixel of every frame moves by the same amount.
    const ManifestEntry& e0 = flat.train.entries[0];
    const ManifestEntry& e1 = a.train.entries[0];
    REQUIRE(e0.frames.size() == e1.frames.size());
    double lo = 1.0, hi = -1.0;
    for (size_t f = 0; f < e0.frames.size(); ++f) {
        REQUIRE(e0.frames[f].size() == e1.frames[f].size());
        for (size_t i = 0; i < e0.frames[f].size(); ++i) {
            const double d = e1.frames[f][i] - e0.frames[f][i];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    }
    CHECK(hi - lo <= 1e-12); // one constant across all frames, up to rounding
    CHECK(std::abs(lo) > 1e-6);
    CHECK(std::abs(hi) <= 0.09 + 1e-12);

    // At the maximum range the shift can push pixels past either end; clamp holds.
    lit.lighting = 0.5;
    Rng rd(8);
    const SyntheticData wide = generate_synthetic(lit, rd);
    for (const ManifestEntry& e : wide.train.entries) {
        for (const auto& frame : e.frames) {
            for (double v : frame) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("synthetic spec validation") {
    Rng rng(1);
    SyntheticSpec s;
    s.per_class = 0;
    CHECK_THROWS_AS(generate_synthetic(s, rng), ConfigError);
    s = {};
    s.frames_min = 0;
    CHECK_THROWS_AS(generate_synthetic(s, rng), ConfigError);
    s = {};
    s.frames_max = 1; // below frames_min = 2
    CHECK_THROWS_AS(generate_synthetic(s, rng), ConfigError);
    s = {};
    s.side = 2;
    CHECK_THROWS_AS(generate_synthetic(s, rng), ConfigError);
    s = {};
    s.signal = 1.5;
    CHECK_THROWS_AS(generate_synthetic(s, rng), ConfigError);
    s = {};
    s.label_noise = 1.0;
    CHECK_THROWS_AS(generate_synthetic(s, rng), ConfigError);
    s = {};
    s.lighting = 0.6;
    CHECK_THROWS_AS(generate_synthetic(s, rng), ConfigError);
    s = {};
    s.lighting = -0.1;
    CHECK_THROWS_AS(generate_synthetic(s, rng), ConfigError);
}

TEST_CASE("config holds typed defaults and round trips through text") {
    Config c = Config::defaults();
    CHECK(c.get_int("train.lr_every") == 30);
    CHECK(c.get_double("train.lr") == 1e-5);
    CHECK(c.get_bool("noise.enabled") == false);
    CHECK(c.get_bool("selftrain.student_noise") == true);
    CHECK(c.get_int_list("model.channels") == std::vector<int>{24, 48, 96, 192});
    CHECK(c.get_int_list("student.channels").empty());
    CHECK(c.get_double("selftrain.epsilon_sat") == 0.001);

    SUBCASE("set validates and overrides") {
        c.set("train.epochs", "7");
        CHECK(c.get_int("train.epochs") == 7);
        c.set("model.channels", " 8, 16 ");
        CHECK(c.get_int_list("model.channels") == std::vector<int>{8, 16});
        CHECK_THROWS_AS(c.set("no.such.key", "1"), ConfigError);
        CHECK_THROWS_AS(c.set("train.epochs", "seven"), ConfigError);
        CHECK_THROWS_AS(c.set("train.lr", "1e-5x"), ConfigError);
        CHECK_THROWS_AS(c.set("noise.enabled", "maybe"), ConfigError);
        CHECK_THROWS_AS(c.get("no.such.key"), ConfigError);
    }

    SUBCASE("text form is stable and re-parseable") {
        c.set("train.batch", "3");
        c.set("data.signal", "0.25");
        const std::string once = c.to_text();
        const Config back = Config::from_text(once);
        CHECK(back.to_text() == once);
        CHECK(back.get_int("train.batch") == 3);
        CHECK(back.get_double("data.signal") == 0.25);
    }

    SUBCASE("parser accepts comments and spacing, rejects junk") {
        const Config p = Config::from_text("# hi\n\n  train.epochs = 9 \ncrop.side=16\n");
        CHECK(p.get_int("train.epochs") == 9);
        CHECK(p.get_int("crop.side") == 16);
        CHECK_THROWS_AS(Config::from_text("train.epochs 9\n"), ConfigError);
        CHECK_THROWS_AS(Config::from_text("bogus.key=1\n"), ConfigError);
    }

    SUBCASE("file round trip") {
        const fs::path dir = fresh_dir("config_rt");
        c.set("train.seed", "123");
        c.save((dir / "run.cfg").string());
        const Config back = Config::load((dir / "run.cfg").string());
        CHECK(back.to_text() == c.to_text());
    }
}

TEST_CASE("config typed views build the run structs") {
    Config c = Config::defaults();
    const ModelConfig mc = c.model_config();
    CHECK(mc.backbone.num_blocks == 4);
    CHECK(mc.backbone.channels_per_block == std::vector<int>{24, 48, 96, 192});
    CHECK(mc.backbone.input_side == 32);
    CHECK(mc.attention.hops == 2);
    CHECK(mc.attention.concat_hops == false);
    CHECK(mc.num_classes == 7);
    CHECK(mc.lambda_f == 1.0);

    SUBCASE("student view copies the teacher unless overridden") {
        ModelConfig sm = c.student_model_config();
        CHECK(sm.backbone.num_blocks == mc.backbone.num_blocks);
        CHECK(sm.backbone.channels_per_block == mc.backbone.channels_per_block);
        c.set("student.blocks", "2");
        c.set("student.channels", "32,64");
        sm = c.student_model_config();
        CHECK(sm.backbone.num_blocks == 2);
        CHECK(sm.backbone.channels_per_block == std::vector<int>{32, 64});
    }

    SUBCASE("train and noise views") {
        c.set("train.seed", "77");
        c.set("noise.enabled", "true");
        c.set("noise.dropout", "0.25");
        const TrainConfig tc = c.train_config();
        CHECK(tc.epochs == 100);
        CHECK(tc.batch_size == 16);
        CHECK(tc.base_lr == 1e-5);
        CHECK(tc.lr_decay == 0.6);
        CHECK(tc.lr_every == 30);
        CHECK(tc.seed == 77);
        CHECK(tc.noise.enabled);
        CHECK(tc.noise.dropout_p == 0.25);
        CHECK(tc.noise.op_count_min == 2);
        CHECK(tc.noise.op_count_max == 4);
    }

    SUBCASE("selftrain view: teacher is always clean, student follows the switch") {
        c.set("noise.enabled", "true"); // must not leak into the teacher phase
        SelfTrainConfig sc = c.selftrain_config();
        CHECK(sc.teacher_train.noise.enabled == false);
        CHECK(sc.student_train.noise.enabled == true);
        CHECK(sc.ratio == 3);
        CHECK(sc.confidence_threshold == 0.5);
        CHECK(sc.max_generations == 4);
        CHECK(sc.epsilon_sat == 0.001);
        c.set("selftrain.student_noise", "false");
        sc = c.selftrain_config();
        CHECK(sc.student_train.noise.enabled == false);
    }

    SUBCASE("data and clip views") {
        const SyntheticSpec ss = c.synthetic_spec();
        CHECK(ss.per_class == 30);
        CHECK(ss.side == 32);
        CHECK(ss.signal == 0.6);
        const ClipRule rule = c.clip_rule();
        CHECK(rule.min_frames == 30);
        CHECK(rule.area_fraction == 0.2);
    }
}

namespace {

ModelConfig desk_model() {
    ModelConfig mc;
    mc.backbone.num_blocks = 1;
    mc.backbone.channels_per_block = {9};
    mc.backbone.input_side = 8;
    mc.attention.hops = 2;
    mc.attention.hidden = 4;
    mc.attention.channel_r = 4;
    mc.attention.frame_r = 4;
    return mc;
}

VideoSample random_video(int side, int frames, int label, Rng& rng) {
    VideoSample v;
    v.id = "v";
    v.side = side;
    v.label = label;
    for (int f = 0; f < frames; ++f) {
        std::vector<double> frame(static_cast<size_t>(9) * side * side);
        for (double& x : frame) x = rng.uniform();
        v.frames.push_back(std::move(frame));
    }
    return v;
}

} // namespace

TEST_CASE("checkpoints round trip bit-exactly") {
    const fs::path dir = fresh_dir("ckpt");
    const std::string path = (dir / "model.ckpt").string();

    ModelConfig mc = desk_model();
    mc.attention.concat_hops = true;
    mc.attention.use_channel = false;
    mc.lambda_f = 0.125;
    Model model(mc, 123);
    save_checkpoint(model, path);
    Model back = load_checkpoint(path);

    const ModelConfig& bc = back.config();
    CHECK(bc.backbone.num_blocks == mc.backbone.num_blocks);
    CHECK(bc.backbone.channels_per_block == mc.backbone.channels_per_block);
    CHECK(bc.backbone.input_side == mc.backbone.input_side);
    CHECK(bc.attention.hops == mc.attention.hops);
    CHECK(bc.attention.hidden == mc.attention.hidden);
    CHECK(bc.attention.channel_r == mc.attention.channel_r);
    CHECK(bc.attention.frame_r == mc.attention.frame_r);
    CHECK(bc.attention.concat_hops == mc.attention.concat_hops);
    CHECK(bc.attention.use_spatial == true);
    CHECK(bc.attention.use_channel == false);
    CHECK(bc.attention.use_frame == true);
    CHECK(bc.num_classes == mc.num_classes);
    CHECK(bc.lambda_f == mc.lambda_f);

    const auto& a = model.params().items();
    const auto& b = back.params().items();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second.shape() == b[i].second.shape());
        CHECK(a[i].second.value() == b[i].second.value());
    }

    Rng rng(4);
    const VideoSample v = random_video(8, 3, 0, rng);
    const VideoOutput out_a = model.classify_video(v, NoiseSpec{}, false);
    const VideoOutput out_b = back.classify_video(v, NoiseSpec{}, false);
    CHECK(out_a.logits.value() == out_b.logits.value());

    SUBCASE("a fresh save of the loaded model is byte-identical") {
        const std::string path2 = (dir / "model2.ckpt").string();
        save_checkpoint(back, path2);
        CHECK(read_text_file(path) == read_text_file(path2));
    }

    SUBCASE("corruption is detected") {
        std::string bytes = read_text_file(path);
        write_text_file(path, bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_AS(load_checkpoint(path), InputError);

        write_text_file(path, bytes + "x");
        CHECK_THROWS_AS(load_checkpoint(path), InputError);

        bytes[0] = 'X';
        write_text_file(path, bytes);
        CHECK_THROWS_AS(load_checkpoint(path), InputError);

        CHECK_THROWS_AS(load_checkpoint((dir / "absent.ckpt").string()), InputError);
    }
}

TEST_CASE("run directories refuse silent reuse") {
    const fs::path root = fresh_dir("runs");
    const std::string fresh = (root / "a" / "b").string();
    CHECK(prepare_run_dir(fresh, false) == fresh);
    CHECK(fs::is_directory(fresh));

    // still empty: fine without force
    CHECK(prepare_run_dir(fresh, false) == fresh);

    write_text_file((fs::path(fresh) / "metrics.json").string(), "{}");
    CHECK_THROWS_AS(prepare_run_dir(fresh, false), UsageError);
    CHECK(prepare_run_dir(fresh, true) == fresh);

    const std::string file_path = (root / "plain.txt").string();
    write_text_file(file_path, "x");
    CHECK_THROWS_AS(prepare_run_dir(file_path, true), UsageError);
}

TEST_CASE("fnv1a64 matches the reference vectors") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("a") == 12638187200555641996ULL);
    CHECK(fnv1a64("hello") == 11831194018420276491ULL);
    CHECK(hash_hex(fnv1a64("")) == "cbf29ce484222325");
    CHECK(hash_hex(fnv1a64("hello")) == "a430d84680aabd0b");
    CHECK(hash_hex(0) == "0000000000000000");
}

TEST_CASE("report serializers are deterministic and parse back") {
    SUBCASE("history jsonl") {
        std::vector<EpochRecord> hist(2);
        hist[0] = {0, 1e-5, 1.9459101090932196, 0.14285714285714285, 0.0357142857142857};
        hist[1] = {1, 1e-5, 1.2, 0.5, 0.4};
        const std::string text = history_to_jsonl(hist);
        CHECK(text == history_to_jsonl(hist)); // same input, same bytes
        REQUIRE(std::count(text.begin(), text.end(), '\n') == 2);

        const size_t nl = text.find('\n');
        const nlohmann::json j0 = nlohmann::json::parse(text.substr(0, nl));
        CHECK(j0.at("epoch").get<int>() == 0);
        CHECK(j0.at("lr").get<double>() == 1e-5);
        CHECK(j0.at("train_loss").get<double>() == 1.9459101090932196);
        CHECK(j0.at("val_accuracy").get<double>() == 0.14285714285714285);
    }

    SUBCASE("metrics json") {
        MetricsReport r;
        r.accuracy = 0.75;
        r.macro_f1 = 0.7;
        r.total = 4;
        r.confusion = {{2, 0}, {1, 1}};
        const std::string text = metrics_to_json(r, {"a", "b"});
        const nlohmann::json j = nlohmann::json::parse(text);
        CHECK(j.at("accuracy").get<double>() == 0.75);
        CHECK(j.at("macro_f1").get<double>() == 0.7);
        CHECK(j.at("total").get<long>() == 4);
        CHECK(j.at("classes").get<std::vector<std::string>>() ==
              std::vector<std::string>{"a", "b"});
        CHECK(j.at("confusion")[1][0].get<long>() == 1);
    }

    SUBCASE("generation report json") {
        GenerationRecord rec;
        rec.generation = 2;
        rec.val_accuracy = 0.625;
        rec.val_macro_f1 = 0.6;
        rec.best_epoch = 13;
        rec.pseudo_total = 84;
        rec.balance.before = {10, 74};
        rec.balance.target = {42, 42};
        rec.balance.after = {42, 42};
        rec.balance.warnings = {"w"};
        const std::string text = generation_report_json(rec, "deadbeefdeadbeef");
        const nlohmann::json j = nlohmann::json::parse(text);
        CHECK(j.at("generation").get<int>() == 2);
        CHECK(j.at("val_accuracy").get<double>() == 0.625);
        CHECK(j.at("best_epoch").get<int>() == 13);
        CHECK(j.at("pseudo_total").get<long>() == 84);
        CHECK(j.at("balance").at("target").get<std::vector<long>>() ==
              std::vector<long>{42, 42});
        CHECK(j.at("config_hash").get<std::string>() == "deadbeefdeadbeef");
    }
}

TEST_CASE("frame image json loads and validates") {
    const fs::path dir = fresh_dir("frames_json");
    const std::string good = (dir / "frames.json").string();
    write_text_file(good, R"([
      {"width": 2, "height": 1, "rgb": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]},
      {"width": 1, "height": 1, "rgb": [1, 0, 0]}
    ])");
    const std::vector<FrameImage> imgs = load_frame_images(good);
    REQUIRE(imgs.size() == 2);
    CHECK(imgs[0].width == 2);
    CHECK(imgs[0].height == 1);
    CHECK(imgs[0].rgb == std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK(imgs[1].rgb == std::vector<double>{1.0, 0.0, 0.0});

    const std::string bad = (dir / "bad.json").string();
    write_text_file(bad, R"([{"width": 2, "height": 2, "rgb": [0.1]}])");
    CHECK_THROWS_AS(load_frame_images(bad), InputError);
    write_text_file(bad, R"({"width": 2})");
    CHECK_THROWS_AS(load_frame_images(bad), InputError);
}

TEST_CASE("clip spans serialize with their count") {
    const std::vector<ClipSpan> spans = {{0, 40}, {55, 30}};
    const nlohmann::json j = nlohmann::json::parse(clip_spans_to_json(spans));
    CHECK(j.at("count").get<int>() == 2);
    CHECK(j.at("spans")[0].at("start").get<long>() == 0);
    CHECK(j.at("spans")[0].at("length").get<long>() == 40);
    CHECK(j.at("spans")[1].at("start").get<long>() == 55);
    CHECK(clip_spans_to_json({}) == clip_spans_to_json({}));
}
