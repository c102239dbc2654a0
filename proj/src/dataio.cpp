#include "emovid/dataio.hpp"

#include "emovid/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace emovid {

namespace {

using nlohmann::json;

// ---- manifests -------------------------------------------------------------

void check_entry(const Manifest& m, const ManifestEntry& e, size_t idx) {
    const std::string where = "manifest entry " + std::to_string(idx) + " ('" + e.id + "')";
    if (e.id.empty()) throw InputError("manifest entry " + std::to_string(idx) + ": empty id");
    if (e.side < 1) throw InputError(where + ": side must be >= 1");
    if (e.label != kUnlabelled &&
        (e.label < 0 || e.label >= static_cast<int>(m.classes.size()))) {
        throw InputError(where + ": label index out of range");
    }
    if (!(e.confidence >= 0.0 && e.confidence <= 1.0)) {
        throw InputError(where + ": confidence outside [0,1]");
    }
    if (e.label == kUnlabelled && e.confidence != 1.0) {
        throw InputError(where + ": confidence is meaningless without a label");
    }
    const bool inline_mode = !e.frames.empty();
    const bool path_mode = !e.frame_paths.empty();
    if (inline_mode == path_mode) {
        throw InputError(where + ": needs inline frames or frame files, not both or neither");
    }
    const size_t want = static_cast<size_t>(9) * e.side * e.side;
    for (size_t f = 0; f < e.frames.size(); ++f) {
        if (e.frames[f].size() != want) {
            throw InputError(where + ": frame " + std::to_string(f) + " has " +
                             std::to_string(e.frames[f].size()) + " values, expected " +
                             std::to_string(want));
        }
    }
}

void check_manifest(const Manifest& m) {
    if (m.classes.empty()) throw InputError("manifest: empty class table");
    for (size_t i = 0; i < m.entries.size(); ++i) check_entry(m, m.entries[i], i);
}

} // namespace

std::string manifest_to_json(const Manifest& m) {
    check_manifest(m);
    json j;
    j["dataset"] = m.dataset_id;
    j["classes"] = m.classes;
    json entries = json::array();
    for (const ManifestEntry& e : m.entries) {
        json je;
        je["id"] = e.id;
        if (e.label == kUnlabelled) {
            je["label"] = nullptr;
        } else {
            je["label"] = m.classes[static_cast<size_t>(e.label)];
            je["confidence"] = e.confidence;
        }
        je["side"] = e.side;
        if (!e.frames.empty()) je["frames"] = e.frames;
        if (!e.frame_paths.empty()) je["frame_files"] = e.frame_paths;
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(std::string("manifest: invalid JSON: ") + e.what());
    }
    Manifest m;
    try {
        if (!j.is_object()) throw InputError("manifest: top level must be an object");
        m.dataset_id = j.at("dataset").get<std::string>();
        m.classes = j.at("classes").get<std::vector<std::string>>();
        for (const json& je : j.at("entries")) {
            ManifestEntry e;
            e.id = je.at("id").get<std::string>();
            if (je.contains("label") && !je.at("label").is_null()) {
                const std::string name = je.at("label").get<std::string>();
                auto it = std::find(m.classes.begin(), m.classes.end(), name);
                if (it == m.classes.end()) {
                    throw InputError("manifest entry '" + e.id + "': unknown label '" + name +
                                     "'");
                }
                e.label = static_cast<int>(it - m.classes.begin());
            }
            if (je.contains("confidence")) e.confidence = je.at("confidence").get<double>();
            e.side = je.at("side").get<int>();
            if (je.contains("frames")) {
                e.frames = je.at("frames").get<std::vector<std::vector<double>>>();
            }
            if (je.contains("frame_files")) {
                e.frame_paths = je.at("frame_files").get<std::vector<std::string>>();
            }
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("manifest: ") + e.what());
    }
    check_manifest(m);
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    write_text_file(path, manifest_to_json(m));
}

Manifest load_manifest(const std::string& path) { return manifest_from_json(read_text_file(path)); }

Manifest manifest_from_samples(const std::string& dataset_id,
                               const std::vector<VideoSample>& samples) {
    Manifest m;
    m.dataset_id = dataset_id;
    m.classes = class_names();
    m.entries.reserve(samples.size());
    for (const VideoSample& s : samples) {
        ManifestEntry e;
        e.id = s.id;
        e.label = s.label;
        if (s.label != kUnlabelled) e.confidence = s.confidence;
        e.side = s.side;
        e.frames = s.frames;
        m.entries.push_back(std::move(e));
    }
    check_manifest(m);
    return m;
}

namespace {

std::vector<double> read_frame_file(const std::filesystem::path& path, size_t want) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("frame file: cannot open '" + path.string() + "'");
    std::vector<double> values(want);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(want * sizeof(double)));
    if (static_cast<size_t>(in.gcount()) != want * sizeof(double)) {
        throw InputError("frame file: '" + path.string() + "' shorter than " +
                         std::to_string(want) + " doubles");
    }
    char extra = 0;
    if (in.read(&extra, 1)) {
        throw InputError("frame file: '" + path.string() + "' longer than " +
                         std::to_string(want) + " doubles");
    }
    return values;
}

} // namespace

std::vector<VideoSample> samples_from_manifest(const Manifest& m, const std::string& base_dir) {
    check_manifest(m);
    std::vector<VideoSample> out;
    out.reserve(m.entries.size());
    for (const ManifestEntry& e : m.entries) {
        VideoSample s;
        s.id = e.id;
        s.side = e.side;
        s.label = e.label;
        s.confidence = e.confidence;
        if (!e.frames.empty()) {
            s.frames = e.frames;
        } else {
            const size_t want = static_cast<size_t>(9) * e.side * e.side;
            for (const std::string& rel : e.frame_paths) {
                std::filesystem::path p =
                    base_dir.empty() ? std::filesystem::path(rel)
                                     : std::filesystem::path(base_dir) / rel;
                s.frames.push_back(read_frame_file(p, want));
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---- synthetic data --------------------------------------------------------

namespace {

void check_synthetic_spec(const SyntheticSpec& spec) {
    if (spec.per_class < 1) throw ConfigError("synthetic: per_class must be >= 1");
    if (spec.val_per_class < 0) throw ConfigError("synthetic: val_per_class must be >= 0");
    if (spec.unlabelled < 0) throw ConfigError("synthetic: unlabelled must be >= 0");
    if (spec.frames_min < 1 || spec.frames_max < spec.frames_min) {
        throw ConfigError("synthetic: need 1 <= frames_min <= frames_max");
    }
    if (spec.side < 3) throw ConfigError("synthetic: side must be >= 3");
    if (!(spec.signal >= 0.0 && spec.signal <= 1.0)) {
        throw ConfigError("synthetic: signal must be in [0,1]");
    }
    if (!(spec.label_noise >= 0.0 && spec.label_noise < 1.0)) {
        throw ConfigError("synthetic: label_noise must be in [0,1)");
    }
    if (!(spec.lighting >= 0.0 && spec.lighting <= 0.5)) {
        throw ConfigError("synthetic: lighting must be in [0,0.5]");
    }
}

// Class c brightens spatial cell c (of a 3x3 grid) in region group c % 3 on
// frames whose index parity matches c, so classes differ in where, in which
// region and when the signal shows up.
std::vector<std::vector<double>> synthetic_video(const SyntheticSpec& spec, int cls, Rng& rng) {
    const int side = spec.side;
    const size_t frame_len = static_cast<size_t>(9) * side * side;
    const int n = rng.uniform_int(spec.frames_min, spec.frames_max);
    std::vector<std::vector<double>> frames(static_cast<size_t>(n));
    for (auto& frame : frames) {
        frame.resize(frame_len);
        for (double& v : frame) v = 0.1 + 0.3 * rng.uniform();
    }

    const int row = cls / 3, col = cls % 3, group = cls % 3;
    const int y0 = row * side / 3, y1 = (row + 1) * side / 3;
    const int x0 = col * side / 3, x1 = (col + 1) * side / 3;
    bool marked = false;
    for (int f = 0; f < n; ++f) {
        if (f % 2 != cls % 2) continue;
        marked = true;
        for (int ch = 3 * group; ch < 3 * group + 3; ++ch) {
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    double& v = frames[static_cast<size_t>(f)]
                                      [(static_cast<size_t>(ch) * side + y) * side + x];
                    v = std::min(1.0, v + spec.signal);
                }
            }
        }
    }
    if (!marked) { // single odd-parity-free frame: fall back to frame 0
        for (int ch = 3 * group; ch < 3 * group + 3; ++ch) {
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    double& v = frames[0][(static_cast<size_t>(ch) * side + y) * side + x];
                    v = std::min(1.0, v + spec.signal);
                }
            }
        }
    }
    if (spec.lighting > 0.0) {
        const double shift = spec.lighting * (2.0 * rng.uniform() - 1.0);
        for (auto& frame : frames)
            for (double& v : frame)
                v = std::clamp(v + shift, 0.0, 1.0);
    }
    return frames;
}

std::string padded(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

} // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
    check_synthetic_spec(spec);
    SyntheticData out;
    out.train.dataset_id = "synthetic-train";
    out.val.dataset_id = "synthetic-val";
    out.unlabelled.dataset_id = "synthetic-unlabelled";
    out.train.classes = out.val.classes = out.unlabelled.classes = class_names();

    for (int c = 0; c < kNumClasses; ++c) {
        for (int i = 0; i < spec.per_class; ++i) {
            ManifestEntry e;
            e.id = "train_c" + std::to_string(c) + "_" + padded(i, 3);
            e.side = spec.side;
            e.frames = synthetic_video(spec, c, rng);
            e.label = c;
            if (spec.label_noise > 0.0 && rng.uniform() < spec.label_noise) {
                e.label = (c + 1 + rng.uniform_int(0, kNumClasses - 2)) % kNumClasses;
            }
            out.train.entries.push_back(std::move(e));
        }
    }
    for (int c = 0; c < kNumClasses; ++c) {
        for (int i = 0; i < spec.val_per_class; ++i) {
            ManifestEntry e;
            e.id = "val_c" + std::to_string(c) + "_" + padded(i, 3);
            e.side = spec.side;
            e.frames = synthetic_video(spec, c, rng);
            e.label = c;
            out.val.entries.push_back(std::move(e));
        }
    }
    for (int i = 0; i < spec.unlabelled; ++i) {
        const int c = rng.uniform_int(0, kNumClasses - 1);
        ManifestEntry e;
        e.id = "unlab_" + padded(i, 4);
        e.side = spec.side;
        e.frames = synthetic_video(spec, c, rng);
        e.label = kUnlabelled;
        out.unlabelled.entries.push_back(std::move(e));
    }
    return out;
}

// ---- configuration ---------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

long parse_int(const std::string& name, const std::string& value) {
    size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(value, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: invalid integer for '" + name + "': '" + value + "'");
    }
    if (pos != value.size()) {
        throw ConfigError("config: invalid integer for '" + name + "': '" + value + "'");
    }
    return v;
}

double parse_double(const std::string& name, const std::string& value) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: invalid number for '" + name + "': '" + value + "'");
    }
    if (pos != value.size()) {
        throw ConfigError("config: invalid number for '" + name + "': '" + value + "'");
    }
    return v;
}

bool parse_bool(const std::string& name, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config: invalid bool for '" + name + "': '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& name, const std::string& value) {
    std::vector<int> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) {
        out.push_back(static_cast<int>(parse_int(name, trim(part))));
    }
    return out;
}

} // namespace

Config Config::defaults() {
    Config c;
    auto add = [&](const char* n, Type t, const char* v, const char* h) {
        c.keys_.push_back(Key{n, t, v, h});
    };
    add("model.blocks", Type::Int, "4", "residual blocks in the backbone");
    add("model.channels", Type::IntList, "24,48,96,192", "channels per block");
    add("model.input_side", Type::Int, "32", "side of each square region image");
    add("model.hops", Type::Int, "2", "spatial attention hops (rows of M)");
    add("model.att_hidden", Type::Int, "32", "hidden units of the spatial attention MLP");
    add("model.channel_r", Type::Int, "64", "reduction width of the channel gate");
    add("model.frame_r", Type::Int, "64", "reduction width of the frame gate");
    add("model.concat_hops", Type::Bool, "false", "concatenate hops instead of averaging");
    add("model.use_spatial", Type::Bool, "true", "spatial attention (off: mean over positions)");
    add("model.use_channel", Type::Bool, "true", "channel attention (off: mean over regions)");
    add("model.use_frame", Type::Bool, "true", "frame attention (off: mean over frames)");
    add("model.classes", Type::Int, "7", "number of output classes");
    add("model.lambda_f", Type::Double, "1", "weight of the attention orthogonality penalty");
    add("student.blocks", Type::Int, "0", "student backbone blocks; 0 copies model.blocks");
    add("student.channels", Type::IntList, "", "student channels; empty copies model.channels");
    add("train.epochs", Type::Int, "100", "training epochs");
    add("train.batch", Type::Int, "16", "labelled videos per batch");
    add("train.lr", Type::Double, "1e-5", "base learning rate");
    add("train.lr_decay", Type::Double, "0.6", "learning-rate decay factor");
    add("train.lr_every", Type::Int, "30", "epochs between learning-rate decays");
    add("train.seed", Type::Int, "0", "seed for init, shuffling and noise");
    add("noise.enabled", Type::Bool, "false", "augmentation + dropout during plain training");
    add("noise.ops_min", Type::Int, "2", "minimum augmentation ops per video");
    add("noise.ops_max", Type::Int, "4", "maximum augmentation ops per video");
    add("noise.mag_min", Type::Int, "0", "minimum augmentation magnitude");
    add("noise.mag_max", Type::Int, "9", "maximum augmentation magnitude");
    add("noise.dropout", Type::Double, "0.5", "dropout before the head while noised");
    add("selftrain.ratio", Type::Int, "3", "pseudo:labelled sample ratio per step");
    add("selftrain.threshold", Type::Double, "0.5",
        "confidence floor for over-represented pseudo classes");
    add("selftrain.generations", Type::Int, "4", "maximum student generations");
    add("selftrain.epsilon_sat", Type::Double, "0.001",
        "stop when the accuracy gain falls below this");
    add("selftrain.student_noise", Type::Bool, "true", "noise the student phase");
    add("data.per_class", Type::Int, "30", "synthetic training videos per class");
    add("data.val_per_class", Type::Int, "10", "synthetic validation videos per class");
    add("data.unlabelled", Type::Int, "120", "synthetic unlabelled videos");
    add("data.frames_min", Type::Int, "2", "minimum frames per synthetic video");
    add("data.frames_max", Type::Int, "4", "maximum frames per synthetic video");
    add("data.side", Type::Int, "32", "synthetic region image side");
    add("data.signal", Type::Double, "0.6", "synthetic class-signal brightness");
    add("data.label_noise", Type::Double, "0", "fraction of wrong synthetic training labels");
    add("data.lighting", Type::Double, "0", "per-video brightness shift range, 0..0.5");
    add("clip.min_frames", Type::Int, "30", "minimum consecutive valid frames per clip");
    add("clip.area_fraction", Type::Double, "0.2",
        "face box area floor, as a fraction of the frame");
    add("crop.side", Type::Int, "224", "rendered region image side");
    return c;
}

const Config::Key& Config::find(const std::string& name) const {
    for (const Key& k : keys_) {
        if (k.name == name) return k;
    }
    throw ConfigError("config: unknown key '" + name + "'");
}

Config::Key& Config::find(const std::string& name) {
    return const_cast<Key&>(static_cast<const Config*>(this)->find(name));
}

void Config::set(const std::string& name, const std::string& value) {
    Key& k = find(name);
    const std::string v = trim(value);
    switch (k.type) { // parse to validate; keep the textual form
    case Type::Int: parse_int(name, v); break;
    case Type::Double: parse_double(name, v); break;
    case Type::Bool: parse_bool(name, v); break;
    case Type::IntList: parse_int_list(name, v); break;
    case Type::String: break;
    }
    k.value = v;
}

bool Config::has(const std::string& name) const {
    for (const Key& k : keys_) {
        if (k.name == name) return true;
    }
    return false;
}

const std::string& Config::get(const std::string& name) const { return find(name).value; }

long Config::get_int(const std::string& name) const { return parse_int(name, find(name).value); }

double Config::get_double(const std::string& name) const {
    return parse_double(name, find(name).value);
}

bool Config::get_bool(const std::string& name) const { return parse_bool(name, find(name).value); }

std::vector<int> Config::get_int_list(const std::string& name) const {
    return parse_int_list(name, find(name).value);
}

Config Config::from_text(const std::string& text) {
    Config c = defaults();
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(lineno) + ": expected key=value");
        }
        c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return c;
}

Config Config::load(const std::string& path) { return from_text(read_text_file(path)); }

std::string Config::to_text() const {
    std::string out;
    for (const Key& k : keys_) {
        out += "# " + k.help + "\n";
        out += k.name + "=" + k.value + "\n";
    }
    return out;
}

void Config::save(const std::string& path) const { write_text_file(path, to_text()); }

ModelConfig Config::model_config() const {
    ModelConfig mc;
    mc.backbone.num_blocks = static_cast<int>(get_int("model.blocks"));
    mc.backbone.channels_per_block = get_int_list("model.channels");
    mc.backbone.input_side = static_cast<int>(get_int("model.input_side"));
    mc.attention.hops = static_cast<int>(get_int("model.hops"));
    mc.attention.hidden = static_cast<int>(get_int("model.att_hidden"));
    mc.attention.channel_r = static_cast<int>(get_int("model.channel_r"));
    mc.attention.frame_r = static_cast<int>(get_int("model.frame_r"));
    mc.attention.concat_hops = get_bool("model.concat_hops");
    mc.attention.use_spatial = get_bool("model.use_spatial");
    mc.attention.use_channel = get_bool("model.use_channel");
    mc.attention.use_frame = get_bool("model.use_frame");
    mc.num_classes = static_cast<int>(get_int("model.classes"));
    mc.lambda_f = get_double("model.lambda_f");
    return mc;
}

ModelConfig Config::student_model_config() const {
    ModelConfig mc = model_config();
    const long blocks = get_int("student.blocks");
    const std::vector<int> channels = get_int_list("student.channels");
    if (blocks > 0) mc.backbone.num_blocks = static_cast<int>(blocks);
    if (!channels.empty()) mc.backbone.channels_per_block = channels;
    return mc;
}

NoiseSpec Config::noise_spec() const {
    NoiseSpec n;
    n.enabled = get_bool("noise.enabled");
    n.op_count_min = static_cast<int>(get_int("noise.ops_min"));
    n.op_count_max = static_cast<int>(get_int("noise.ops_max"));
    n.magnitude_min = static_cast<int>(get_int("noise.mag_min"));
    n.magnitude_max = static_cast<int>(get_int("noise.mag_max"));
    n.dropout_p = get_double("noise.dropout");
    return n;
}

TrainConfig Config::train_config() const {
    TrainConfig tc;
    tc.epochs = static_cast<int>(get_int("train.epochs"));
    tc.batch_size = static_cast<int>(get_int("train.batch"));
    tc.base_lr = get_double("train.lr");
    tc.lr_decay = get_double("train.lr_decay");
    tc.lr_every = static_cast<int>(get_int("train.lr_every"));
    tc.seed = static_cast<std::uint64_t>(get_int("train.seed"));
    tc.noise = noise_spec();
    return tc;
}

SelfTrainConfig Config::selftrain_config() const {
    SelfTrainConfig sc;
    sc.teacher_model = model_config();
    sc.student_model = student_model_config();
    sc.teacher_train = train_config();
    sc.teacher_train.noise.enabled = false;
    sc.student_train = train_config();
    sc.student_train.noise.enabled = get_bool("selftrain.student_noise");
    sc.ratio = static_cast<int>(get_int("selftrain.ratio"));
    sc.confidence_threshold = get_double("selftrain.threshold");
    sc.max_generations = static_cast<int>(get_int("selftrain.generations"));
    sc.epsilon_sat = get_double("selftrain.epsilon_sat");
    sc.seed = static_cast<std::uint64_t>(get_int("train.seed"));
    return sc;
}

SyntheticSpec Config::synthetic_spec() const {
    SyntheticSpec s;
    s.per_class = static_cast<int>(get_int("data.per_class"));
    s.val_per_class = static_cast<int>(get_int("data.val_per_class"));
    s.unlabelled = static_cast<int>(get_int("data.unlabelled"));
    s.frames_min = static_cast<int>(get_int("data.frames_min"));
    s.frames_max = static_cast<int>(get_int("data.frames_max"));
    s.side = static_cast<int>(get_int("data.side"));
    s.signal = get_double("data.signal");
    s.label_noise = get_double("data.label_noise");
    s.lighting = get_double("data.lighting");
    return s;
}

ClipRule Config::clip_rule() const {
    ClipRule r;
    r.min_frames = static_cast<int>(get_int("clip.min_frames"));
    r.area_fraction = get_double("clip.area_fraction");
    return r;
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'E', 'M', 'O', 'V', 'I', 'D', '0', '1'};

template <typename T> void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T> T take(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw InputError("checkpoint: truncated file");
    return v;
}

} // namespace

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("checkpoint: cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof kMagic);
    const ModelConfig& c = model.config();
    put<std::int32_t>(out, c.backbone.num_blocks);
    put<std::int32_t>(out, static_cast<std::int32_t>(c.backbone.channels_per_block.size()));
    for (int ch : c.backbone.channels_per_block) put<std::int32_t>(out, ch);
    put<std::int32_t>(out, c.backbone.input_side);
    put<std::int32_t>(out, c.backbone.groups);
    put<std::int32_t>(out, c.attention.hops);
    put<std::int32_t>(out, c.attention.hidden);
    put<std::int32_t>(out, c.attention.channel_r);
    put<std::int32_t>(out, c.attention.frame_r);
    put<std::uint8_t>(out, c.attention.concat_hops ? 1 : 0);
    put<std::uint8_t>(out, c.attention.use_spatial ? 1 : 0);
    put<std::uint8_t>(out, c.attention.use_channel ? 1 : 0);
    put<std::uint8_t>(out, c.attention.use_frame ? 1 : 0);
    put<std::int32_t>(out, c.num_classes);
    put<double>(out, c.lambda_f);

    const auto& items = model.params().items();
    put<std::uint64_t>(out, items.size());
    for (const auto& [name, tensor] : items) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.shape().size()));
        for (int d : tensor.shape()) put<std::int32_t>(out, d);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(tensor.numel()));
        out.write(reinterpret_cast<const char*>(tensor.value().data()),
                  static_cast<std::streamsize>(tensor.value().size() * sizeof(double)));
    }
    if (!out) throw InputError("checkpoint: write to '" + path + "' failed");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw InputError("checkpoint: '" + path + "' is not a model checkpoint");
    }
    ModelConfig c;
    c.backbone.num_blocks = take<std::int32_t>(in);
    const std::int32_t n_channels = take<std::int32_t>(in);
    if (n_channels < 0 || n_channels > 1 << 16) throw InputError("checkpoint: corrupt header");
    c.backbone.channels_per_block.clear();
    for (std::int32_t i = 0; i < n_channels; ++i) {
        c.backbone.channels_per_block.push_back(take<std::int32_t>(in));
    }
    c.backbone.input_side = take<std::int32_t>(in);
    c.backbone.groups = take<std::int32_t>(in);
    c.attention.hops = take<std::int32_t>(in);
    c.attention.hidden = take<std::int32_t>(in);
    c.attention.channel_r = take<std::int32_t>(in);
    c.attention.frame_r = take<std::int32_t>(in);
    c.attention.concat_hops = take<std::uint8_t>(in) != 0;
    c.attention.use_spatial = take<std::uint8_t>(in) != 0;
    c.attention.use_channel = take<std::uint8_t>(in) != 0;
    c.attention.use_frame = take<std::uint8_t>(in) != 0;
    c.num_classes = take<std::int32_t>(in);
    c.lambda_f = take<double>(in);

    Model model(c, 0);
    auto& items = model.params().items();
    const std::uint64_t n_tensors = take<std::uint64_t>(in);
    if (n_tensors != items.size()) {
        throw InputError("checkpoint: expected " + std::to_string(items.size()) +
                         " tensors, file has " + std::to_string(n_tensors));
    }
    for (auto& [name, tensor] : items) {
        const std::uint32_t name_len = take<std::uint32_t>(in);
        std::string file_name(name_len, '\0');
        in.read(file_name.data(), name_len);
        if (!in || file_name != name) {
            throw InputError("checkpoint: tensor order mismatch, expected '" + name + "'");
        }
        const std::uint32_t ndim = take<std::uint32_t>(in);
        std::vector<int> dims;
        for (std::uint32_t i = 0; i < ndim; ++i) dims.push_back(take<std::int32_t>(in));
        const std::uint64_t count = take<std::uint64_t>(in);
        if (dims != tensor.shape() || count != static_cast<std::uint64_t>(tensor.numel())) {
            throw InputError("checkpoint: shape mismatch for '" + name + "'");
        }
        in.read(reinterpret_cast<char*>(tensor.value_mut().data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw InputError("checkpoint: truncated file");
    }
    char extra = 0;
    if (in.read(&extra, 1)) throw InputError("checkpoint: trailing bytes in '" + path + "'");
    return model;
}

// ---- run directories and small file helpers --------------------------------

std::string prepare_run_dir(const std::string& path, bool force) {
    namespace fs = std::filesystem;
    const fs::path p(path);
    if (fs::exists(p)) {
        if (!fs::is_directory(p)) {
            throw UsageError("run dir: '" + path + "' exists and is not a directory");
        }
        const bool empty = fs::directory_iterator(p) == fs::directory_iterator();
        if (!empty && !force) {
            throw UsageError("run dir: '" + path + "' is not empty (pass --force to reuse)");
        }
    } else {
        std::error_code ec;
        fs::create_directories(p, ec);
        if (ec) throw InputError("run dir: cannot create '" + path + "': " + ec.message());
    }
    return p.string();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InputError("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

// ---- reports ---------------------------------------------------------------

std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
    std::string out;
    for (const EpochRecord& r : history) {
        json j;
        j["epoch"] = r.epoch;
        j["lr"] = r.lr;
        j["train_loss"] = r.train_loss;
        j["val_accuracy"] = r.val_accuracy;
        j["val_macro_f1"] = r.val_macro_f1;
        out += j.dump();
        out += "\n";
    }
    return out;
}

std::string metrics_to_json(const MetricsReport& report, const std::vector<std::string>& classes) {
    json j;
    j["accuracy"] = report.accuracy;
    j["macro_f1"] = report.macro_f1;
    j["total"] = report.total;
    j["classes"] = classes;
    j["confusion"] = report.confusion;
    return j.dump(2) + "\n";
}

std::string generation_report_json(const GenerationRecord& rec, const std::string& config_hash) {
    json j;
    j["generation"] = rec.generation;
    j["val_accuracy"] = rec.val_accuracy;
    j["val_macro_f1"] = rec.val_macro_f1;
    j["best_epoch"] = rec.best_epoch;
    j["pseudo_total"] = rec.pseudo_total;
    j["balance"]["before"] = rec.balance.before;
    j["balance"]["target"] = rec.balance.target;
    j["balance"]["after"] = rec.balance.after;
    j["balance"]["warnings"] = rec.balance.warnings;
    j["config_hash"] = config_hash;
    return j.dump() + "\n";
}

std::vector<FrameImage> load_frame_images(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw InputError(std::string("frames: invalid JSON: ") + e.what());
    }
    if (!j.is_array()) throw InputError("frames: top level must be an array");
    std::vector<FrameImage> out;
    try {
        for (size_t i = 0; i < j.size(); ++i) {
            FrameImage img;
            img.width = j[i].at("width").get<int>();
            img.height = j[i].at("height").get<int>();
            img.rgb = j[i].at("rgb").get<std::vector<double>>();
            if (img.width < 1 || img.height < 1 ||
                img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3) {
                throw InputError("frames: image " + std::to_string(i) + " has " +
                                 std::to_string(img.rgb.size()) + " values, expected " +
                                 std::to_string(3L * img.width * img.height));
            }
            out.push_back(std::move(img));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("frames: ") + e.what());
    }
    return out;
}

std::string clip_spans_to_json(const std::vector<ClipSpan>& spans) {
    json j;
    j["count"] = spans.size();
    json arr = json::array();
    for (const ClipSpan& s : spans) {
        arr.push_back(json{{"start", s.start}, {"length", s.length}});
    }
    j["spans"] = std::move(arr);
    return j.dump(2) + "\n";
}

} // namespace emovid
