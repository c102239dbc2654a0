#pragma once

#include "emovid/geometry.hpp"
#include "emovid/model.hpp"
#include "emovid/rng.hpp"
#include "emovid/sample.hpp"
#include "emovid/selftrain.hpp"
#include "emovid/training.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace emovid {

// ---- manifests -------------------------------------------------------------

// One video: either inline frame tensors (9*side*side doubles each) or
// relative paths to raw little-endian double files of the same length.
struct ManifestEntry {
    std::string id;
    int label = kUnlabelled;
    double confidence = 1.0; // pseudo-label strength; 1.0 for hand labels
    int side = 0;
    std::vector<std::vector<double>> frames;
    std::vector<std::string> frame_paths;

    bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
    std::string dataset_id;
    std::vector<std::string> classes;
    std::vector<ManifestEntry> entries;

    bool operator==(const Manifest&) const = default;
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);
void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

Manifest manifest_from_samples(const std::string& dataset_id,
                               const std::vector<VideoSample>& samples);
// base_dir resolves relative frame paths for file-backed entries.
std::vector<VideoSample> samples_from_manifest(const Manifest& m,
                                               const std::string& base_dir = "");

// ---- synthetic data --------------------------------------------------------

// Recoverable-by-construction video task: each class adds a class-specific
// spatial cell of brightness `signal` to one region's channels on a
// class-dependent subset of frames.
struct SyntheticSpec {
    int per_class = 30;     // training videos per class
    int val_per_class = 10; // validation videos per class (clean labels)
    int unlabelled = 120;
    int frames_min = 2;
    int frames_max = 4;
    int side = 8;
    double signal = 0.6;      // added brightness, clamped into [0,1]
    double label_noise = 0.0; // chance a training label is resampled wrongly
    // Per-video brightness shift drawn uniformly from [-lighting, lighting],
    // a nuisance factor brightness/contrast augmentation can cancel.
    double lighting = 0.0;
};

struct SyntheticData {
    Manifest train;
    Manifest val;
    Manifest unlabelled;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng);

// ---- configuration ---------------------------------------------------------

// Flat typed key=value store holding every documented default. Unknown keys
// and malformed values fail loudly; serialization is stable and re-parseable.
class Config {
public:
    enum class Type { Int, Double, Bool, String, IntList };

    struct Key {
        std::string name;
        Type type;
        std::string value;
        std::string help;
    };

    static Config defaults();
    static Config from_text(const std::string& text);
    static Config load(const std::string& path);

    void set(const std::string& name, const std::string& value);
    bool has(const std::string& name) const;
    const std::string& get(const std::string& name) const;
    long get_int(const std::string& name) const;
    double get_double(const std::string& name) const;
    bool get_bool(const std::string& name) const;
    std::vector<int> get_int_list(const std::string& name) const;

    std::string to_text() const;
    void save(const std::string& path) const;
    const std::vector<Key>& keys() const { return keys_; }

    ModelConfig model_config() const;
    ModelConfig student_model_config() const; // student.* overrides, else model.*
    NoiseSpec noise_spec() const;
    TrainConfig train_config() const;
    SelfTrainConfig selftrain_config() const;
    SyntheticSpec synthetic_spec() const;
    ClipRule clip_rule() const;

private:
    const Key& find(const std::string& name) const;
    Key& find(const std::string& name);

    std::vector<Key> keys_;
};

// ---- checkpoints -----------------------------------------------------------

// Binary snapshot: magic, the architecture fields, then every parameter
// tensor (name, dims, raw doubles) in registry order. Round trips bit-exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

// ---- run directories and small file helpers --------------------------------

// Creates the directory (with parents). An existing non-empty directory is
// refused unless force is set.
std::string prepare_run_dir(const std::string& path, bool force);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

std::uint64_t fnv1a64(const std::string& text);
std::string hash_hex(std::uint64_t h);

// ---- reports ---------------------------------------------------------------

std::string history_to_jsonl(const std::vector<EpochRecord>& history);
std::string metrics_to_json(const MetricsReport& report, const std::vector<std::string>& classes);
std::string generation_report_json(const GenerationRecord& rec, const std::string& config_hash);

// JSON array of {"width", "height", "rgb"} objects.
std::vector<FrameImage> load_frame_images(const std::string& path);
std::string clip_spans_to_json(const std::vector<ClipSpan>& spans);

} // namespace emovid
