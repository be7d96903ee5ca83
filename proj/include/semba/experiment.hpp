#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "semba/metrics.hpp"
#include "semba/search.hpp"
#include "semba/simulator.hpp"

namespace semba {

enum class AdapterKind {
    Simulator,     // analytic noise injection on synthetic scenes
    Pixel,         // render + foveate + colour classifier on synthetic scenes
    DetectionLog,  // replay of a JSON-lines detection log
    Subprocess     // external detector process
};

std::string to_string(AdapterKind k);
AdapterKind parse_adapter_kind(const std::string& name);

struct SimulatorSettings {
    double peak = 40.0;
    double off = 0.5;
    double flat = 1.2;
    double far_detect_prob = 0.5;
    double jitter = 0.04;
    ColorClassifierConfig classifier;
};

struct ExperimentConfig {
    Variant variant = Variant::Pred;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> class_names;
    FoveaConfig fovea;
    SearchConfig search;  // grid, IOR, truncation and Oracle; its fovea mirrors `fovea`
    AdapterKind adapter = AdapterKind::Simulator;
    std::filesystem::path detection_log;
    std::string command;
    int timeout_ms = 30000;
    bool prefoveate = false;
    SimulatorSettings simulator;
    std::filesystem::path sensor_model;  // empty: ground truth (simulator) or centred classifier (pixel)
    std::filesystem::path manifest;
    std::filesystem::path output_dir = "out";
    int jobs = 0;  // 0 = hardware concurrency

    int class_count() const { return static_cast<int>(class_names.size()); }
    ClassCatalog catalog() const { return ClassCatalog(class_names); }
    bool is_synthetic() const { return adapter == AdapterKind::Simulator || adapter == AdapterKind::Pixel; }

    /// Value checks (eta, D, grid, ...) always; path existence and seed presence when
    /// `check_paths` is set. Throws std::invalid_argument naming the key.
    void validate(bool check_paths = true) const;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Applies "dotted.key=value" to a JSON document. The value is parsed as JSON when possible and
/// taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a config file (or starts from defaults when `path` is empty) and applies overrides.
ExperimentConfig load_experiment_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

/// One search trial. Synthetic manifests carry the scene; image manifests only the task.
struct Trial {
    SearchTask task;
    std::optional<SyntheticScene> scene;
    std::vector<SemanticLabeling::Region> regions;
};

/// Scene sets ({scenes:[...]}) or image manifests ({images:[{image_id, image_path, dims?,
/// target, target_boxes, objects?}]}).
std::vector<Trial> load_manifest(const std::filesystem::path& path, const ClassCatalog& catalog);
std::vector<Trial> trials_from_scenes(std::span<const SyntheticScene> scenes, const ClassCatalog& catalog);

GroundTruthSensor make_ground_truth_sensor(const ExperimentConfig& config);

/// Sensor model used by Calib / Pred under this config; nullopt when the variant needs none.
std::optional<SensorModel> resolve_sensor_model(const ExperimentConfig& config);

/// Builds the detector for trial `index`. Synthetic adapters need the trial's scene.
std::unique_ptr<DetectorAdapter> make_adapter(const ExperimentConfig& config, const Trial& trial, std::size_t index,
                                              const GroundTruthSensor* ground_truth);

struct BatchResult {
    std::vector<Scanpath> paths;  // manifest order
    double success_rate = 0.0;
    double mean_length = 0.0;
};

/// Runs every trial through run_search on a pool of `jobs` workers. Per-trial seeds derive from
/// (config.seed, trial index), so results do not depend on the worker count.
BatchResult run_batch(const ExperimentConfig& config, std::span<const Trial> trials);

/// Fraction of trials with the target found within n fixations, n = 1..max_n.
std::vector<double> cumulative_curve(std::span<const Scanpath> paths, int max_n = 7);

std::vector<Scanpath> read_scanpaths(const std::filesystem::path& path);
nlohmann::json scanpaths_to_json(std::span<const Scanpath> paths);

/// Synthetic observers for a scene: start at the centre, glance at 0-2 distractors, end on the
/// target; every landing is jittered by `jitter_px`.
std::vector<HumanScanpath> synthetic_observers(const SyntheticScene& scene, int subjects, std::uint64_t seed,
                                               double jitter_px = 20.0);

/// Calibration log generator. Bins (class k, level d) are visited round-robin; for each one a
/// random object of class k is moved to a random position (size kept), a random fixation placing
/// it at level d is drawn, and the object is sensed until detected. Every bin thus receives exactly `samples_per_bin`
/// single-detection records carrying the true class. Box jitter is off unless `keep_jitter`
/// (jitter moves box centres across levels and mixes neighbouring bins).
void simulate_calibration_log(std::span<const SyntheticScene> scenes, const GroundTruthSensor& sensor,
                              const FoveaConfig& fovea, GridDims grid, std::size_t samples_per_bin,
                              std::uint64_t seed, bool keep_jitter,
                              const std::function<void(const DetectionRecord&)>& sink);

/// Groups logged scores by (true class, level of the box centre) and fits every bin.
SensorModel calibrate_from_log(const std::filesystem::path& log, const ExperimentConfig& config,
                               const FitConfig& fit = {});

/// temp file + rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };
/// From SEMBA_LOG (quiet | info | debug); default info.
LogLevel log_level();
void log_message(LogLevel level, const std::string& message);

// Subcommands. Each returns a process exit code; diagnostics go to stderr.

struct CalibrateOptions {
    std::filesystem::path config;
    std::vector<std::string> overrides;
    std::filesystem::path log;
    std::filesystem::path out;
    int min_samples = 25;
};
int cmd_calibrate(const CalibrateOptions& options);

struct SearchOptions {
    std::filesystem::path config;
    std::vector<std::string> overrides;
    std::optional<std::filesystem::path> out;  // overrides output_dir
    bool dump_maps = false;
    int map_scale = 16;  // heatmap pixels per cell
    std::optional<int> jobs;
};
int cmd_search(const SearchOptions& options);

struct EvaluateOptions {
    std::filesystem::path config;
    std::vector<std::string> overrides;
    std::vector<std::string> predicted;  // [NAME=]path, path = scanpaths.json or a search output dir
    std::filesystem::path humans;
    std::optional<std::filesystem::path> baseline;
    bool skip_cig = false;
    bool conditional = true;
    bool human_consistency = false;
    bool mean_shift = false;
    std::optional<std::filesystem::path> reference;
    std::filesystem::path out;  // report prefix: <out>.json and <out>.txt
};
int cmd_evaluate(const EvaluateOptions& options);

struct CumulativeOptions {
    std::vector<std::string> inputs;  // [NAME=]path
    int max_n = 7;
    std::filesystem::path out;  // prefix: <out>.csv and <out>.json
};
int cmd_cumulative(const CumulativeOptions& options);

struct FoveateOptions {
    std::filesystem::path input;
    std::filesystem::path output;
    std::optional<Point2> focal;  // default: image centre
    FoveaConfig fovea;
};
int cmd_foveate(const FoveateOptions& options);

struct SimulateOptions {
    std::filesystem::path config;
    std::vector<std::string> overrides;
    int scenes = 100;
    SceneSpec spec;
    std::filesystem::path out;  // scene set
    std::optional<std::filesystem::path> calibration_log;
    std::size_t samples_per_bin = 1000;
    bool calibration_jitter = false;
    std::optional<std::filesystem::path> humans;
    int subjects = 10;
};
int cmd_simulate(const SimulateOptions& options);

struct BaselineOptions {
    std::filesystem::path humans;
    std::optional<double> px_per_degree;  // required
    ImageDims dims{1680, 1050};
    GridDims grid{20, 32};
    std::filesystem::path out;
};
int cmd_baseline(const BaselineOptions& options);

}  // namespace semba
