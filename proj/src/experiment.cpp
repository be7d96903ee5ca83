#include "semba/experiment.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "semba/subprocess_detector.hpp"

namespace semba {

std::string to_string(AdapterKind k) {
    switch (k) {
        case AdapterKind::Simulator: return "simulator";
        case AdapterKind::Pixel: return "pixel";
        case AdapterKind::DetectionLog: return "detection_log";
        case AdapterKind::Subprocess: return "subprocess";
    }
    return "?";
}

AdapterKind parse_adapter_kind(const std::string& name) {
    if (name == "simulator") return AdapterKind::Simulator;
    if (name == "pixel") return AdapterKind::Pixel;
    if (name == "detection_log") return AdapterKind::DetectionLog;
    if (name == "subprocess") return AdapterKind::Subprocess;
    throw std::invalid_argument("adapter.kind: unknown adapter '" + name +
                                "' (expected simulator, pixel, detection_log or subprocess)");
}

namespace {

std::string oracle_rule_name(OracleRule r) { return r == OracleRule::PixelInBox ? "pixel_in_box" : "cell_intersects"; }

OracleRule parse_oracle_rule(const std::string& s) {
    if (s == "pixel_in_box") return OracleRule::PixelInBox;
    if (s == "cell_intersects") return OracleRule::CellIntersects;
    throw std::invalid_argument("search.oracle_rule: expected pixel_in_box or cell_intersects, got '" + s + "'");
}

std::vector<std::string> numbered_names(int k) {
    std::vector<std::string> names;
    for (int i = 0; i < k; ++i) names.push_back(std::to_string(i));
    return names;
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key) || j[key].is_null()) return;
    try {
        out = j[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(where + key + ": wrong type");
    }
}

}  // namespace

void ExperimentConfig::validate(bool check_paths) const {
    if (!(fovea.eta > 0.0)) throw std::invalid_argument("fovea.eta must be > 0");
    if (fovea.distortion_levels < 1) throw std::invalid_argument("fovea.distortion_levels must be >= 1");
    if (fovea.levels < 2) throw std::invalid_argument("fovea.levels must be >= 2");
    if (!(fovea.sigma_base > 0.0)) throw std::invalid_argument("fovea.sigma_base must be > 0");
    if (search.grid.rows < 1 || search.grid.cols < 1) throw std::invalid_argument("grid.rows and grid.cols must be >= 1");
    if (search.max_fixations < 1) throw std::invalid_argument("search.max_fixations must be >= 1");
    if (search.ior_radius < 0) throw std::invalid_argument("search.ior_radius must be >= 0");
    if (class_names.size() < 2) throw std::invalid_argument("classes: at least two classes are required");
    if (jobs < 0) throw std::invalid_argument("jobs must be >= 0");
    if (timeout_ms < 1) throw std::invalid_argument("adapter.timeout_ms must be >= 1");
    if (simulator.far_detect_prob < 0.0 || simulator.far_detect_prob > 1.0) {
        throw std::invalid_argument("simulator.far_detect_prob must lie in [0,1]");
    }
    if (!check_paths) return;
    if (is_synthetic() && !seed) throw std::invalid_argument("seed: required for simulator runs");
    if (!manifest.empty() && !std::filesystem::exists(manifest)) {
        throw std::invalid_argument("manifest: file not found: " + manifest.string());
    }
    if (!sensor_model.empty() && !std::filesystem::exists(sensor_model)) {
        throw std::invalid_argument("sensor_model: file not found: " + sensor_model.string());
    }
    if (adapter == AdapterKind::DetectionLog) {
        if (detection_log.empty()) throw std::invalid_argument("adapter.log: required for the detection_log adapter");
        if (!std::filesystem::exists(detection_log)) {
            throw std::invalid_argument("adapter.log: file not found: " + detection_log.string());
        }
    }
    if (adapter == AdapterKind::Subprocess && command.empty()) {
        throw std::invalid_argument("adapter.command: required for the subprocess adapter");
    }
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["variant"] = semba::to_string(variant);
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    j["class_names"] = class_names;
    j["fovea"] = {{"eta", fovea.eta},
                  {"levels", fovea.levels},
                  {"distortion_levels", fovea.distortion_levels},
                  {"sigma_base", fovea.sigma_base}};
    j["grid"] = {{"rows", search.grid.rows}, {"cols", search.grid.cols}};
    j["search"] = {{"max_fixations", search.max_fixations},
                   {"ior_radius", search.ior_radius},
                   {"oracle", search.oracle},
                   {"oracle_rule", oracle_rule_name(search.oracle_rule)},
                   {"initial_fixation", search.initial_fixation
                                            ? nlohmann::json{search.initial_fixation->x, search.initial_fixation->y}
                                            : nlohmann::json(nullptr)}};
    j["adapter"] = {{"kind", semba::to_string(adapter)},
                    {"log", detection_log.string()},
                    {"command", command},
                    {"timeout_ms", timeout_ms},
                    {"prefoveate", prefoveate}};
    j["simulator"] = {{"peak", simulator.peak},
                      {"off", simulator.off},
                      {"flat", simulator.flat},
                      {"far_detect_prob", simulator.far_detect_prob},
                      {"jitter", simulator.jitter},
                      {"temperature_fraction", simulator.classifier.temperature_fraction},
                      {"visibility_threshold", simulator.classifier.visibility_threshold}};
    j["sensor_model"] = sensor_model.string();
    j["manifest"] = manifest.string();
    j["output_dir"] = output_dir.string();
    j["jobs"] = jobs;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    ExperimentConfig c;
    std::string variant = "Pred";
    read_opt(j, "variant", variant, "");
    c.variant = parse_variant(variant);
    if (j.contains("seed") && !j["seed"].is_null()) {
        if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0) {
            throw std::invalid_argument("seed: expected a non-negative integer");
        }
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("class_names") && !j["class_names"].is_null() && !j["class_names"].empty()) {
        read_opt(j, "class_names", c.class_names, "");
    } else {
        int k = 5;
        read_opt(j, "classes", k, "");
        c.class_names = numbered_names(k);
    }
    if (j.contains("fovea")) {
        const auto& f = j["fovea"];
        read_opt(f, "eta", c.fovea.eta, "fovea.");
        read_opt(f, "levels", c.fovea.levels, "fovea.");
        read_opt(f, "distortion_levels", c.fovea.distortion_levels, "fovea.");
        read_opt(f, "sigma_base", c.fovea.sigma_base, "fovea.");
    }
    if (j.contains("grid")) {
        read_opt(j["grid"], "rows", c.search.grid.rows, "grid.");
        read_opt(j["grid"], "cols", c.search.grid.cols, "grid.");
    }
    if (j.contains("search")) {
        const auto& s = j["search"];
        read_opt(s, "max_fixations", c.search.max_fixations, "search.");
        read_opt(s, "ior_radius", c.search.ior_radius, "search.");
        read_opt(s, "oracle", c.search.oracle, "search.");
        std::string rule = oracle_rule_name(c.search.oracle_rule);
        read_opt(s, "oracle_rule", rule, "search.");
        c.search.oracle_rule = parse_oracle_rule(rule);
        if (s.contains("initial_fixation") && !s["initial_fixation"].is_null()) {
            const auto& p = s["initial_fixation"];
            if (!p.is_array() || p.size() != 2) throw std::invalid_argument("search.initial_fixation: expected [x, y]");
            c.search.initial_fixation = Point2{p[0].get<double>(), p[1].get<double>()};
        }
    }
    if (j.contains("adapter")) {
        const auto& a = j["adapter"];
        std::string kind = "simulator";
        read_opt(a, "kind", kind, "adapter.");
        c.adapter = parse_adapter_kind(kind);
        std::string log;
        read_opt(a, "log", log, "adapter.");
        c.detection_log = log;
        read_opt(a, "command", c.command, "adapter.");
        read_opt(a, "timeout_ms", c.timeout_ms, "adapter.");
        read_opt(a, "prefoveate", c.prefoveate, "adapter.");
    }
    if (j.contains("simulator")) {
        const auto& s = j["simulator"];
        read_opt(s, "peak", c.simulator.peak, "simulator.");
        read_opt(s, "off", c.simulator.off, "simulator.");
        read_opt(s, "flat", c.simulator.flat, "simulator.");
        read_opt(s, "far_detect_prob", c.simulator.far_detect_prob, "simulator.");
        read_opt(s, "jitter", c.simulator.jitter, "simulator.");
        read_opt(s, "temperature_fraction", c.simulator.classifier.temperature_fraction, "simulator.");
        read_opt(s, "visibility_threshold", c.simulator.classifier.visibility_threshold, "simulator.");
    }
    std::string path;
    read_opt(j, "sensor_model", path, "");
    c.sensor_model = path;
    path.clear();
    read_opt(j, "manifest", path, "");
    c.manifest = path;
    path = "out";
    read_opt(j, "output_dir", path, "");
    c.output_dir = path;
    read_opt(j, "jobs", c.jobs, "");
    c.search.variant = c.variant;
    c.search.fovea = c.fovea;
    c.validate(false);
    return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw std::invalid_argument("--set: empty key segment in '" + key + "'");
        if (!node->is_object()) *node = nlohmann::json::object();
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
    nlohmann::json doc = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("config: cannot open " + path.string());
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config " + path.string() + ": " + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return ExperimentConfig::from_json(doc);
}

std::vector<Trial> trials_from_scenes(std::span<const SyntheticScene> scenes, const ClassCatalog& catalog) {
    std::vector<Trial> trials;
    for (const auto& s : scenes) {
        Trial t;
        t.task.image_id = s.image_id;
        t.task.dims = s.dims;
        t.task.target_class = s.target_class;
        t.task.target_boxes = s.target_boxes();
        for (const auto& o : s.objects) {
            if (o.class_id < 0 || o.class_id >= catalog.size()) {
                throw FormatError("scene " + s.image_id + ": object class " + std::to_string(o.class_id) +
                                  " outside the configured classes");
            }
            t.regions.push_back({catalog.name(o.class_id), o.bbox});
        }
        t.scene = s;
        trials.push_back(std::move(t));
    }
    return trials;
}

namespace {

BBox parse_box(const nlohmann::json& b, const std::string& where) {
    if (!b.is_array() || b.size() != 4) throw FormatError(where + ": expected [x0,y0,x1,y1]");
    BBox box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    if (!box.valid()) throw FormatError(where + ": degenerate box");
    return box;
}

int parse_class(const nlohmann::json& v, const ClassCatalog& catalog, const std::string& where) {
    if (v.is_number_integer()) {
        const int k = v.get<int>();
        if (k < 0 || k >= catalog.size()) throw FormatError(where + ": class index out of range");
        return k;
    }
    if (v.is_string()) {
        const auto k = catalog.find(v.get<std::string>());
        if (!k) throw FormatError(where + ": unknown class '" + v.get<std::string>() + "'");
        return *k;
    }
    throw FormatError(where + ": expected class index or name");
}

}  // namespace

std::vector<Trial> load_manifest(const std::filesystem::path& path, const ClassCatalog& catalog) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest " + path.string() + ": " + e.what());
    }
    if (j.is_array() || j.contains("scenes")) {
        const std::vector<SyntheticScene> scenes = read_scene_set(path);
        return trials_from_scenes(scenes, catalog);
    }
    if (!j.contains("images") || !j["images"].is_array()) {
        throw FormatError("manifest must hold {scenes:[...]} or {images:[...]}");
    }
    std::vector<Trial> trials;
    std::size_t idx = 0;
    for (const auto& e : j["images"]) {
        const std::string where = "manifest images[" + std::to_string(idx++) + "]";
        try {
            Trial t;
            t.task.image_id = e.at("image_id").get<std::string>();
            t.task.image_path = e.value("image_path", std::string());
            if (e.contains("dims")) {
                t.task.dims = {e["dims"].at(0).get<int>(), e["dims"].at(1).get<int>()};
            } else if (!t.task.image_path.empty()) {
                t.task.dims = read_image(t.task.image_path).dims();
            } else {
                throw FormatError(where + ": needs dims or image_path");
            }
            t.task.target_class = parse_class(e.at("target"), catalog, where + ".target");
            for (const auto& b : e.value("target_boxes", nlohmann::json::array())) {
                t.task.target_boxes.push_back(parse_box(b, where + ".target_boxes"));
            }
            for (const auto& o : e.value("objects", nlohmann::json::array())) {
                const std::string label = o.contains("label") ? o["label"].get<std::string>()
                                                              : catalog.name(parse_class(o.at("class"), catalog, where));
                t.regions.push_back({label, parse_box(o.at("bbox"), where + ".objects")});
            }
            trials.push_back(std::move(t));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(where + ": " + ex.what());
        }
    }
    return trials;
}

GroundTruthSensor make_ground_truth_sensor(const ExperimentConfig& config) {
    GroundTruthSensor s = default_ground_truth_sensor(config.class_count(), config.fovea.distortion_levels,
                                                      config.fovea.eta, config.simulator.peak, config.simulator.off,
                                                      config.simulator.flat, config.simulator.far_detect_prob);
    s.jitter_max_fraction = config.simulator.jitter;
    s.validate();
    return s;
}

std::optional<SensorModel> resolve_sensor_model(const ExperimentConfig& config) {
    if (config.variant != Variant::Calib && config.variant != Variant::Pred) return std::nullopt;
    if (!config.sensor_model.empty()) {
        SensorModel m = load_sensor_model(config.sensor_model);
        if (m.class_count() != config.class_count()) {
            throw std::invalid_argument("sensor_model: class count " + std::to_string(m.class_count()) +
                                        " does not match the configured " + std::to_string(config.class_count()));
        }
        return m;
    }
    if (config.adapter == AdapterKind::Simulator) return make_ground_truth_sensor(config).alpha_true;
    if (config.adapter == AdapterKind::Pixel && config.variant == Variant::Pred) {
        return pixel_centred_sensor_model(config.class_count(), config.fovea.distortion_levels, config.fovea.eta,
                                          config.simulator.classifier);
    }
    throw std::invalid_argument("sensor_model: the " + to_string(config.variant) + " variant needs a calibration file");
}

std::unique_ptr<DetectorAdapter> make_adapter(const ExperimentConfig& config, const Trial& trial, std::size_t index,
                                              const GroundTruthSensor* ground_truth) {
    switch (config.adapter) {
        case AdapterKind::Simulator:
            if (!trial.scene) throw std::invalid_argument("simulator adapter needs a scene manifest");
            if (ground_truth == nullptr) throw std::invalid_argument("simulator adapter needs the generator sensor");
            return std::make_unique<SimulatedDetector>(*trial.scene, *ground_truth, config.fovea,
                                                       split_seed(config.seed.value_or(0), 2 * index));
        case AdapterKind::Pixel:
            if (!trial.scene) throw std::invalid_argument("pixel adapter needs a scene manifest");
            return std::make_unique<PixelSimulatedDetector>(*trial.scene, config.class_count(), config.fovea,
                                                            config.simulator.classifier);
        case AdapterKind::DetectionLog:
            return load_detection_log(config.detection_log, config.class_count());
        case AdapterKind::Subprocess: {
            SubprocessConfig sc;
            sc.command = config.command;
            sc.timeout = std::chrono::milliseconds(config.timeout_ms);
            sc.prefoveate = config.prefoveate;
            sc.fovea = config.fovea;
            sc.class_count = config.class_count();
            return subprocess_detector(std::move(sc));
        }
    }
    throw std::logic_error("unhandled adapter kind");
}

namespace {

int resolve_jobs(int jobs) {
    if (jobs > 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n) on `jobs` threads; rethrows the first failure after joining.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    const int width = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), std::max<std::size_t>(n, 1)));
    if (width <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < width; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

BatchResult run_batch(const ExperimentConfig& config, std::span<const Trial> trials) {
    const ClassCatalog catalog = config.catalog();
    const std::optional<SensorModel> sensor = resolve_sensor_model(config);
    std::optional<GroundTruthSensor> ground_truth;
    if (config.adapter == AdapterKind::Simulator) ground_truth = make_ground_truth_sensor(config);
    SearchConfig search = config.search;
    search.variant = config.variant;
    search.fovea = config.fovea;

    BatchResult result;
    result.paths.resize(trials.size());
    // Detection logs are shared, read-only; other adapters are per trial.
    std::shared_ptr<DetectorAdapter> shared_log;
    if (config.adapter == AdapterKind::DetectionLog) shared_log = make_adapter(config, trials.empty() ? Trial{} : trials[0], 0, nullptr);
    const int jobs = config.adapter == AdapterKind::Subprocess ? 1 : resolve_jobs(config.jobs);
    std::shared_ptr<DetectorAdapter> subprocess;
    if (config.adapter == AdapterKind::Subprocess && !trials.empty()) subprocess = make_adapter(config, trials[0], 0, nullptr);

    parallel_for(trials.size(), jobs, [&](std::size_t i) {
        const Trial& trial = trials[i];
        std::unique_ptr<DetectorAdapter> own;
        DetectorAdapter* adapter = shared_log ? shared_log.get() : subprocess.get();
        if (adapter == nullptr) {
            own = make_adapter(config, trial, i, ground_truth ? &*ground_truth : nullptr);
            adapter = own.get();
        }
        SearchConfig trial_search = search;
        trial_search.random_seed = split_seed(config.seed.value_or(0), 2 * i + 1);
        try {
            result.paths[i] = run_search(trial.task, *adapter, sensor ? &*sensor : nullptr, catalog, trial_search);
        } catch (const SearchError& e) {
            throw SearchError("trial " + std::to_string(i) + " (" + trial.task.image_id + "): " + e.what(), e.partial());
        }
    });
    if (!result.paths.empty()) {
        double found = 0.0, length = 0.0;
        for (const auto& p : result.paths) {
            found += p.found() ? 1.0 : 0.0;
            length += static_cast<double>(p.length());
        }
        result.success_rate = found / result.paths.size();
        result.mean_length = length / result.paths.size();
    }
    return result;
}

std::vector<double> cumulative_curve(std::span<const Scanpath> paths, int max_n) {
    if (max_n < 1) throw std::invalid_argument("cumulative curve needs max_n >= 1");
    std::vector<double> curve(static_cast<std::size_t>(max_n), 0.0);
    if (paths.empty()) return curve;
    for (const auto& p : paths) {
        if (!p.found()) continue;
        for (int n = static_cast<int>(p.length()); n <= max_n; ++n) curve[n - 1] += 1.0;
    }
    for (double& v : curve) v /= static_cast<double>(paths.size());
    return curve;
}

std::vector<Scanpath> read_scanpaths(const std::filesystem::path& path) {
    std::filesystem::path file = path;
    if (std::filesystem::is_directory(path)) file = path / "scanpaths.json";
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open scanpaths " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("scanpaths " + file.string() + ": " + e.what());
    }
    const nlohmann::json& list = j.is_object() ? j.at("scanpaths") : j;
    std::vector<Scanpath> out;
    for (const auto& p : list) out.push_back(Scanpath::from_json(p));
    return out;
}

nlohmann::json scanpaths_to_json(std::span<const Scanpath> paths) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : paths) list.push_back(p.to_json());
    return {{"scanpaths", std::move(list)}};
}

std::vector<HumanScanpath> synthetic_observers(const SyntheticScene& scene, int subjects, std::uint64_t seed,
                                               double jitter_px) {
    std::vector<HumanScanpath> out;
    std::vector<std::size_t> distractors;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        if (static_cast<int>(i) != scene.target_index) distractors.push_back(i);
    }
    auto clamp_to = [](Point2 p, const BBox& b) {
        return Point2{std::clamp(p.x, b.x_min, b.x_max), std::clamp(p.y, b.y_min, b.y_max)};
    };
    const BBox image{0, 0, static_cast<double>(scene.dims.width), static_cast<double>(scene.dims.height)};
    for (int s = 0; s < subjects; ++s) {
        Rng rng(split_seed(seed, static_cast<std::uint64_t>(s)));
        std::normal_distribution<double> noise(0.0, jitter_px);
        HumanScanpath h;
        h.image_id = scene.image_id;
        h.subject = "s" + std::to_string(s);
        h.target_class = scene.target_class;
        h.fixations.push_back({0.5 * scene.dims.width, 0.5 * scene.dims.height});
        std::vector<std::size_t> order = distractors;
        std::shuffle(order.begin(), order.end(), rng);
        const int glances = std::min<int>(static_cast<int>(order.size()), std::uniform_int_distribution<int>(0, 2)(rng));
        for (int g = 0; g < glances; ++g) {
            const Point2 c = scene.objects[order[g]].bbox.center();
            h.fixations.push_back(clamp_to({c.x + noise(rng), c.y + noise(rng)}, image));
        }
        const BBox& t = scene.target().bbox;
        const Point2 c = t.center();
        h.fixations.push_back(clamp_to({c.x + noise(rng), c.y + noise(rng)}, t));
        out.push_back(std::move(h));
    }
    return out;
}

void simulate_calibration_log(std::span<const SyntheticScene> scenes, const GroundTruthSensor& sensor,
                              const FoveaConfig& fovea, GridDims grid, std::size_t samples_per_bin,
                              std::uint64_t seed, bool keep_jitter,
                              const std::function<void(const DetectionRecord&)>& sink) {
    sensor.validate();
    const int K = sensor.class_count();
    const int D = sensor.distortion_levels();
    if (fovea.distortion_levels != D) throw std::invalid_argument("sensor and fovea disagree on D");
    GroundTruthSensor gen = sensor;
    if (!keep_jitter) gen.jitter_max_fraction = 0.0;
    for (int d = 1; d <= D; ++d) {
        if (!(gen.detect_prob[d - 1] > 0.0)) throw std::invalid_argument("detect_prob is zero at level " + std::to_string(d));
    }
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_class(static_cast<std::size_t>(K));
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (std::size_t o = 0; o < scenes[s].objects.size(); ++o) {
            const int k = scenes[s].objects[o].class_id;
            if (k < 0 || k >= K) throw std::invalid_argument("scene object class outside the sensor's classes");
            by_class[k].push_back({s, o});
        }
    }
    for (int k = 0; k < K; ++k) {
        if (by_class[k].empty()) throw std::invalid_argument("class " + std::to_string(k) + " never appears in the scene set");
    }
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < samples_per_bin; ++i) {
        for (int k = 0; k < K; ++k) {
            for (int d = 1; d <= D; ++d) {
                // The object keeps its class and size but is moved to a random position, so
                // every level is reachable whatever the scene layout.
                const SyntheticScene* scene = nullptr;
                SceneObject object;
                Point2 f;
                for (int attempt = 0; attempt < 2000000 && scene == nullptr; ++attempt) {
                    const auto& [s, o] = by_class[k][std::uniform_int_distribution<std::size_t>(0, by_class[k].size() - 1)(rng)];
                    const SyntheticScene& sc = scenes[s];
                    const BBox& b = sc.objects[o].bbox;
                    const double w = b.width(), h = b.height();
                    const double x0 = unit(rng) * std::max(0.0, sc.dims.width - w);
                    const double y0 = unit(rng) * std::max(0.0, sc.dims.height - h);
                    const BBox moved{x0, y0, x0 + w, y0 + h};
                    const Point2 p{unit(rng) * sc.dims.width, unit(rng) * sc.dims.height};
                    const FocalFrame frame(p, sc.dims, fovea.eta);
                    if (distortion_level(moved.center(), frame, fovea) == d) {
                        scene = &sc;
                        object = {k, moved};
                        f = p;
                    }
                }
                if (scene == nullptr) {
                    throw std::runtime_error("level " + std::to_string(d) + " is unreachable for class " + std::to_string(k));
                }
                std::optional<Detection> det;
                while (!det) det = sense_object(object, d, scene->dims, gen, rng);
                const FocalFrame frame(f, scene->dims, fovea.eta);
                det->source_fixation = f;
                det->distance_level = distortion_level(det->bbox.center(), frame, fovea);
                DetectionRecord rec;
                rec.image_id = scene->image_id;
                rec.fixation_cell = cell_of(f, grid, scene->dims);
                rec.focal_point = f;
                rec.image_dims = scene->dims;
                rec.detections.push_back(std::move(*det));
                sink(rec);
            }
        }
    }
}

SensorModel calibrate_from_log(const std::filesystem::path& log, const ExperimentConfig& config, const FitConfig& fit) {
    const int K = config.class_count();
    const int D = config.fovea.distortion_levels;
    std::vector<std::vector<DirichletStats>> bins(static_cast<std::size_t>(K));
    for (auto& row : bins) row.assign(static_cast<std::size_t>(D), DirichletStats(static_cast<std::size_t>(K), fit.clamp_eps));
    std::size_t unlabeled = 0;
    for_each_detection_record(log, K, [&](const DetectionRecord& rec) {
        if (!rec.image_dims) throw FormatError("detection log record for '" + rec.image_id + "' lacks image_dims");
        const Point2 f = rec.focal_point.value_or(cell_center(rec.fixation_cell, config.search.grid, *rec.image_dims));
        const FocalFrame frame(f, *rec.image_dims, config.fovea.eta);
        for (const Detection& det : rec.detections) {
            if (!det.true_class) {
                ++unlabeled;
                continue;
            }
            const int d = distortion_level(det.bbox.center(), frame, config.fovea);
            bins[*det.true_class][d - 1].add(det.scores);
        }
    });
    if (unlabeled > 0) log_message(LogLevel::Info, std::to_string(unlabeled) + " detections without true_class skipped");
    return fit_sensor_model(bins, config.class_names, config.fovea.eta, fit);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp =
        path.parent_path() / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

LogLevel log_level() {
    const char* env = std::getenv("SEMBA_LOG");
    if (env == nullptr) return LogLevel::Info;
    const std::string v = env;
    if (v == "quiet" || v == "0") return LogLevel::Quiet;
    if (v == "debug" || v == "2") return LogLevel::Debug;
    return LogLevel::Info;
}

void log_message(LogLevel level, const std::string& message) {
    if (level == LogLevel::Quiet || static_cast<int>(level) > static_cast<int>(log_level())) return;
    static std::mutex mutex;
    std::lock_guard lock(mutex);
    std::cerr << "[semba] " << message << '\n';
}

namespace {

std::string fixed(double v, int digits = 3) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::pair<std::string, std::filesystem::path> split_named(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) return {"", arg};
    return {arg.substr(0, eq), arg.substr(eq + 1)};
}

/// Runs a command body, mapping exceptions to a non-zero exit code with the message on stderr.
template <typename Fn>
int guarded(const char* name, Fn&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        std::cerr << "semba " << name << ": error: " << e.what() << '\n';
        return 1;
    }
}

void write_heatmap(const AttentionMap& map, int scale, const std::filesystem::path& path, double& lo, double& hi) {
    lo = *std::min_element(map.values.begin(), map.values.end());
    hi = *std::max_element(map.values.begin(), map.values.end());
    Image img(map.dims.cols * scale, map.dims.rows * scale, 1);
    const double span = hi - lo;
    for (int r = 0; r < map.dims.rows; ++r) {
        for (int c = 0; c < map.dims.cols; ++c) {
            const double v = span > 0.0 ? (map.at({r, c}) - lo) / span : 0.0;
            const auto g = static_cast<std::uint8_t>(std::lround(255.0 * v));
            for (int y = r * scale; y < (r + 1) * scale; ++y) {
                for (int x = c * scale; x < (c + 1) * scale; ++x) img.at(x, y, 0) = g;
            }
        }
    }
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.parent_path() / (".tmp_" + path.filename().string());
    write_image(img, tmp);
    std::filesystem::rename(tmp, path);
}

std::string safe_name(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out.empty() ? "image" : out;
}

}  // namespace

int cmd_calibrate(const CalibrateOptions& options) {
    return guarded("calibrate", [&] {
        const ExperimentConfig config = load_experiment_config(options.config, options.overrides);
        if (!std::filesystem::exists(options.log)) throw std::invalid_argument("--log: file not found: " + options.log.string());
        if (options.out.empty()) throw std::invalid_argument("--out is required");
        FitConfig fit;
        fit.min_samples = options.min_samples;
        const SensorModel model = calibrate_from_log(options.log, config, fit);
        write_file_atomic(options.out, model.to_json().dump(2) + "\n");
        std::size_t samples = 0;
        int unconverged = 0;
        for (int k = 0; k < model.class_count(); ++k) {
            for (int d = 1; d <= model.distortion_levels(); ++d) {
                samples += model.diagnostics(k, d).samples;
                if (!model.diagnostics(k, d).converged) ++unconverged;
            }
        }
        log_message(LogLevel::Info, "calibrated " + std::to_string(model.class_count()) + "x" +
                                        std::to_string(model.distortion_levels()) + " bins from " +
                                        std::to_string(samples) + " detections; " +
                                        std::to_string(model.fallback_count()) + " flat fallbacks, " +
                                        std::to_string(unconverged) + " unconverged");
        std::cout << options.out.string() << '\n';
        return 0;
    });
}

int cmd_search(const SearchOptions& options) {
    return guarded("search", [&] {
        ExperimentConfig config = load_experiment_config(options.config, options.overrides);
        if (options.out) config.output_dir = *options.out;
        if (options.jobs) config.jobs = *options.jobs;
        config.validate(true);
        if (config.manifest.empty()) throw std::invalid_argument("manifest: required for search");
        const std::vector<Trial> trials = load_manifest(config.manifest, config.catalog());
        const std::filesystem::path out = config.output_dir;
        std::filesystem::create_directories(out);
        BatchResult result;
        if (trials.empty()) log_message(LogLevel::Info, "0 scenes in the manifest; nothing to search");
        if (!trials.empty()) {
            log_message(LogLevel::Info, "searching " + std::to_string(trials.size()) + " scenes with " +
                                            to_string(config.variant) + " (eta " + fixed(config.fovea.eta) + ")");
            result = run_batch(config, trials);
        }
        for (const auto& p : result.paths) {
            write_file_atomic(out / "scanpaths" / (safe_name(p.image_id) + "__" + std::to_string(p.target_class) + ".json"),
                              p.to_json().dump(2) + "\n");
        }
        write_file_atomic(out / "scanpaths.json", scanpaths_to_json(result.paths).dump() + "\n");
        if (options.dump_maps) {
            for (const auto& p : result.paths) {
                const std::filesystem::path dir = out / "maps" / (safe_name(p.image_id) + "__" + std::to_string(p.target_class));
                nlohmann::json index = nlohmann::json::array();
                for (std::size_t s = 0; s < p.steps.size(); ++s) {
                    if (!p.steps[s].map) continue;
                    std::ostringstream name;
                    name << "step_" << std::setw(2) << std::setfill('0') << s << ".pgm";
                    double lo = 0, hi = 0;
                    write_heatmap(*p.steps[s].map, options.map_scale, dir / name.str(), lo, hi);
                    index.push_back({{"step", s},
                                     {"file", name.str()},
                                     {"variant", p.steps[s].map->variant},
                                     {"raw_min", lo},
                                     {"raw_max", hi}});
                }
                write_file_atomic(dir / "index.json", index.dump(2) + "\n");
            }
        }
        const nlohmann::json summary = {{"variant", to_string(config.variant)},
                                        {"scenes", result.paths.size()},
                                        {"success_rate", result.success_rate},
                                        {"mean_length", result.mean_length},
                                        {"eta", config.fovea.eta},
                                        {"config", config.to_json()}};
        write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
        std::cout << "variant=" << to_string(config.variant) << " scenes=" << result.paths.size()
                  << " success=" << fixed(result.success_rate) << " mean_length=" << fixed(result.mean_length) << '\n';
        return 0;
    });
}

int cmd_evaluate(const EvaluateOptions& options) {
    return guarded("evaluate", [&] {
        const ExperimentConfig base_config = load_experiment_config(options.config, options.overrides);
        base_config.validate(true);
        if (options.predicted.empty()) throw std::invalid_argument("--predicted: at least one scanpath set is required");
        if (options.out.empty()) throw std::invalid_argument("--out is required");
        if (!std::filesystem::exists(options.humans)) throw std::invalid_argument("--humans: file not found: " + options.humans.string());
        std::optional<BaselineDensity> baseline;
        if (options.conditional && !options.skip_cig) {
            if (!options.baseline) {
                throw std::invalid_argument("cIG requested but no baseline density given: pass --baseline FILE (or --skip-cig)");
            }
            if (!std::filesystem::exists(*options.baseline)) {
                throw std::invalid_argument("--baseline: file not found: " + options.baseline->string());
            }
            baseline = load_baseline_density(*options.baseline);
        }
        if (base_config.manifest.empty()) throw std::invalid_argument("manifest: required to evaluate (ground-truth boxes)");
        const ClassCatalog catalog = base_config.catalog();
        const std::vector<Trial> trials = load_manifest(base_config.manifest, catalog);
        std::map<std::string, ImageContext> contexts;
        std::map<std::string, std::size_t> trial_index;
        for (std::size_t i = 0; i < trials.size(); ++i) {
            contexts[trials[i].task.image_id] = {trials[i].task.dims, trials[i].regions, trials[i].task.target_boxes};
            trial_index[trials[i].task.image_id] = i;
        }
        const std::vector<HumanScanpath> humans = read_human_scanpaths(options.humans, &catalog);
        EvaluationOptions eval;
        eval.grid = base_config.search.grid;
        eval.use_mean_shift = options.mean_shift;
        eval.conditional = options.conditional;
        eval.baseline = baseline ? &*baseline : nullptr;

        std::vector<MetricReport> rows;
        if (options.human_consistency) rows.push_back(human_consistency(humans, contexts, eval));
        for (const auto& arg : options.predicted) {
            auto [name, path] = split_named(arg);
            const std::vector<Scanpath> predicted = read_scanpaths(path);
            ExperimentConfig config = base_config;
            if (!predicted.empty() && !predicted.front().variant.empty()) config.variant = parse_variant(predicted.front().variant);
            config.search.variant = config.variant;
            if (name.empty()) name = to_string(config.variant);
            ReplayFn replay;
            std::optional<SensorModel> sensor;
            std::optional<GroundTruthSensor> ground_truth;
            if (options.conditional) {
                sensor = resolve_sensor_model(config);
                if (config.adapter == AdapterKind::Simulator) ground_truth = make_ground_truth_sensor(config);
                replay = [&, config](const HumanScanpath& h) {
                    const auto it = trial_index.find(h.image_id);
                    if (it == trial_index.end()) return std::vector<AttentionMap>{};
                    Trial trial = trials[it->second];
                    trial.task.target_class = h.target_class;
                    auto adapter = make_adapter(config, trial, it->second, ground_truth ? &*ground_truth : nullptr);
                    return replay_history(trial.task, h.fixations, *adapter, sensor ? &*sensor : nullptr, catalog,
                                          config.search);
                };
            }
            MetricReport report = evaluate_run(predicted, humans, contexts, eval, replay);
            report.name = name;
            for (const auto& w : report.warnings) log_message(LogLevel::Info, name + ": " + w);
            rows.push_back(std::move(report));
        }
        std::optional<PublishedReference> reference;
        if (options.reference) reference = load_published_reference(*options.reference);
        const std::string table = format_report_table(rows, reference ? &*reference : nullptr);
        nlohmann::json report_json = {{"rows", nlohmann::json::array()}};
        for (const auto& r : rows) report_json["rows"].push_back(r.to_json());
        std::filesystem::path json_path = options.out;
        json_path += ".json";
        std::filesystem::path txt_path = options.out;
        txt_path += ".txt";
        write_file_atomic(json_path, report_json.dump(2) + "\n");
        write_file_atomic(txt_path, table);
        std::cout << table;
        return 0;
    });
}

int cmd_cumulative(const CumulativeOptions& options) {
    return guarded("cumulative", [&] {
        if (options.inputs.empty()) throw std::invalid_argument("--input: at least one scanpath set is required");
        if (options.out.empty()) throw std::invalid_argument("--out is required");
        std::vector<std::string> names;
        std::vector<std::vector<double>> curves;
        nlohmann::json doc = {{"max_n", options.max_n}, {"curves", nlohmann::json::object()}, {"trials", nlohmann::json::object()}};
        for (std::size_t i = 0; i < options.inputs.size(); ++i) {
            auto [name, path] = split_named(options.inputs[i]);
            const auto paths = read_scanpaths(path);
            if (name.empty()) name = "set" + std::to_string(i);
            if (doc["curves"].contains(name)) throw std::invalid_argument("--input: duplicate set name '" + name + "'");
            curves.push_back(cumulative_curve(paths, options.max_n));
            names.push_back(name);
            doc["curves"][name] = curves.back();
            doc["trials"][name] = paths.size();
        }
        std::ostringstream csv;
        csv << "n";
        for (const auto& n : names) csv << ',' << n;
        csv << '\n';
        for (int n = 1; n <= options.max_n; ++n) {
            csv << n;
            for (const auto& c : curves) csv << ',' << std::setprecision(17) << c[n - 1];
            csv << '\n';
        }
        std::filesystem::path csv_path = options.out;
        csv_path += ".csv";
        std::filesystem::path json_path = options.out;
        json_path += ".json";
        write_file_atomic(csv_path, csv.str());
        write_file_atomic(json_path, doc.dump(2) + "\n");
        std::cout << csv.str();
        return 0;
    });
}

int cmd_foveate(const FoveateOptions& options) {
    return guarded("foveate", [&] {
        options.fovea.validate();
        const Image source = read_image(options.input);
        const Point2 focal = options.focal.value_or(Point2{0.5 * source.width, 0.5 * source.height});
        const Image out = foveate(source, FocalFrame(focal, source.dims(), options.fovea.eta), options.fovea);
        if (options.output.has_parent_path()) std::filesystem::create_directories(options.output.parent_path());
        const std::filesystem::path tmp = options.output.parent_path() / (".tmp_" + options.output.filename().string());
        write_image(out, tmp);
        std::filesystem::rename(tmp, options.output);
        return 0;
    });
}

int cmd_simulate(const SimulateOptions& options) {
    return guarded("simulate", [&] {
        const ExperimentConfig config = load_experiment_config(options.config, options.overrides);
        if (!config.seed) throw std::invalid_argument("seed: required for simulator runs");
        if (options.scenes < 0) throw std::invalid_argument("--scenes must be >= 0");
        if (options.out.empty()) throw std::invalid_argument("--out is required");
        SceneSpec spec = options.spec;
        spec.n_classes = config.class_count();
        std::vector<SyntheticScene> scenes;
        for (int i = 0; i < options.scenes; ++i) {
            std::ostringstream id;
            id << "scene_" << std::setw(5) << std::setfill('0') << i;
            scenes.push_back(generate_scene(spec, split_seed(*config.seed, static_cast<std::uint64_t>(i)), id.str()));
        }
        write_file_atomic(options.out, scene_set_to_json(scenes).dump() + "\n");
        log_message(LogLevel::Info, "wrote " + std::to_string(scenes.size()) + " scenes to " + options.out.string());
        if (options.calibration_log) {
            const GroundTruthSensor sensor = make_ground_truth_sensor(config);
            const std::filesystem::path& path = *options.calibration_log;
            if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
            const std::filesystem::path tmp = path.parent_path() / ("." + path.filename().string() + ".tmp");
            std::size_t written = 0;
            {
                std::ofstream out(tmp, std::ios::trunc);
                if (!out) throw std::runtime_error("cannot write " + tmp.string());
                simulate_calibration_log(scenes, sensor, config.fovea, config.search.grid, options.samples_per_bin,
                                         split_seed(*config.seed, 0xca11b7a7e5ULL), options.calibration_jitter,
                                         [&](const DetectionRecord& r) {
                                             out << record_to_line(r) << '\n';
                                             ++written;
                                         });
                if (!out) throw std::runtime_error("failed writing " + tmp.string());
            }
            std::filesystem::rename(tmp, path);
            log_message(LogLevel::Info, "wrote " + std::to_string(written) + " calibration records to " + path.string());
        }
        if (options.humans) {
            std::vector<HumanScanpath> all;
            for (std::size_t i = 0; i < scenes.size(); ++i) {
                auto h = synthetic_observers(scenes[i], options.subjects, split_seed(*config.seed ^ 0x5eedULL, i));
                all.insert(all.end(), h.begin(), h.end());
            }
            write_file_atomic(*options.humans, human_scanpaths_to_json(all).dump() + "\n");
        }
        std::cout << "scenes=" << scenes.size() << '\n';
        return 0;
    });
}

int cmd_baseline(const BaselineOptions& options) {
    return guarded("baseline", [&] {
        if (!options.px_per_degree) {
            throw std::invalid_argument("--px-per-degree is required (pixels per degree of visual angle; e.g. 35)");
        }
        if (!(*options.px_per_degree > 0.0)) throw std::invalid_argument("--px-per-degree must be > 0");
        if (options.out.empty()) throw std::invalid_argument("--out is required");
        const auto humans = read_human_scanpaths(options.humans);
        std::vector<Point2> fixations;
        for (const auto& h : humans) fixations.insert(fixations.end(), h.fixations.begin(), h.fixations.end());
        const BaselineDensity density = build_baseline_density(fixations, options.dims, options.grid, *options.px_per_degree);
        write_file_atomic(options.out, density.to_json().dump() + "\n");
        log_message(LogLevel::Info, "baseline density from " + std::to_string(fixations.size()) + " fixations");
        return 0;
    });
}

}  // namespace semba
