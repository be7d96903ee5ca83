#include "semba/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace semba {

std::vector<BBox> SyntheticScene::target_boxes() const {
    std::vector<BBox> boxes{target().bbox};
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (static_cast<int>(i) != target_index && objects[i].class_id == target_class) boxes.push_back(objects[i].bbox);
    }
    return boxes;
}

nlohmann::json SyntheticScene::to_json() const {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : objects) {
        objs.push_back({{"class", o.class_id}, {"bbox", {o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max}}});
    }
    return {{"image_id", image_id},
            {"dims", {dims.width, dims.height}},
            {"objects", std::move(objs)},
            {"target_class", target_class},
            {"target_index", target_index}};
}

SyntheticScene SyntheticScene::from_json(const nlohmann::json& j) {
    try {
        SyntheticScene s;
        s.image_id = j.value("image_id", std::string());
        const auto& dims = j.at("dims");
        s.dims = {dims.at(0).get<int>(), dims.at(1).get<int>()};
        for (const auto& o : j.at("objects")) {
            const auto& b = o.at("bbox");
            s.objects.push_back({o.at("class").get<int>(),
                                 {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()}});
            if (!s.objects.back().bbox.valid()) throw FormatError("scene object has a degenerate bbox");
        }
        s.target_class = j.at("target_class").get<int>();
        s.target_index = j.at("target_index").get<int>();
        if (s.dims.width < 1 || s.dims.height < 1) throw FormatError("scene dims must be positive");
        if (s.target_index < 0 || s.target_index >= static_cast<int>(s.objects.size())) {
            throw FormatError("scene target_index out of range");
        }
        if (s.objects[s.target_index].class_id != s.target_class) {
            throw FormatError("scene target object does not have the target class");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("scene: ") + e.what());
    }
}

std::vector<SyntheticScene> read_scene_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scene set " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("scene set " + path.string() + ": " + e.what());
    }
    const nlohmann::json& list = j.is_object() ? j.at("scenes") : j;
    if (!list.is_array()) throw FormatError("scene set must be an array or {scenes: [...]}");
    std::vector<SyntheticScene> scenes;
    for (const auto& s : list) scenes.push_back(SyntheticScene::from_json(s));
    return scenes;
}

nlohmann::json scene_set_to_json(const std::vector<SyntheticScene>& scenes) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : scenes) list.push_back(s.to_json());
    return {{"scenes", std::move(list)}};
}

SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed, std::string image_id) {
    if (spec.n_objects < 1) throw std::invalid_argument("scene needs at least one object");
    if (spec.n_classes < 2) throw std::invalid_argument("scene needs at least two classes");
    if (spec.dims.width < 1 || spec.dims.height < 1) throw std::invalid_argument("scene dims must be positive");
    if (!(spec.min_box_fraction > 0.0) || spec.max_box_fraction < spec.min_box_fraction) {
        throw std::invalid_argument("scene box fractions must satisfy 0 < min <= max");
    }
    if (spec.min_box_fraction > 1.0) throw std::runtime_error("impossible packing: minimum box exceeds the image");
    if (spec.target_class && (*spec.target_class < 0 || *spec.target_class >= spec.n_classes)) {
        throw std::invalid_argument("target class out of range");
    }
    if (!spec.target_weights.empty() && static_cast<int>(spec.target_weights.size()) != spec.n_classes) {
        throw std::invalid_argument("target weights must have one entry per class");
    }
    if (!spec.allow_overlap) {
        const double min_area = spec.min_box_fraction * spec.min_box_fraction;
        if (spec.n_objects * min_area > 1.0) {
            throw std::runtime_error("impossible packing: " + std::to_string(spec.n_objects) +
                                     " non-overlapping objects cannot fit at the minimum box size");
        }
    }

    Rng rng(seed);
    SyntheticScene scene;
    scene.image_id = std::move(image_id);
    scene.dims = spec.dims;
    if (spec.target_class) {
        scene.target_class = *spec.target_class;
    } else if (spec.target_weights.empty()) {
        scene.target_class = std::uniform_int_distribution<int>(0, spec.n_classes - 1)(rng);
    } else {
        std::discrete_distribution<int> pick(spec.target_weights.begin(), spec.target_weights.end());
        scene.target_class = pick(rng);
    }
    scene.target_index = std::uniform_int_distribution<int>(0, spec.n_objects - 1)(rng);

    std::uniform_real_distribution<double> frac(spec.min_box_fraction, spec.max_box_fraction);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double w = spec.dims.width;
    const double h = spec.dims.height;
    for (int i = 0; i < spec.n_objects; ++i) {
        int cls = scene.target_class;
        if (i != scene.target_index) {
            if (spec.distractors_exclude_target) {
                cls = std::uniform_int_distribution<int>(0, spec.n_classes - 2)(rng);
                if (cls >= scene.target_class) ++cls;
            } else {
                cls = std::uniform_int_distribution<int>(0, spec.n_classes - 1)(rng);
            }
        }
        bool placed = false;
        for (int attempt = 0; attempt < spec.max_placement_attempts && !placed; ++attempt) {
            const double bw = std::min(frac(rng), 1.0) * w;
            const double bh = std::min(frac(rng), 1.0) * h;
            const double x0 = unit(rng) * (w - bw);
            const double y0 = unit(rng) * (h - bh);
            BBox box{std::round(x0), std::round(y0), std::round(x0 + bw), std::round(y0 + bh)};
            box = box.clipped(spec.dims);
            if (!box.valid()) continue;
            if (!spec.allow_overlap) {
                const bool clash = std::any_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
                    return box.x_min < o.bbox.x_max && box.x_max > o.bbox.x_min && box.y_min < o.bbox.y_max &&
                           box.y_max > o.bbox.y_min;
                });
                if (clash) continue;
            }
            scene.objects.push_back({cls, box});
            placed = true;
        }
        if (!placed) {
            throw std::runtime_error("impossible packing: could not place object " + std::to_string(i) + " of " +
                                     std::to_string(spec.n_objects));
        }
    }
    return scene;
}

void GroundTruthSensor::validate() const {
    if (static_cast<int>(detect_prob.size()) != distortion_levels()) {
        throw std::invalid_argument("detect_prob must have one entry per distortion level");
    }
    for (std::size_t d = 0; d < detect_prob.size(); ++d) {
        if (!(detect_prob[d] >= 0.0 && detect_prob[d] <= 1.0)) throw std::invalid_argument("detect_prob outside [0,1]");
        if (d > 0 && detect_prob[d] > detect_prob[d - 1]) throw std::invalid_argument("detect_prob must be non-increasing");
    }
    if (jitter_max_fraction < 0.0) throw std::invalid_argument("jitter must be non-negative");
}

GroundTruthSensor default_ground_truth_sensor(int class_count, int distortion_levels, double eta, double peak,
                                              double off, double flat, double far_detect_prob) {
    std::vector<std::string> names;
    for (int k = 0; k < class_count; ++k) names.push_back(std::to_string(k));
    GroundTruthSensor sensor{SensorModel(names, distortion_levels, eta), {}, 0.04};
    for (int d = 1; d <= distortion_levels; ++d) {
        const double t = distortion_levels == 1 ? 0.0 : static_cast<double>(d - 1) / (distortion_levels - 1);
        for (int k = 0; k < class_count; ++k) {
            std::vector<double> alpha(static_cast<std::size_t>(class_count));
            for (int j = 0; j < class_count; ++j) {
                const double start = j == k ? peak : off;
                alpha[j] = std::exp((1.0 - t) * std::log(start) + t * std::log(flat));
            }
            sensor.alpha_true.set(k, d, DirichletParams(std::move(alpha)));
        }
        sensor.detect_prob.push_back(1.0 - t * (1.0 - far_detect_prob));
    }
    return sensor;
}

std::optional<Detection> sense_object(const SceneObject& object, int d, ImageDims dims, const GroundTruthSensor& sensor,
                                      Rng& rng) {
    const int levels = sensor.distortion_levels();
    if (d < 1 || d > levels) throw std::invalid_argument("distortion level out of range");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) >= sensor.detect_prob[d - 1]) return std::nullopt;
    Detection det;
    det.scores = dirichlet_sample(sensor.alpha_true.params(object.class_id, d), rng);
    const double t = levels == 1 ? 0.0 : static_cast<double>(d - 1) / (levels - 1);
    const double sd = sensor.jitter_max_fraction * std::hypot(dims.width, dims.height) * t;
    det.bbox = object.bbox;
    if (sd > 0.0) {
        std::normal_distribution<double> normal(0.0, sd);
        const BBox box = BBox{object.bbox.x_min + normal(rng), object.bbox.y_min + normal(rng),
                              object.bbox.x_max + normal(rng), object.bbox.y_max + normal(rng)}
                             .clipped(dims);
        if (box.valid()) det.bbox = box;
    }
    det.true_class = object.class_id;
    return det;
}

std::vector<Detection> sense(const SyntheticScene& scene, const GroundTruthSensor& sensor, const FocalFrame& frame,
                             const FoveaConfig& fovea, Rng& rng) {
    if (frame.dims() != scene.dims) throw std::invalid_argument("focal frame does not match scene dims");
    if (fovea.distortion_levels != sensor.distortion_levels()) throw std::invalid_argument("sensor and fovea disagree on D");
    std::vector<Detection> out;
    for (const auto& obj : scene.objects) {
        auto det = sense_object(obj, distortion_level(obj.bbox.center(), frame, fovea), scene.dims, sensor, rng);
        if (!det) continue;
        det->source_fixation = frame.focal_point();
        det->distance_level = distortion_level(det->bbox.center(), frame, fovea);
        out.push_back(std::move(*det));
    }
    return out;
}

namespace {

constexpr double kRingRadius = 100.0;

std::array<double, 3> ring_offset(int k, int class_count) {
    const double theta = 2.0 * std::numbers::pi * k / class_count;
    // Orthonormal basis of the plane orthogonal to the grey axis (1,1,1).
    const double u[3] = {1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0), 0.0};
    const double v[3] = {1.0 / std::sqrt(6.0), 1.0 / std::sqrt(6.0), -2.0 / std::sqrt(6.0)};
    std::array<double, 3> o{};
    for (int c = 0; c < 3; ++c) o[c] = kRingRadius * (std::cos(theta) * u[c] + std::sin(theta) * v[c]);
    return o;
}

}  // namespace

std::array<std::uint8_t, 3> class_color(int k, int class_count) {
    const auto o = ring_offset(k, class_count);
    std::array<std::uint8_t, 3> rgb{};
    for (int c = 0; c < 3; ++c) rgb[c] = static_cast<std::uint8_t>(std::lround(kBackgroundGray + o[c]));
    return rgb;
}

Image render_scene(const SyntheticScene& scene, int class_count) {
    Image img(scene.dims.width, scene.dims.height, 3, kBackgroundGray);
    for (const auto& obj : scene.objects) {
        if (obj.class_id < 0 || obj.class_id >= class_count) throw std::invalid_argument("scene object class out of range");
        const auto rgb = class_color(obj.class_id, class_count);
        const BBox b = obj.bbox.clipped(scene.dims);
        const int x0 = static_cast<int>(std::floor(b.x_min));
        const int y0 = static_cast<int>(std::floor(b.y_min));
        const int x1 = static_cast<int>(std::ceil(b.x_max));
        const int y1 = static_cast<int>(std::ceil(b.y_max));
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
            }
        }
    }
    return img;
}

SimulatedDetector::SimulatedDetector(SyntheticScene scene, const GroundTruthSensor& sensor, FoveaConfig fovea,
                                     std::uint64_t seed)
    : scene_(std::move(scene)), sensor_(sensor), fovea_(fovea), rng_(seed) {
    sensor_.validate();
}

std::vector<Detection> SimulatedDetector::detect(const FixationQuery& query) {
    FoveaConfig fovea = fovea_;
    fovea.eta = query.eta;
    const FocalFrame frame(query.focal_point, scene_.dims, query.eta);
    return sense(scene_, sensor_, frame, fovea, rng_);
}

PixelSimulatedDetector::PixelSimulatedDetector(SyntheticScene scene, int class_count, FoveaConfig fovea,
                                               ColorClassifierConfig classifier)
    : scene_(std::move(scene)),
      class_count_(class_count),
      fovea_(fovea),
      classifier_(classifier),
      foveator_(render_scene(scene_, class_count), fovea) {}

double PixelSimulatedDetector::contrast(const std::array<double, 3>& mean_color) const {
    double sq = 0.0;
    for (int c = 0; c < 3; ++c) sq += (mean_color[c] - kBackgroundGray) * (mean_color[c] - kBackgroundGray);
    return std::sqrt(sq) / kRingRadius;
}

std::vector<double> PixelSimulatedDetector::classify(const std::array<double, 3>& mean_color) const {
    const double tau = classifier_.temperature_fraction * kRingRadius;
    std::vector<double> logits(static_cast<std::size_t>(class_count_));
    for (int k = 0; k < class_count_; ++k) {
        const auto rgb = class_color(k, class_count_);
        double dot = 0.0;
        for (int c = 0; c < 3; ++c) dot += (mean_color[c] - kBackgroundGray) * (rgb[c] - kBackgroundGray);
        logits[k] = dot / (tau * tau);
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& v : logits) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : logits) v /= total;
    return logits;
}

std::vector<Detection> PixelSimulatedDetector::detect(const FixationQuery& query) {
    const FocalFrame frame(query.focal_point, scene_.dims, query.eta);
    std::vector<Detection> out;
    for (const auto& obj : scene_.objects) {
        const auto mean = foveator_.mean_in_box(obj.bbox, frame);
        if (contrast(mean) < classifier_.visibility_threshold) continue;
        Detection det;
        det.bbox = obj.bbox;
        det.scores = classify(mean);
        det.source_fixation = query.focal_point;
        det.true_class = obj.class_id;
        out.push_back(std::move(det));
    }
    return out;
}

SensorModel pixel_centred_sensor_model(int class_count, int distortion_levels, double eta,
                                       ColorClassifierConfig classifier, double concentration) {
    std::vector<std::string> names;
    for (int k = 0; k < class_count; ++k) names.push_back(std::to_string(k));
    SensorModel model(names, distortion_levels, eta);
    SyntheticScene empty;
    empty.dims = {1, 1};
    empty.objects.push_back({0, {0, 0, 1, 1}});
    const PixelSimulatedDetector probe(empty, class_count, FoveaConfig{}, classifier);
    for (int k = 0; k < class_count; ++k) {
        const auto rgb = class_color(k, class_count);
        std::vector<double> alpha = probe.classify({double(rgb[0]), double(rgb[1]), double(rgb[2])});
        for (double& a : alpha) a *= concentration;
        model.set(k, 1, DirichletParams(std::move(alpha)));
    }
    return model;
}

}  // namespace semba
