#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "semba/detections.hpp"
#include "semba/fovea.hpp"
#include "semba/image.hpp"
#include "semba/sensor_model.hpp"

namespace semba {

struct SceneObject {
    int class_id = 0;
    BBox bbox;
    friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

/// Target-present scene: at least one object, objects[target_index] has class target_class.
struct SyntheticScene {
    std::string image_id;
    ImageDims dims;
    std::vector<SceneObject> objects;
    int target_class = 0;
    int target_index = 0;

    const SceneObject& target() const { return objects.at(target_index); }
    /// Boxes of every object of the target class, the designated target first.
    std::vector<BBox> target_boxes() const;
    friend bool operator==(const SyntheticScene&, const SyntheticScene&) = default;

    nlohmann::json to_json() const;
    static SyntheticScene from_json(const nlohmann::json& j);
};

struct SceneSpec {
    ImageDims dims{1680, 1050};
    int n_objects = 3;
    int n_classes = 5;
    std::optional<int> target_class;     // fixed target class; otherwise drawn by target_weights
    std::vector<double> target_weights;  // relative target frequencies; empty = uniform
    double min_box_fraction = 0.06;      // box side as a fraction of the matching image side
    double max_box_fraction = 0.18;
    bool distractors_exclude_target = true;
    bool allow_overlap = true;
    int max_placement_attempts = 2000;
};

/// Deterministic under `seed`. Throws std::invalid_argument for an invalid spec and
/// std::runtime_error when non-overlapping placement is impossible.
SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed, std::string image_id = "");

std::vector<SyntheticScene> read_scene_set(const std::filesystem::path& path);
nlohmann::json scene_set_to_json(const std::vector<SyntheticScene>& scenes);

/// Generator-side sensor: true score models per (class, level), detection probability per level,
/// and box jitter whose std grows linearly from 0 at d=1 to jitter_max_fraction * diagonal at d=D.
struct GroundTruthSensor {
    SensorModel alpha_true;
    std::vector<double> detect_prob;
    double jitter_max_fraction = 0.04;

    int class_count() const { return alpha_true.class_count(); }
    int distortion_levels() const { return alpha_true.distortion_levels(); }
    void validate() const;
};

/// alpha_true[k][d] interpolates log-linearly from peaked (peak on k, off elsewhere) at d=1 to
/// flat at d=D; detect_prob falls linearly from 1 at d=1 to `far_detect_prob` at d=D.
GroundTruthSensor default_ground_truth_sensor(int class_count, int distortion_levels, double eta = 0.156,
                                              double peak = 40.0, double off = 0.5, double flat = 1.2,
                                              double far_detect_prob = 0.5);

/// Senses a single object at a known level d: nullopt with probability 1 - p(d), otherwise a
/// detection scored by a draw from Dir(alpha_true[k][d]) with a jittered box.
std::optional<Detection> sense_object(const SceneObject& object, int d, ImageDims dims, const GroundTruthSensor& sensor,
                                      Rng& rng);

/// One sensing pass: each object at level d (by its true box centre) is detected with
/// probability p(d), scored by a draw from Dir(alpha_true[k][d]) and boxed with jitter.
std::vector<Detection> sense(const SyntheticScene& scene, const GroundTruthSensor& sensor, const FocalFrame& frame,
                             const FoveaConfig& fovea, Rng& rng);

/// Colour of class k: points on a ring around the grey background, orthogonal to the grey axis.
std::array<std::uint8_t, 3> class_color(int k, int class_count);
constexpr std::uint8_t kBackgroundGray = 128;

/// Flat grey background with one solid rectangle per object, drawn in object order.
Image render_scene(const SyntheticScene& scene, int class_count);

/// Detector over a synthetic scene with analytically injected, level-dependent noise.
class SimulatedDetector final : public DetectorAdapter {
public:
    SimulatedDetector(SyntheticScene scene, const GroundTruthSensor& sensor, FoveaConfig fovea, std::uint64_t seed);
    std::vector<Detection> detect(const FixationQuery& query) override;

private:
    SyntheticScene scene_;
    const GroundTruthSensor& sensor_;
    FoveaConfig fovea_;
    Rng rng_;
};

/// Pixel-path detector: renders the scene, foveates it around each fixation and scores every
/// object by a colour classifier on its foveated mean colour. Blur pulls the colour toward the
/// background, which flattens the scores and eventually hides the object.
struct ColorClassifierConfig {
    double temperature_fraction = 0.45;  // softmax temperature as a fraction of the ring radius
    double visibility_threshold = 0.15;  // min contrast (fraction of ring radius) to report a box
};

class PixelSimulatedDetector final : public DetectorAdapter {
public:
    PixelSimulatedDetector(SyntheticScene scene, int class_count, FoveaConfig fovea, ColorClassifierConfig classifier = {});
    std::vector<Detection> detect(const FixationQuery& query) override;

    /// Classifier scores for one mean colour.
    std::vector<double> classify(const std::array<double, 3>& mean_color) const;
    /// Contrast of a mean colour against the background, as a fraction of the ring radius.
    double contrast(const std::array<double, 3>& mean_color) const;

private:
    SyntheticScene scene_;
    int class_count_;
    FoveaConfig fovea_;
    ColorClassifierConfig classifier_;
    Foveator foveator_;
};

/// Sensor model whose d=1 row has the mean score of an unblurred object of each class under the
/// colour classifier (concentration `concentration`); other rows stay flat. Enough for Pred.
SensorModel pixel_centred_sensor_model(int class_count, int distortion_levels, double eta,
                                       ColorClassifierConfig classifier = {}, double concentration = 100.0);

}  // namespace semba
