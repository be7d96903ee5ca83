#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "semba/attention_map.hpp"
#include "semba/belief.hpp"
#include "semba/detections.hpp"
#include "semba/fovea.hpp"
#include "semba/sensor_model.hpp"

namespace semba {

/// Random picks uniformly among unmasked cells and ignores detections; it is the chance baseline.
enum class Variant { Base, Calib, Pred, Random };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

enum class OracleRule {
    PixelInBox,     // fixation pixel lies inside a target box
    CellIntersects  // fixation cell overlaps a target box
};

enum class Termination { TargetFound, Truncated, MapExhausted };

std::string to_string(Termination t);
Termination parse_termination(const std::string& name);

struct SearchConfig {
    Variant variant = Variant::Pred;
    int max_fixations = 7;  // counts f0
    int ior_radius = 1;     // masks a (2r+1)^2 block around every visited cell
    GridDims grid{20, 32};
    std::optional<Point2> initial_fixation;  // default: image centre
    bool oracle = true;
    OracleRule oracle_rule = OracleRule::PixelInBox;
    FoveaConfig fovea;
    std::uint64_t random_seed = 0;  // Random variant only
    bool record_maps = true;

    void validate() const;
};

/// Everything the loop needs to know about one (image, target) trial.
struct SearchTask {
    std::string image_id;
    std::filesystem::path image_path;
    ImageDims dims;
    int target_class = 0;
    std::vector<BBox> target_boxes;  // used by the Oracle only
};

struct SearchStep {
    Cell cell;
    Point2 fixation;
    std::size_t detections = 0;       // detections sensed at this fixation
    std::optional<AttentionMap> map;  // map the next fixation was selected from
};

struct Scanpath {
    std::string image_id;
    int target_class = 0;
    std::string variant;
    std::vector<SearchStep> steps;
    Termination termination = Termination::Truncated;

    std::size_t length() const { return steps.size(); }
    bool found() const { return termination == Termination::TargetFound; }
    std::vector<Point2> fixations() const;
    std::vector<Cell> cells() const;

    /// {image_id, target, variant, fixations:[[x,y]...], cells:[[r,c]...], detections:[...],
    ///  termination_reason}. Maps are not serialised here.
    nlohmann::json to_json() const;
    static Scanpath from_json(const nlohmann::json& j);
};

/// Adapter failure mid-search; carries the steps completed so far.
class SearchError : public std::runtime_error {
public:
    SearchError(const std::string& what, Scanpath partial) : std::runtime_error(what), partial_(std::move(partial)) {}
    const Scanpath& partial() const { return partial_; }

private:
    Scanpath partial_;
};

/// Fuses one detection into every cell its box overlaps, with lambda = raw scores.
void fuse_raw(BeliefGrid& grid, const Detection& det, ImageDims image);
/// Same, with lambda from the sensor model at the detection's distortion level.
void fuse_calibrated(BeliefGrid& grid, const Detection& det, ImageDims image, const SensorModel& sensor);

AttentionMap build_attention_map_base(const BeliefGrid& grid, int k);
/// Calib beliefs already carry calibrated evidence, so the map is their posterior.
AttentionMap build_attention_map_calib(const BeliefGrid& grid, int k);
/// Expected-sensor map: every cell is updated (on a copy) with the score vector a centred
/// glance would produce in expectation, sum_j mean(alpha_{j,1}) * P(j | beta).
AttentionMap build_attention_map_pred(const BeliefGrid& grid, int k, const SensorModel& sensor);

/// Expected centred score vector for one cell's beliefs.
std::vector<double> expected_centred_scores(std::span<const double> beta, const SensorModel& sensor);

/// Cells within Chebyshev distance `radius` of any visited cell.
std::vector<bool> ior_mask(GridDims grid, std::span<const Cell> visited, int radius);

struct Selection {
    Cell cell;
    Point2 pixel;  // cell centre
};

/// Argmax over unmasked cells, ties to the lowest row-major index. nullopt when all are masked.
std::optional<Selection> select_next_fixation(const AttentionMap& map, const std::vector<bool>& mask, ImageDims image);

bool oracle_hit(Point2 fixation, const SearchTask& task, const SearchConfig& config);

/// One full search episode. `sensor` is required for Calib and Pred.
Scanpath run_search(const SearchTask& task, DetectorAdapter& adapter, const SensorModel* sensor,
                    const ClassCatalog& catalog, const SearchConfig& config);

/// Conditional-evaluation replay: senses along a forced fixation history and returns the map
/// produced after each of history[0..n-2], i.e. the map that predicts history[i+1]. At most
/// config.max_fixations - 1 maps are produced.
std::vector<AttentionMap> replay_history(const SearchTask& task, std::span<const Point2> history,
                                         DetectorAdapter& adapter, const SensorModel* sensor,
                                         const ClassCatalog& catalog, const SearchConfig& config);

}  // namespace semba
