#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "semba/fovea.hpp"
#include "semba/types.hpp"

namespace semba {

/// One detector output: box, full K-class score simplex, and the fixation it was sensed from.
struct Detection {
    BBox bbox;
    std::vector<double> scores;
    Point2 source_fixation;
    int distance_level = 0;          // 0 until assign_distance_level runs
    std::optional<int> true_class;   // ground truth, present in calibration logs only
};

/// Expands a sparse {class -> score} map to a full simplex vector: unlisted classes share the
/// residual mass 1 - sum(listed) uniformly, then the vector is renormalised.
std::vector<double> complete_scores(const std::map<int, double>& partial, int class_count);

/// Every cell whose rectangle (uniform tiling of the image) overlaps the box with positive area.
std::vector<Cell> overlapped_cells(const BBox& bbox, GridDims grid, ImageDims image);

/// Sets d from the Mahalanobis distance between the box centre and the focal point.
Detection assign_distance_level(Detection det, const FocalFrame& frame, const FoveaConfig& config);

/// What the search loop hands a detector at each fixation.
struct FixationQuery {
    std::string image_id;
    std::filesystem::path image_path;
    ImageDims dims;
    Point2 focal_point;
    Cell cell;
    double eta = 0.156;
};

class DetectorAdapter {
public:
    virtual ~DetectorAdapter() = default;
    /// Boxes in the result lie within the image.
    virtual std::vector<Detection> detect(const FixationQuery& query) = 0;
};

/// One JSON-lines record of a detection log.
struct DetectionRecord {
    std::string image_id;
    Cell fixation_cell;
    std::optional<Point2> focal_point;
    std::optional<ImageDims> image_dims;
    std::vector<Detection> detections;
};

nlohmann::json detection_to_json(const Detection& det);
/// Parses {bbox:[x0,y0,x1,y1], scores:{class_index:score}, true_class?}. Throws FormatError
/// naming the offending field.
Detection detection_from_json(const nlohmann::json& j, int class_count);

std::string record_to_line(const DetectionRecord& record);
DetectionRecord parse_record_line(std::string_view line, int class_count, std::size_t line_number = 0);

void write_detection_log(const std::filesystem::path& path, std::span<const DetectionRecord> records);
std::vector<DetectionRecord> read_detection_log(const std::filesystem::path& path, int class_count);

/// Streams a log without holding it in memory. Blank lines are skipped.
void for_each_detection_record(const std::filesystem::path& path, int class_count,
                               const std::function<void(const DetectionRecord&)>& visit);

/// Answers detect() by exact lookup on (image_id, fixation cell). Records sharing a key are
/// concatenated in file order, which is also the fusion order. Immutable after construction.
class ReplayDetector final : public DetectorAdapter {
public:
    explicit ReplayDetector(std::vector<DetectionRecord> records);
    std::vector<Detection> detect(const FixationQuery& query) override;
    std::size_t key_count() const { return table_.size(); }

private:
    std::map<std::pair<std::string, Cell>, std::vector<Detection>> table_;
};

std::unique_ptr<ReplayDetector> load_detection_log(const std::filesystem::path& path, int class_count);

}  // namespace semba
