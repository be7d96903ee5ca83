#include "semba/detections.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace semba {

std::vector<double> complete_scores(const std::map<int, double>& partial, int class_count) {
    if (class_count < 2) throw std::invalid_argument("class count must be at least 2");
    std::vector<double> full(static_cast<std::size_t>(class_count), 0.0);
    double listed = 0.0;
    for (const auto& [k, s] : partial) {
        if (k < 0 || k >= class_count) throw std::invalid_argument("score class index out of range: " + std::to_string(k));
        if (!std::isfinite(s) || s < 0.0 || s > 1.0) throw std::invalid_argument("score outside [0,1] for class " + std::to_string(k));
        full[k] = s;
        listed += s;
    }
    const int unlisted = class_count - static_cast<int>(partial.size());
    if (unlisted > 0) {
        const double share = std::max(0.0, 1.0 - listed) / unlisted;
        for (int k = 0; k < class_count; ++k) {
            if (!partial.contains(k)) full[k] = share;
        }
    }
    double total = 0.0;
    for (double s : full) total += s;
    if (!(total > 0.0)) throw std::invalid_argument("score vector has no mass");
    for (double& s : full) s /= total;
    return full;
}

std::vector<Cell> overlapped_cells(const BBox& bbox, GridDims grid, ImageDims image) {
    std::vector<Cell> cells;
    if (!bbox.valid()) return cells;
    // Cell c spans [c*W/X, (c+1)*W/X); overlap is positive iff x_min*X/W < c+1 and x_max*X/W > c.
    const double u0 = bbox.x_min * grid.cols / image.width;
    const double u1 = bbox.x_max * grid.cols / image.width;
    const double v0 = bbox.y_min * grid.rows / image.height;
    const double v1 = bbox.y_max * grid.rows / image.height;
    const int c_lo = std::max(0, static_cast<int>(std::floor(u0)));
    const int c_hi = std::min(grid.cols - 1, static_cast<int>(std::ceil(u1)) - 1);
    const int r_lo = std::max(0, static_cast<int>(std::floor(v0)));
    const int r_hi = std::min(grid.rows - 1, static_cast<int>(std::ceil(v1)) - 1);
    for (int r = r_lo; r <= r_hi; ++r) {
        for (int c = c_lo; c <= c_hi; ++c) cells.push_back({r, c});
    }
    return cells;
}

Detection assign_distance_level(Detection det, const FocalFrame& frame, const FoveaConfig& config) {
    det.distance_level = distortion_level(det.bbox.center(), frame, config);
    return det;
}

nlohmann::json detection_to_json(const Detection& det) {
    nlohmann::json scores = nlohmann::json::object();
    for (std::size_t k = 0; k < det.scores.size(); ++k) scores[std::to_string(k)] = det.scores[k];
    nlohmann::json j = {{"bbox", {det.bbox.x_min, det.bbox.y_min, det.bbox.x_max, det.bbox.y_max}}, {"scores", scores}};
    if (det.true_class) j["true_class"] = *det.true_class;
    return j;
}

Detection detection_from_json(const nlohmann::json& j, int class_count) {
    Detection det;
    if (!j.is_object()) throw FormatError("detection must be an object");
    if (!j.contains("bbox")) throw FormatError("field 'bbox': missing");
    const auto& box = j["bbox"];
    if (!box.is_array() || box.size() != 4 || !std::all_of(box.begin(), box.end(), [](const auto& v) { return v.is_number(); })) {
        throw FormatError("field 'bbox': expected [x0,y0,x1,y1]");
    }
    det.bbox = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
    if (!det.bbox.valid()) throw FormatError("field 'bbox': requires x0 < x1 and y0 < y1");
    if (!j.contains("scores") || !j["scores"].is_object()) throw FormatError("field 'scores': expected {class_index: score}");
    std::map<int, double> partial;
    for (const auto& [key, value] : j["scores"].items()) {
        std::size_t used = 0;
        int k = -1;
        try {
            k = std::stoi(key, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != key.size()) throw FormatError("field 'scores': class index '" + key + "' is not an integer");
        if (!value.is_number()) throw FormatError("field 'scores': score for class " + key + " is not a number");
        partial[k] = value.get<double>();
    }
    try {
        det.scores = complete_scores(partial, class_count);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("field 'scores': ") + e.what());
    }
    if (j.contains("true_class")) {
        if (!j["true_class"].is_number_integer()) throw FormatError("field 'true_class': expected integer");
        det.true_class = j["true_class"].get<int>();
        if (*det.true_class < 0 || *det.true_class >= class_count) throw FormatError("field 'true_class': out of range");
    }
    return det;
}

std::string record_to_line(const DetectionRecord& record) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : record.detections) dets.push_back(detection_to_json(d));
    nlohmann::json j = {{"image_id", record.image_id},
                        {"fixation_cell", {record.fixation_cell.row, record.fixation_cell.col}},
                        {"detections", std::move(dets)}};
    if (record.focal_point) j["focal_point"] = {record.focal_point->x, record.focal_point->y};
    if (record.image_dims) j["image_dims"] = {record.image_dims->width, record.image_dims->height};
    return j.dump();
}

DetectionRecord parse_record_line(std::string_view line, int class_count, std::size_t line_number) {
    const std::string where = "detection log line " + std::to_string(line_number) + ": ";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + "invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw FormatError(where + "record must be an object");
    DetectionRecord rec;
    if (!j.contains("image_id") || !j["image_id"].is_string()) throw FormatError(where + "field 'image_id': expected string");
    rec.image_id = j["image_id"].get<std::string>();
    const auto cell = j.value("fixation_cell", nlohmann::json());
    if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number_integer() || !cell[1].is_number_integer()) {
        throw FormatError(where + "field 'fixation_cell': expected [row, col]");
    }
    rec.fixation_cell = {cell[0].get<int>(), cell[1].get<int>()};
    if (j.contains("focal_point")) {
        const auto& fp = j["focal_point"];
        if (!fp.is_array() || fp.size() != 2 || !fp[0].is_number() || !fp[1].is_number()) {
            throw FormatError(where + "field 'focal_point': expected [x, y]");
        }
        rec.focal_point = Point2{fp[0].get<double>(), fp[1].get<double>()};
    }
    if (j.contains("image_dims")) {
        const auto& dims = j["image_dims"];
        if (!dims.is_array() || dims.size() != 2 || !dims[0].is_number_integer() || !dims[1].is_number_integer()) {
            throw FormatError(where + "field 'image_dims': expected [width, height]");
        }
        rec.image_dims = ImageDims{dims[0].get<int>(), dims[1].get<int>()};
    }
    if (!j.contains("detections") || !j["detections"].is_array()) throw FormatError(where + "field 'detections': expected array");
    std::size_t idx = 0;
    for (const auto& d : j["detections"]) {
        try {
            rec.detections.push_back(detection_from_json(d, class_count));
        } catch (const FormatError& e) {
            throw FormatError(where + "detections[" + std::to_string(idx) + "]: " + e.what());
        }
        if (rec.focal_point) rec.detections.back().source_fixation = *rec.focal_point;
        ++idx;
    }
    return rec;
}

void write_detection_log(const std::filesystem::path& path, std::span<const DetectionRecord> records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write detection log " + path.string());
    for (const auto& r : records) out << record_to_line(r) << '\n';
    if (!out) throw std::runtime_error("failed writing detection log " + path.string());
}

void for_each_detection_record(const std::filesystem::path& path, int class_count,
                               const std::function<void(const DetectionRecord&)>& visit) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open detection log " + path.string());
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        visit(parse_record_line(line, class_count, line_number));
    }
}

std::vector<DetectionRecord> read_detection_log(const std::filesystem::path& path, int class_count) {
    std::vector<DetectionRecord> records;
    for_each_detection_record(path, class_count, [&](const DetectionRecord& r) { records.push_back(r); });
    return records;
}

ReplayDetector::ReplayDetector(std::vector<DetectionRecord> records) {
    for (auto& r : records) {
        auto& slot = table_[{r.image_id, r.fixation_cell}];
        for (auto& d : r.detections) slot.push_back(std::move(d));
    }
}

std::vector<Detection> ReplayDetector::detect(const FixationQuery& query) {
    auto it = table_.find({query.image_id, query.cell});
    if (it == table_.end()) return {};
    std::vector<Detection> out;
    out.reserve(it->second.size());
    for (Detection d : it->second) {
        d.bbox = d.bbox.clipped(query.dims);
        if (!d.bbox.valid()) continue;
        d.source_fixation = query.focal_point;
        d.distance_level = 0;
        out.push_back(std::move(d));
    }
    return out;
}

std::unique_ptr<ReplayDetector> load_detection_log(const std::filesystem::path& path, int class_count) {
    return std::make_unique<ReplayDetector>(read_detection_log(path, class_count));
}

}  // namespace semba
