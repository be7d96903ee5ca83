#include "semba/search.hpp"

#include <algorithm>
#include <random>

namespace semba {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Base: return "Base";
        case Variant::Calib: return "Calib";
        case Variant::Pred: return "Pred";
        case Variant::Random: return "Random";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "base") return Variant::Base;
    if (lower == "calib") return Variant::Calib;
    if (lower == "pred") return Variant::Pred;
    if (lower == "random") return Variant::Random;
    throw std::invalid_argument("unknown variant '" + name + "' (expected Base, Calib, Pred or Random)");
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::TargetFound: return "target_found";
        case Termination::Truncated: return "truncated";
        case Termination::MapExhausted: return "map_exhausted";
    }
    return "?";
}

Termination parse_termination(const std::string& name) {
    if (name == "target_found") return Termination::TargetFound;
    if (name == "truncated") return Termination::Truncated;
    if (name == "map_exhausted") return Termination::MapExhausted;
    throw FormatError("unknown termination_reason '" + name + "'");
}

void SearchConfig::validate() const {
    if (max_fixations < 1) throw std::invalid_argument("max_fixations must be at least 1");
    if (ior_radius < 0) throw std::invalid_argument("ior_radius must be non-negative");
    if (grid.rows < 1 || grid.cols < 1) throw std::invalid_argument("grid dims must be at least 1x1");
    fovea.validate();
}

std::vector<Point2> Scanpath::fixations() const {
    std::vector<Point2> out;
    for (const auto& s : steps) out.push_back(s.fixation);
    return out;
}

std::vector<Cell> Scanpath::cells() const {
    std::vector<Cell> out;
    for (const auto& s : steps) out.push_back(s.cell);
    return out;
}

nlohmann::json Scanpath::to_json() const {
    nlohmann::json fix = nlohmann::json::array();
    nlohmann::json cells = nlohmann::json::array();
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& s : steps) {
        fix.push_back({s.fixation.x, s.fixation.y});
        cells.push_back({s.cell.row, s.cell.col});
        dets.push_back(s.detections);
    }
    return {{"image_id", image_id},
            {"target", target_class},
            {"variant", variant},
            {"fixations", std::move(fix)},
            {"cells", std::move(cells)},
            {"detections", std::move(dets)},
            {"termination_reason", to_string(termination)}};
}

Scanpath Scanpath::from_json(const nlohmann::json& j) {
    try {
        Scanpath p;
        p.image_id = j.at("image_id").get<std::string>();
        p.target_class = j.at("target").get<int>();
        p.variant = j.value("variant", std::string());
        p.termination = parse_termination(j.at("termination_reason").get<std::string>());
        const auto& fix = j.at("fixations");
        const auto& cells = j.at("cells");
        if (fix.size() != cells.size()) throw FormatError("scanpath fixations and cells differ in length");
        for (std::size_t i = 0; i < fix.size(); ++i) {
            SearchStep s;
            s.fixation = {fix[i].at(0).get<double>(), fix[i].at(1).get<double>()};
            s.cell = {cells[i].at(0).get<int>(), cells[i].at(1).get<int>()};
            if (j.contains("detections")) s.detections = j["detections"].at(i).get<std::size_t>();
            p.steps.push_back(std::move(s));
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("scanpath: ") + e.what());
    }
}

void fuse_raw(BeliefGrid& grid, const Detection& det, ImageDims image) {
    const LikelihoodVector lambda(det.scores);
    for (const Cell& c : overlapped_cells(det.bbox, grid.dims(), image)) grid.update(c, lambda);
}

void fuse_calibrated(BeliefGrid& grid, const Detection& det, ImageDims image, const SensorModel& sensor) {
    if (det.distance_level < 1) throw std::invalid_argument("detection has no distortion level assigned");
    const LikelihoodVector lambda(sensor.calibrated_likelihoods(det.scores, det.distance_level));
    for (const Cell& c : overlapped_cells(det.bbox, grid.dims(), image)) grid.update(c, lambda);
}

AttentionMap build_attention_map_base(const BeliefGrid& grid, int k) {
    AttentionMap m = posterior_map(grid, k);
    m.variant = "Base";
    return m;
}

AttentionMap build_attention_map_calib(const BeliefGrid& grid, int k) {
    AttentionMap m = posterior_map(grid, k);
    m.variant = "Calib";
    return m;
}

std::vector<double> expected_centred_scores(std::span<const double> beta, const SensorModel& sensor) {
    const int K = sensor.class_count();
    if (static_cast<int>(beta.size()) != K) throw std::invalid_argument("belief and sensor class counts differ");
    double total = 0.0;
    for (double b : beta) total += b;
    std::vector<double> expected(static_cast<std::size_t>(K), 0.0);
    for (int j = 0; j < K; ++j) {
        const auto mu = sensor.centred_mean(j);
        const double w = beta[j] / total;
        for (int i = 0; i < K; ++i) expected[i] += w * mu[i];
    }
    return expected;
}

AttentionMap build_attention_map_pred(const BeliefGrid& grid, int k, const SensorModel& sensor) {
    if (!grid.catalog().is_known(k)) throw std::invalid_argument("target class is not a known class");
    if (sensor.class_count() != grid.class_count()) throw std::invalid_argument("sensor model has the wrong class count");
    const int K = grid.class_count();
    std::vector<std::vector<double>> means;
    for (int j = 0; j < K; ++j) means.push_back(sensor.centred_mean(j));
    AttentionMap m(grid.dims());
    m.variant = "Pred";
    std::vector<double> clone(static_cast<std::size_t>(K));
    std::vector<double> expected(static_cast<std::size_t>(K));
    for (std::size_t idx = 0; idx < grid.dims().cell_count(); ++idx) {
        const auto beta = grid.cell(grid.dims().cell_at(idx));
        double total = 0.0;
        for (double b : beta) total += b;
        std::fill(expected.begin(), expected.end(), 0.0);
        for (int j = 0; j < K; ++j) {
            const double w = beta[j] / total;
            for (int i = 0; i < K; ++i) expected[i] += w * means[j][i];
        }
        std::copy(beta.begin(), beta.end(), clone.begin());
        kaplan_update(clone, expected, grid.max_pseudo_count());
        m.values[idx] = class_posterior(clone, k);
    }
    return m;
}

std::vector<bool> ior_mask(GridDims grid, std::span<const Cell> visited, int radius) {
    std::vector<bool> mask(grid.cell_count(), false);
    for (const Cell& v : visited) {
        for (int r = std::max(0, v.row - radius); r <= std::min(grid.rows - 1, v.row + radius); ++r) {
            for (int c = std::max(0, v.col - radius); c <= std::min(grid.cols - 1, v.col + radius); ++c) {
                mask[grid.index({r, c})] = true;
            }
        }
    }
    return mask;
}

std::optional<Selection> select_next_fixation(const AttentionMap& map, const std::vector<bool>& mask, ImageDims image) {
    if (mask.size() != map.values.size()) throw std::invalid_argument("IOR mask does not match the map");
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        if (mask[i]) continue;
        if (!best || map.values[i] > map.values[*best]) best = i;
    }
    if (!best) return std::nullopt;
    const Cell c = map.dims.cell_at(*best);
    return Selection{c, cell_center(c, map.dims, image)};
}

bool oracle_hit(Point2 fixation, const SearchTask& task, const SearchConfig& config) {
    if (config.oracle_rule == OracleRule::PixelInBox) {
        return std::any_of(task.target_boxes.begin(), task.target_boxes.end(),
                           [&](const BBox& b) { return b.contains(fixation); });
    }
    const Cell c = cell_of(fixation, config.grid, task.dims);
    return std::any_of(task.target_boxes.begin(), task.target_boxes.end(), [&](const BBox& b) {
        const auto cells = overlapped_cells(b, config.grid, task.dims);
        return std::find(cells.begin(), cells.end(), c) != cells.end();
    });
}

namespace {

void check_inputs(const SearchTask& task, const SensorModel* sensor, const ClassCatalog& catalog,
                  const SearchConfig& config) {
    config.validate();
    if (task.dims.width < 1 || task.dims.height < 1) throw std::invalid_argument("task image dims must be positive");
    if (!catalog.is_known(task.target_class)) throw std::invalid_argument("target class is not a known class");
    if (config.variant == Variant::Calib || config.variant == Variant::Pred) {
        if (sensor == nullptr) throw std::invalid_argument(to_string(config.variant) + " needs a sensor model");
        if (sensor->class_count() != catalog.size()) throw std::invalid_argument("sensor model has the wrong class count");
        if (config.variant == Variant::Calib && sensor->distortion_levels() != config.fovea.distortion_levels) {
            throw std::invalid_argument("sensor model and fovea disagree on the number of distortion levels");
        }
    }
}

/// Belief state of one episode, shared by the live loop and the replay.
class Session {
public:
    Session(const SearchTask& task, DetectorAdapter& adapter, const SensorModel* sensor, const ClassCatalog& catalog,
            const SearchConfig& config)
        : task_(task), adapter_(adapter), sensor_(sensor), config_(config), grid_(config.grid, catalog) {}

    std::size_t sense_and_fuse(Point2 f) {
        if (config_.variant == Variant::Random) return 0;
        const FixationQuery query{task_.image_id, task_.image_path, task_.dims, f,
                                  cell_of(f, config_.grid, task_.dims), config_.fovea.eta};
        std::vector<Detection> dets = adapter_.detect(query);
        const FocalFrame frame(f, task_.dims, config_.fovea.eta);
        for (Detection& d : dets) {
            d = assign_distance_level(std::move(d), frame, config_.fovea);
            if (config_.variant == Variant::Calib) {
                fuse_calibrated(grid_, d, task_.dims, *sensor_);
            } else {
                fuse_raw(grid_, d, task_.dims);
            }
        }
        return dets.size();
    }

    AttentionMap map(int fixation_index) const {
        AttentionMap m;
        switch (config_.variant) {
            case Variant::Base: m = build_attention_map_base(grid_, task_.target_class); break;
            case Variant::Calib: m = build_attention_map_calib(grid_, task_.target_class); break;
            case Variant::Pred: m = build_attention_map_pred(grid_, task_.target_class, *sensor_); break;
            case Variant::Random:
                m = AttentionMap(config_.grid, 1.0 / grid_.class_count());
                m.variant = "Random";
                break;
        }
        m.fixation_index = fixation_index;
        return m;
    }

private:
    const SearchTask& task_;
    DetectorAdapter& adapter_;
    const SensorModel* sensor_;
    const SearchConfig& config_;
    BeliefGrid grid_;
};

}  // namespace

Scanpath run_search(const SearchTask& task, DetectorAdapter& adapter, const SensorModel* sensor,
                    const ClassCatalog& catalog, const SearchConfig& config) {
    check_inputs(task, sensor, catalog, config);
    Session session(task, adapter, sensor, catalog, config);
    Rng rng(config.random_seed);

    Scanpath path;
    path.image_id = task.image_id;
    path.target_class = task.target_class;
    path.variant = to_string(config.variant);

    Point2 f = config.initial_fixation.value_or(Point2{0.5 * task.dims.width, 0.5 * task.dims.height});
    if (f.x < 0 || f.y < 0 || f.x > task.dims.width || f.y > task.dims.height) {
        throw std::invalid_argument("initial fixation lies outside the image");
    }
    std::vector<Cell> visited;
    while (true) {
        SearchStep step;
        step.fixation = f;
        step.cell = cell_of(f, config.grid, task.dims);
        visited.push_back(step.cell);
        if (config.oracle && oracle_hit(f, task, config)) {
            path.steps.push_back(std::move(step));
            path.termination = Termination::TargetFound;
            break;
        }
        if (static_cast<int>(visited.size()) >= config.max_fixations) {
            path.steps.push_back(std::move(step));
            path.termination = Termination::Truncated;
            break;
        }
        try {
            step.detections = session.sense_and_fuse(f);
        } catch (const std::exception& e) {
            path.steps.push_back(std::move(step));
            throw SearchError(std::string("detector failed at fixation ") + std::to_string(path.steps.size() - 1) + ": " +
                                  e.what(),
                              std::move(path));
        }
        const AttentionMap map = session.map(static_cast<int>(visited.size()) - 1);
        const auto mask = ior_mask(config.grid, visited, config.ior_radius);
        std::optional<Selection> next;
        if (config.variant == Variant::Random) {
            std::vector<std::size_t> open;
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (!mask[i]) open.push_back(i);
            }
            if (!open.empty()) {
                const std::size_t pick = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
                const Cell c = config.grid.cell_at(pick);
                next = Selection{c, cell_center(c, config.grid, task.dims)};
            }
        } else {
            next = select_next_fixation(map, mask, task.dims);
        }
        if (config.record_maps) step.map = map;
        path.steps.push_back(std::move(step));
        if (!next) {
            path.termination = Termination::MapExhausted;
            break;
        }
        f = next->pixel;
    }
    return path;
}

std::vector<AttentionMap> replay_history(const SearchTask& task, std::span<const Point2> history,
                                         DetectorAdapter& adapter, const SensorModel* sensor,
                                         const ClassCatalog& catalog, const SearchConfig& config) {
    check_inputs(task, sensor, catalog, config);
    Session session(task, adapter, sensor, catalog, config);
    std::vector<AttentionMap> maps;
    const std::size_t limit = std::min<std::size_t>(history.empty() ? 0 : history.size() - 1,
                                                    static_cast<std::size_t>(config.max_fixations - 1));
    for (std::size_t i = 0; i < limit; ++i) {
        session.sense_and_fuse(history[i]);
        maps.push_back(session.map(static_cast<int>(i)));
    }
    return maps;
}

}  // namespace semba
