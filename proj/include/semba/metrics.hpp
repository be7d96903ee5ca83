#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "semba/attention_map.hpp"
#include "semba/belief.hpp"
#include "semba/search.hpp"
#include "semba/types.hpp"

namespace semba {

using Symbols = std::vector<std::string>;

/// Maps any fixation pixel to a cluster symbol. Grid mode labels by cell ("r_c"); mean-shift
/// mode labels by the nearest mode ("m0", "m1", ... in (x, y) order of the modes).
class ClusterAssignment {
public:
    static ClusterAssignment grid(GridDims grid, ImageDims image);
    static ClusterAssignment mean_shift(std::span<const Point2> corpus, ImageDims image, double bandwidth = 60.0,
                                        GridDims fallback = {});

    bool is_grid() const { return modes_.empty(); }
    const std::vector<Point2>& modes() const { return modes_; }
    std::string label(Point2 p) const;
    Symbols labels(std::span<const Point2> path) const;

private:
    GridDims grid_;
    ImageDims image_;
    std::vector<Point2> modes_;
};

/// Empty corpus falls back to the grid tiling.
ClusterAssignment cluster_fixations(std::span<const Point2> corpus, ImageDims image, GridDims grid = {},
                                    double bandwidth = 60.0);

/// Object-category label of a fixation from ground-truth boxes; the smallest containing box wins
/// (first listed on equal area), otherwise "background".
class SemanticLabeling {
public:
    struct Region {
        std::string label;
        BBox bbox;
    };
    explicit SemanticLabeling(std::vector<Region> regions) : regions_(std::move(regions)) {}

    std::string label(Point2 p) const;
    Symbols labels(std::span<const Point2> path) const;

private:
    std::vector<Region> regions_;
};

/// Needleman-Wunsch (match 1, mismatch -1, gap -1) score clipped at 0 and divided by the
/// longer length. Two empty strings score 1, one empty string scores 0.
double sequence_score(std::span<const std::string> a, std::span<const std::string> b);
/// Raw global alignment score.
int needleman_wunsch(std::span<const std::string> a, std::span<const std::string> b);
/// Unit-cost Levenshtein distance.
int fixation_edit_distance(std::span<const std::string> a, std::span<const std::string> b);

inline double semantic_sequence_score(std::span<const std::string> a, std::span<const std::string> b) {
    return sequence_score(a, b);
}
inline int semantic_fed(std::span<const std::string> a, std::span<const std::string> b) {
    return fixation_edit_distance(a, b);
}

/// |f0 -> box centre| / sum |f_i -> f_i+1|; nullopt for fewer than two fixations or no travel.
std::optional<double> scanpath_ratio(std::span<const Point2> fixations, const BBox& target_box);

/// Map value at `cell` standardised by the map's mean and population std. Throws
/// std::domain_error on a constant map.
double cnss(const AttentionMap& map, Cell cell);

/// Grid probability map from a training-fixation corpus. Sums to 1.
struct BaselineDensity {
    GridDims dims;
    std::vector<double> values;
    double sigma_px = 0.0;

    double at(Cell c) const { return values.at(dims.index(c)); }
    nlohmann::json to_json() const;
    static BaselineDensity from_json(const nlohmann::json& j);
};

/// Each fixation contributes a Gaussian of std `sigma_px` integrated exactly over every cell.
/// Mass that would fall outside the image is reflected back at the borders, so a uniform
/// corpus yields a flat density (no edge fall-off).
BaselineDensity build_baseline_density(std::span<const Point2> fixations, ImageDims image, GridDims grid,
                                       double sigma_px);

BaselineDensity load_baseline_density(const std::filesystem::path& path);

constexpr double kInfoGainEps = 2.2e-16;

/// log2(p_map(cell) + eps) - log2(p_base(cell) + eps), p_map = map normalised to unit sum.
/// The map must be non-negative with positive sum.
double cig(const AttentionMap& map, Cell cell, const BaselineDensity& baseline);

/// Area under the ROC of the single positive cell against all other cells over every distinct
/// threshold; ties count one half.
double cauc(const AttentionMap& map, Cell cell);

/// One human scanpath: {image_id, subject, target, fixations:[[x,y],...]}. `target` may be a
/// class index or a class name when a catalog is supplied.
struct HumanScanpath {
    std::string image_id;
    std::string subject;
    int target_class = 0;
    std::vector<Point2> fixations;
};

std::vector<HumanScanpath> read_human_scanpaths(const std::filesystem::path& path,
                                                const ClassCatalog* catalog = nullptr);
nlohmann::json human_scanpaths_to_json(std::span<const HumanScanpath> paths);

/// Per-image ground truth the scanpath metrics need.
struct ImageContext {
    ImageDims dims;
    std::vector<SemanticLabeling::Region> regions;  // labelled object boxes
    std::vector<BBox> target_boxes;                 // SR uses the first one
};

struct MetricValue {
    double mean = 0.0;
    std::size_t count = 0;
    bool defined() const { return count > 0; }
};

struct MetricReport {
    std::string name;
    MetricValue ss, fed, semss, semfed, sr, cnss, cig, cauc;
    std::size_t images = 0;
    std::size_t pairs = 0;
    std::size_t conditional_skipped = 0;  // constant maps where cNSS is undefined
    std::vector<std::string> warnings;    // subject / image mismatches

    nlohmann::json to_json() const;
};

struct EvaluationOptions {
    GridDims grid{20, 32};
    /// Empty human corpus for an image, or use_mean_shift=false, selects grid clusters.
    bool use_mean_shift = false;
    double bandwidth = 60.0;
    bool conditional = true;
    const BaselineDensity* baseline = nullptr;  // cIG is skipped when null
};

/// Maps predicting each next fixation of a human scanpath, given its history.
using ReplayFn = std::function<std::vector<AttentionMap>(const HumanScanpath&)>;

/// SS/FED/SemSS/SemFED are averaged over (predicted, human) pairs within an image, then over
/// images. SR uses successful predictions only. Conditional metrics are averaged over every
/// next fixation of every human scanpath. `replay` may be empty when conditional is false.
MetricReport evaluate_run(std::span<const Scanpath> predicted, std::span<const HumanScanpath> humans,
                          const std::map<std::string, ImageContext>& contexts, const EvaluationOptions& options,
                          const ReplayFn& replay = {});

/// Leave-one-subject-out agreement among the human scanpaths of each image.
MetricReport human_consistency(std::span<const HumanScanpath> humans,
                               const std::map<std::string, ImageContext>& contexts,
                               const EvaluationOptions& options);

/// Reference rows keyed by model name, metric name -> value (absent = not reported).
using PublishedReference = std::map<std::string, std::map<std::string, double>>;
PublishedReference load_published_reference(const std::filesystem::path& path);

/// Aligned plain-text table: scanpath block, then next-fixation block. Each row is followed by a
/// "(published)" row when the reference has an entry with the same name.
std::string format_report_table(std::span<const MetricReport> rows, const PublishedReference* reference = nullptr);

}  // namespace semba
