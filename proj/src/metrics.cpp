#include "semba/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace semba {

ClusterAssignment ClusterAssignment::grid(GridDims grid, ImageDims image) {
    if (grid.rows < 1 || grid.cols < 1) throw std::invalid_argument("cluster grid must be at least 1x1");
    ClusterAssignment a;
    a.grid_ = grid;
    a.image_ = image;
    return a;
}

ClusterAssignment ClusterAssignment::mean_shift(std::span<const Point2> corpus, ImageDims image, double bandwidth,
                                                GridDims fallback) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("mean-shift bandwidth must be positive");
    ClusterAssignment a = grid(fallback, image);
    if (corpus.empty()) return a;
    const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    std::vector<Point2> modes;
    for (const Point2& start : corpus) {
        Point2 x = start;
        for (int it = 0; it < 500; ++it) {
            double wx = 0.0, wy = 0.0, wsum = 0.0;
            for (const Point2& p : corpus) {
                const double dx = p.x - x.x, dy = p.y - x.y;
                const double w = std::exp(-(dx * dx + dy * dy) * inv2h2);
                wx += w * p.x;
                wy += w * p.y;
                wsum += w;
            }
            const Point2 next{wx / wsum, wy / wsum};
            const double shift = std::hypot(next.x - x.x, next.y - x.y);
            x = next;
            if (shift < 1e-4 * bandwidth) break;
        }
        const bool known = std::any_of(modes.begin(), modes.end(), [&](const Point2& m) {
            return std::hypot(m.x - x.x, m.y - x.y) < 0.5 * bandwidth;
        });
        if (!known) modes.push_back(x);
    }
    std::sort(modes.begin(), modes.end(), [](const Point2& l, const Point2& r) {
        return l.x != r.x ? l.x < r.x : l.y < r.y;
    });
    a.modes_ = std::move(modes);
    return a;
}

std::string ClusterAssignment::label(Point2 p) const {
    if (modes_.empty()) {
        const Cell c = cell_of(p, grid_, image_);
        return std::to_string(c.row) + "_" + std::to_string(c.col);
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < modes_.size(); ++i) {
        const double d = std::hypot(modes_[i].x - p.x, modes_[i].y - p.y);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return "m" + std::to_string(best);
}

Symbols ClusterAssignment::labels(std::span<const Point2> path) const {
    Symbols out;
    for (const Point2& p : path) out.push_back(label(p));
    return out;
}

ClusterAssignment cluster_fixations(std::span<const Point2> corpus, ImageDims image, GridDims grid, double bandwidth) {
    if (corpus.empty()) return ClusterAssignment::grid(grid, image);
    return ClusterAssignment::mean_shift(corpus, image, bandwidth, grid);
}

std::string SemanticLabeling::label(Point2 p) const {
    const Region* best = nullptr;
    for (const Region& r : regions_) {
        if (!r.bbox.contains(p)) continue;
        if (best == nullptr || r.bbox.area() < best->bbox.area()) best = &r;
    }
    return best ? best->label : "background";
}

Symbols SemanticLabeling::labels(std::span<const Point2> path) const {
    Symbols out;
    for (const Point2& p : path) out.push_back(label(p));
    return out;
}

int needleman_wunsch(std::span<const std::string> a, std::span<const std::string> b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = -static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = -static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int diag = prev[j - 1] + (a[i - 1] == b[j - 1] ? 1 : -1);
            cur[j] = std::max({diag, prev[j] - 1, cur[j - 1] - 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double sequence_score(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() || b.empty()) return 0.0;
    const int nw = needleman_wunsch(a, b);
    return std::max(0, nw) / static_cast<double>(std::max(a.size(), b.size()));
}

int fixation_edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::optional<double> scanpath_ratio(std::span<const Point2> fixations, const BBox& target_box) {
    if (fixations.size() < 2) return std::nullopt;
    double travelled = 0.0;
    for (std::size_t i = 0; i + 1 < fixations.size(); ++i) {
        travelled += std::hypot(fixations[i + 1].x - fixations[i].x, fixations[i + 1].y - fixations[i].y);
    }
    if (!(travelled > 0.0)) return std::nullopt;
    const Point2 c = target_box.center();
    return std::hypot(c.x - fixations[0].x, c.y - fixations[0].y) / travelled;
}

double cnss(const AttentionMap& map, Cell cell) {
    const auto& v = map.values;
    if (v.empty()) throw std::invalid_argument("empty map");
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= v.size();
    const double sd = std::sqrt(var);
    if (!(sd > 0.0) || sd < 1e-15 * std::max(1.0, std::abs(mean))) {
        throw std::domain_error("cNSS undefined: map has zero variance");
    }
    return (map.at(cell) - mean) / sd;
}

nlohmann::json BaselineDensity::to_json() const {
    return {{"rows", dims.rows}, {"cols", dims.cols}, {"sigma_px", sigma_px}, {"values", values}};
}

BaselineDensity BaselineDensity::from_json(const nlohmann::json& j) {
    try {
        BaselineDensity b;
        b.dims = {j.at("rows").get<int>(), j.at("cols").get<int>()};
        b.sigma_px = j.value("sigma_px", 0.0);
        b.values = j.at("values").get<std::vector<double>>();
        if (b.values.size() != b.dims.cell_count()) throw FormatError("baseline density has the wrong number of values");
        double total = 0.0;
        for (double v : b.values) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw FormatError("baseline density values must be finite and >= 0");
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) throw FormatError("baseline density does not sum to 1");
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("baseline density: ") + e.what());
    }
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Mass of N(f, sigma^2), reflected at 0 and `extent`, inside each of `n` equal bins.
void reflected_bin_mass(double f, double sigma, double extent, int n, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(n), 0.0);
    const double centres[3] = {f, -f, 2.0 * extent - f};
    for (int i = 0; i < n; ++i) {
        const double lo = extent * i / n;
        const double hi = extent * (i + 1) / n;
        for (double c : centres) out[i] += normal_cdf((hi - c) / sigma) - normal_cdf((lo - c) / sigma);
    }
}

}  // namespace

BaselineDensity build_baseline_density(std::span<const Point2> fixations, ImageDims image, GridDims grid,
                                       double sigma_px) {
    if (!(sigma_px > 0.0)) throw std::invalid_argument("baseline smoothing sigma must be positive");
    if (image.width < 1 || image.height < 1) throw std::invalid_argument("image dims must be positive");
    if (grid.rows < 1 || grid.cols < 1) throw std::invalid_argument("grid dims must be at least 1x1");
    if (fixations.empty()) throw std::invalid_argument("baseline density needs at least one fixation");
    BaselineDensity b;
    b.dims = grid;
    b.sigma_px = sigma_px;
    b.values.assign(grid.cell_count(), 0.0);
    std::vector<double> mx, my;
    for (const Point2& p : fixations) {
        reflected_bin_mass(p.x, sigma_px, image.width, grid.cols, mx);
        reflected_bin_mass(p.y, sigma_px, image.height, grid.rows, my);
        for (int r = 0; r < grid.rows; ++r) {
            for (int c = 0; c < grid.cols; ++c) b.values[grid.index({r, c})] += my[r] * mx[c];
        }
    }
    const double total = std::accumulate(b.values.begin(), b.values.end(), 0.0);
    for (double& v : b.values) v /= total;
    return b;
}

BaselineDensity load_baseline_density(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open baseline density " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("baseline density " + path.string() + ": " + e.what());
    }
    return BaselineDensity::from_json(j);
}

double cig(const AttentionMap& map, Cell cell, const BaselineDensity& baseline) {
    if (baseline.dims != map.dims) throw std::invalid_argument("baseline and map grids differ");
    double total = 0.0;
    for (double v : map.values) {
        if (!(v >= 0.0)) throw std::invalid_argument("cIG needs a non-negative map");
        total += v;
    }
    if (!(total > 0.0)) throw std::invalid_argument("cIG needs a map with positive mass");
    // The baseline goes through the same normalisation so a map equal to it scores exactly 0.
    double base_total = 0.0;
    for (double v : baseline.values) base_total += v;
    if (!(base_total > 0.0)) throw std::invalid_argument("cIG needs a baseline with positive mass");
    return std::log2(map.at(cell) / total + kInfoGainEps) - std::log2(baseline.at(cell) / base_total + kInfoGainEps);
}

double cauc(const AttentionMap& map, Cell cell) {
    if (map.values.size() < 2) throw std::invalid_argument("cAUC needs at least two cells");
    const double pos = map.at(cell);
    std::vector<double> neg;
    const std::size_t gt = map.dims.index(cell);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        if (i != gt) neg.push_back(map.values[i]);
    }
    // ROC over thresholds at every distinct value, highest first, integrated by trapezoids.
    std::vector<double> thresholds(neg.begin(), neg.end());
    thresholds.push_back(pos);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    std::sort(neg.begin(), neg.end(), std::greater<>());
    double area = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t above = 0;
    for (double t : thresholds) {
        while (above < neg.size() && neg[above] >= t) ++above;
        const double fpr = static_cast<double>(above) / neg.size();
        const double tpr = pos >= t ? 1.0 : 0.0;
        area += (fpr - prev_fpr) * 0.5 * (tpr + prev_tpr);
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    area += (1.0 - prev_fpr) * 0.5 * (1.0 + prev_tpr);
    return area;
}

std::vector<HumanScanpath> read_human_scanpaths(const std::filesystem::path& path, const ClassCatalog* catalog) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open human scanpaths " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("human scanpaths " + path.string() + ": " + e.what());
    }
    const nlohmann::json& list = j.is_object() ? j.at("scanpaths") : j;
    if (!list.is_array()) throw FormatError("human scanpaths must be an array");
    std::vector<HumanScanpath> out;
    std::size_t idx = 0;
    for (const auto& e : list) {
        const std::string where = "human scanpath " + std::to_string(idx++) + ": ";
        try {
            HumanScanpath h;
            h.image_id = e.at("image_id").get<std::string>();
            const auto& subj = e.at("subject");
            h.subject = subj.is_string() ? subj.get<std::string>() : subj.dump();
            const auto& target = e.at("target");
            if (target.is_number_integer()) {
                h.target_class = target.get<int>();
            } else if (target.is_string() && catalog != nullptr) {
                const auto k = catalog->find(target.get<std::string>());
                if (!k) throw FormatError(where + "unknown target class '" + target.get<std::string>() + "'");
                h.target_class = *k;
            } else {
                throw FormatError(where + "field 'target': expected a class index");
            }
            for (const auto& f : e.at("fixations")) h.fixations.push_back({f.at(0).get<double>(), f.at(1).get<double>()});
            out.push_back(std::move(h));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(where + ex.what());
        }
    }
    return out;
}

nlohmann::json human_scanpaths_to_json(std::span<const HumanScanpath> paths) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& h : paths) {
        nlohmann::json fix = nlohmann::json::array();
        for (const auto& f : h.fixations) fix.push_back({f.x, f.y});
        list.push_back({{"image_id", h.image_id}, {"subject", h.subject}, {"target", h.target_class}, {"fixations", fix}});
    }
    return list;
}

namespace {

struct Accumulator {
    double sum = 0.0;
    std::size_t count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    MetricValue value() const { return {count ? sum / count : 0.0, count}; }
};

struct SequenceAccumulators {
    Accumulator ss, fed, semss, semfed;
};

ClusterAssignment clusters_for(const std::string& image_id, const ImageContext& ctx,
                               std::span<const HumanScanpath> humans, const EvaluationOptions& options) {
    if (!options.use_mean_shift) return ClusterAssignment::grid(options.grid, ctx.dims);
    std::vector<Point2> corpus;
    for (const auto& h : humans) {
        if (h.image_id == image_id) corpus.insert(corpus.end(), h.fixations.begin(), h.fixations.end());
    }
    return cluster_fixations(corpus, ctx.dims, options.grid, options.bandwidth);
}

void add_pair(SequenceAccumulators& acc, std::span<const Point2> a, std::span<const Point2> b,
              const ClusterAssignment& clusters, const SemanticLabeling& semantic) {
    const Symbols ca = clusters.labels(a), cb = clusters.labels(b);
    const Symbols sa = semantic.labels(a), sb = semantic.labels(b);
    acc.ss.add(sequence_score(ca, cb));
    acc.fed.add(fixation_edit_distance(ca, cb));
    acc.semss.add(sequence_score(sa, sb));
    acc.semfed.add(semantic_fed(sa, sb));
}

bool lands_in_target(const HumanScanpath& h, const ImageContext& ctx) {
    if (h.fixations.empty()) return false;
    return std::any_of(ctx.target_boxes.begin(), ctx.target_boxes.end(),
                       [&](const BBox& b) { return b.contains(h.fixations.back()); });
}

}  // namespace

MetricReport evaluate_run(std::span<const Scanpath> predicted, std::span<const HumanScanpath> humans,
                          const std::map<std::string, ImageContext>& contexts, const EvaluationOptions& options,
                          const ReplayFn& replay) {
    MetricReport report;
    std::map<std::string, std::vector<const HumanScanpath*>> by_image;
    for (const auto& h : humans) by_image[h.image_id].push_back(&h);
    std::map<std::string, std::vector<const Scanpath*>> predicted_by_image;
    for (const auto& p : predicted) predicted_by_image[p.image_id].push_back(&p);

    Accumulator ss, fed, semss, semfed, sr, nss, ig, auc;
    for (const auto& [image_id, preds] : predicted_by_image) {
        const auto ctx_it = contexts.find(image_id);
        if (ctx_it == contexts.end()) {
            report.warnings.push_back("image '" + image_id + "': no ground-truth context; predicted scanpaths skipped");
            continue;
        }
        const ImageContext& ctx = ctx_it->second;
        for (const Scanpath* p : preds) {
            if (p->found() && !ctx.target_boxes.empty()) {
                const auto fix = p->fixations();
                if (const auto r = scanpath_ratio(fix, ctx.target_boxes.front())) sr.add(*r);
            }
        }
        const auto h_it = by_image.find(image_id);
        if (h_it == by_image.end()) {
            report.warnings.push_back("image '" + image_id + "': predicted scanpaths have no human scanpaths");
            continue;
        }
        const ClusterAssignment clusters = clusters_for(image_id, ctx, humans, options);
        const SemanticLabeling semantic(ctx.regions);
        SequenceAccumulators image_acc;
        for (const Scanpath* p : preds) {
            const auto fix = p->fixations();
            for (const HumanScanpath* h : h_it->second) {
                if (h->target_class != p->target_class) {
                    report.warnings.push_back("image '" + image_id + "': subject " + h->subject + " searched class " +
                                              std::to_string(h->target_class) + " but the prediction targets " +
                                              std::to_string(p->target_class));
                    continue;
                }
                add_pair(image_acc, fix, h->fixations, clusters, semantic);
                ++report.pairs;
            }
        }
        if (image_acc.ss.count == 0) continue;
        ss.add(image_acc.ss.value().mean);
        fed.add(image_acc.fed.value().mean);
        semss.add(image_acc.semss.value().mean);
        semfed.add(image_acc.semfed.value().mean);
        ++report.images;
    }
    for (const auto& [image_id, hs] : by_image) {
        if (!predicted_by_image.contains(image_id)) {
            report.warnings.push_back("image '" + image_id + "': " + std::to_string(hs.size()) +
                                      " human scanpaths have no prediction");
        }
    }

    if (options.conditional) {
        if (!replay) throw std::invalid_argument("conditional metrics need a replay function");
        for (const HumanScanpath& h : humans) {
            const auto ctx_it = contexts.find(h.image_id);
            if (ctx_it == contexts.end()) continue;
            const auto maps = replay(h);
            for (std::size_t i = 0; i < maps.size() && i + 1 < h.fixations.size(); ++i) {
                const Cell gt = cell_of(h.fixations[i + 1], maps[i].dims, ctx_it->second.dims);
                try {
                    nss.add(cnss(maps[i], gt));
                } catch (const std::domain_error&) {
                    ++report.conditional_skipped;  // cNSS only; cAUC and cIG stay defined
                }
                auc.add(cauc(maps[i], gt));
                if (options.baseline) ig.add(cig(maps[i], gt, *options.baseline));
            }
        }
    }
    report.ss = ss.value();
    report.fed = fed.value();
    report.semss = semss.value();
    report.semfed = semfed.value();
    report.sr = sr.value();
    report.cnss = nss.value();
    report.cig = ig.value();
    report.cauc = auc.value();
    return report;
}

MetricReport human_consistency(std::span<const HumanScanpath> humans,
                               const std::map<std::string, ImageContext>& contexts,
                               const EvaluationOptions& options) {
    MetricReport report;
    report.name = "Human";
    std::map<std::string, std::vector<const HumanScanpath*>> by_image;
    for (const auto& h : humans) by_image[h.image_id].push_back(&h);
    Accumulator ss, fed, semss, semfed, sr;
    for (const auto& [image_id, hs] : by_image) {
        const auto ctx_it = contexts.find(image_id);
        if (ctx_it == contexts.end()) {
            report.warnings.push_back("image '" + image_id + "': no ground-truth context");
            continue;
        }
        const ImageContext& ctx = ctx_it->second;
        for (const HumanScanpath* h : hs) {
            if (lands_in_target(*h, ctx)) {
                if (const auto r = scanpath_ratio(h->fixations, ctx.target_boxes.front())) sr.add(*r);
            }
        }
        if (hs.size() < 2) {
            report.warnings.push_back("image '" + image_id + "': fewer than two subjects, no consistency pairs");
            continue;
        }
        const ClusterAssignment clusters = clusters_for(image_id, ctx, humans, options);
        const SemanticLabeling semantic(ctx.regions);
        SequenceAccumulators image_acc;
        for (std::size_t i = 0; i < hs.size(); ++i) {
            for (std::size_t j = 0; j < hs.size(); ++j) {
                if (i == j) continue;
                add_pair(image_acc, hs[i]->fixations, hs[j]->fixations, clusters, semantic);
                ++report.pairs;
            }
        }
        ss.add(image_acc.ss.value().mean);
        fed.add(image_acc.fed.value().mean);
        semss.add(image_acc.semss.value().mean);
        semfed.add(image_acc.semfed.value().mean);
        ++report.images;
    }
    report.ss = ss.value();
    report.fed = fed.value();
    report.semss = semss.value();
    report.semfed = semfed.value();
    report.sr = sr.value();
    return report;
}

nlohmann::json MetricReport::to_json() const {
    auto value = [](const MetricValue& v) -> nlohmann::json {
        if (!v.defined()) return nullptr;
        return {{"mean", v.mean}, {"count", v.count}};
    };
    return {{"name", name},
            {"SS", value(ss)},
            {"FED", value(fed)},
            {"SemSS", value(semss)},
            {"SemFED", value(semfed)},
            {"SR", value(sr)},
            {"cNSS", value(cnss)},
            {"cIG", value(cig)},
            {"cAUC", value(cauc)},
            {"images", images},
            {"pairs", pairs},
            {"conditional_skipped", conditional_skipped},
            {"warnings", warnings}};
}

PublishedReference load_published_reference(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open published reference " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("published reference " + path.string() + ": " + e.what());
    }
    PublishedReference ref;
    for (const auto& [model, metrics] : j.at("rows").items()) {
        for (const auto& [metric, v] : metrics.items()) {
            if (v.is_number()) ref[model][metric] = v.get<double>();
        }
    }
    return ref;
}

namespace {

const char* const kColumns[] = {"SS", "FED", "SemSS", "SemFED", "SR", "cNSS", "cIG", "cAUC"};

std::string cell_text(std::optional<double> v) {
    if (!v) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << *v;
    return os.str();
}

}  // namespace

std::string format_report_table(std::span<const MetricReport> rows, const PublishedReference* reference) {
    struct Line {
        std::string name;
        std::vector<std::string> cells;
    };
    std::vector<Line> lines;
    for (const MetricReport& r : rows) {
        const MetricValue* vals[] = {&r.ss, &r.fed, &r.semss, &r.semfed, &r.sr, &r.cnss, &r.cig, &r.cauc};
        Line line{r.name, {}};
        for (const MetricValue* v : vals) line.cells.push_back(cell_text(v->defined() ? std::optional(v->mean) : std::nullopt));
        lines.push_back(std::move(line));
        if (reference != nullptr) {
            const auto it = reference->find(r.name);
            if (it == reference->end()) continue;
            Line pub{"  (published)", {}};
            for (const char* col : kColumns) {
                const auto m = it->second.find(col);
                pub.cells.push_back(cell_text(m == it->second.end() ? std::nullopt : std::optional(m->second)));
            }
            lines.push_back(std::move(pub));
        }
    }
    std::size_t name_w = 5;
    for (const auto& l : lines) name_w = std::max(name_w, l.name.size());
    std::vector<std::size_t> widths;
    for (const char* col : kColumns) widths.push_back(std::max<std::size_t>(6, std::string(col).size()));
    for (const auto& l : lines) {
        for (std::size_t c = 0; c < l.cells.size(); ++c) widths[c] = std::max(widths[c], l.cells[c].size());
    }
    auto emit = [&](std::ostringstream& os, const std::string& name, const std::vector<std::string>& cells) {
        os << std::left << std::setw(static_cast<int>(name_w)) << name;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == 5) os << "  |";  // scanpath block | next-fixation block
            os << "  " << std::right << std::setw(static_cast<int>(widths[c])) << cells[c];
        }
        os << '\n';
    };
    std::ostringstream os;
    std::size_t scan_w = 0, next_w = 0;
    for (std::size_t c = 0; c < 5; ++c) scan_w += widths[c] + 2;
    for (std::size_t c = 5; c < 8; ++c) next_w += widths[c] + 2;
    os << std::left << std::setw(static_cast<int>(name_w)) << "" << std::setw(static_cast<int>(scan_w))
       << "  Scanpath (fixation sequence)" << "  |" << "  Next fixation prediction" << '\n';
    emit(os, "Model", std::vector<std::string>(std::begin(kColumns), std::end(kColumns)));
    os << std::string(name_w + scan_w + next_w + 3, '-') << '\n';
    for (const auto& l : lines) emit(os, l.name, l.cells);
    return os.str();
}

}  // namespace semba
