// semba: batch driver for calibration, search, evaluation and export.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "semba/experiment.hpp"

namespace {

template <typename T>
bool parse_pair(const std::string& text, T& a, T& b) {
    std::istringstream in(text);
    char sep = 0;
    return static_cast<bool>(in >> a >> sep >> b) && (sep == ',' || sep == 'x');
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic Bayesian foveal visual-search attention pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "semba 0.1.0");

    semba::CalibrateOptions cal;
    auto* calibrate = app.add_subcommand("calibrate", "Fit the K x D Dirichlet sensor model from a labelled detection log");
    calibrate->add_option("--config", cal.config, "Experiment config JSON (classes, fovea)");
    calibrate->add_option("--set", cal.overrides, "Config override key=value (repeatable)");
    calibrate->add_option("--log", cal.log, "JSON-lines detection log with true_class")->required();
    calibrate->add_option("--out", cal.out, "Calibration file to write")->required();
    calibrate->add_option("--min-samples", cal.min_samples, "Bins with fewer samples get the flat fallback")
        ->capture_default_str();

    semba::SearchOptions search;
    std::string search_out;
    int search_jobs = -1;
    auto* search_cmd = app.add_subcommand("search", "Run the search loop over a scene or image manifest");
    search_cmd->add_option("--config", search.config, "Experiment config JSON");
    search_cmd->add_option("--set", search.overrides, "Config override key=value (repeatable)");
    search_cmd->add_option("--out", search_out, "Output directory (overrides output_dir)");
    search_cmd->add_flag("--dump-maps", search.dump_maps, "Write per-step PGM heatmaps and a JSON index");
    search_cmd->add_option("--map-scale", search.map_scale, "Heatmap pixels per grid cell")->capture_default_str();
    search_cmd->add_option("--jobs", search_jobs, "Worker threads (default: logical cores)");

    semba::EvaluateOptions eval;
    std::string baseline_path, reference_path;
    bool no_conditional = false;
    auto* evaluate = app.add_subcommand("evaluate", "Score scanpath sets against human scanpaths");
    evaluate->add_option("--config", eval.config, "Experiment config JSON (manifest, adapter, sensor model)");
    evaluate->add_option("--set", eval.overrides, "Config override key=value (repeatable)");
    evaluate->add_option("--predicted", eval.predicted, "[NAME=]scanpaths.json or search output dir (repeatable)")
        ->required();
    evaluate->add_option("--humans", eval.humans, "Human scanpaths JSON")->required();
    evaluate->add_option("--baseline", baseline_path, "Baseline density JSON (needed for cIG)");
    evaluate->add_flag("--skip-cig", eval.skip_cig, "Do not compute cIG");
    evaluate->add_flag("--no-conditional", no_conditional, "Skip cNSS / cIG / cAUC");
    evaluate->add_flag("--human-consistency", eval.human_consistency, "Add the leave-one-subject-out Human row");
    evaluate->add_flag("--mean-shift", eval.mean_shift, "Cluster fixations by mean shift instead of grid cells");
    evaluate->add_option("--reference", reference_path, "Published reference rows JSON (comparison column)");
    evaluate->add_option("--out", eval.out, "Report prefix; writes PREFIX.json and PREFIX.txt")->required();

    semba::CumulativeOptions cum;
    auto* cumulative = app.add_subcommand("cumulative", "Cumulative success curves of scanpath sets");
    cumulative->add_option("--input", cum.inputs, "[NAME=]scanpaths.json or search output dir (repeatable)")->required();
    cumulative->add_option("--max", cum.max_n, "Largest fixation count")->capture_default_str();
    cumulative->add_option("--out", cum.out, "Prefix; writes PREFIX.csv and PREFIX.json")->required();

    semba::FoveateOptions fov;
    std::string focal_text;
    auto* foveate = app.add_subcommand("foveate", "Foveate one image around a focal point");
    foveate->add_option("--input", fov.input, "PNG / PPM / PGM image")->required()->check(CLI::ExistingFile);
    foveate->add_option("--output", fov.output, "Output image (format by extension)")->required();
    foveate->add_option("--focal", focal_text, "Focal point x,y in pixels (default: centre)");
    foveate->add_option("--eta", fov.fovea.eta, "Fovea size as a fraction of each axis")->capture_default_str();
    foveate->add_option("--levels", fov.fovea.levels, "Pyramid levels")->capture_default_str();
    foveate->add_option("--sigma-base", fov.fovea.sigma_base, "Base blur in pixels")->capture_default_str();

    semba::SimulateOptions sim;
    std::string calib_log, humans_out, dims_text;
    auto* simulate = app.add_subcommand("simulate", "Generate synthetic scene sets, calibration logs and observers");
    simulate->add_option("--config", sim.config, "Experiment config JSON (seed, classes, simulator)");
    simulate->add_option("--set", sim.overrides, "Config override key=value (repeatable)");
    simulate->add_option("--scenes", sim.scenes, "Number of scenes")->capture_default_str();
    simulate->add_option("--objects", sim.spec.n_objects, "Objects per scene")->capture_default_str();
    simulate->add_option("--dims", dims_text, "Scene size WxH (default 1680x1050)");
    simulate->add_option("--min-box", sim.spec.min_box_fraction, "Min box side fraction")->capture_default_str();
    simulate->add_option("--max-box", sim.spec.max_box_fraction, "Max box side fraction")->capture_default_str();
    simulate->add_option("--out", sim.out, "Scene set JSON")->required();
    simulate->add_option("--calibration-log", calib_log, "Also write a labelled detection log");
    simulate->add_option("--samples-per-bin", sim.samples_per_bin, "Calibration records per (class, level) bin")
        ->capture_default_str();
    simulate->add_flag("--calibration-jitter", sim.calibration_jitter, "Keep box jitter in the calibration log");
    simulate->add_option("--humans", humans_out, "Also write synthetic observer scanpaths");
    simulate->add_option("--subjects", sim.subjects, "Observers per scene")->capture_default_str();

    semba::BaselineOptions base;
    double ppd = 0.0;
    std::string base_dims;
    auto* baseline = app.add_subcommand("baseline", "Baseline fixation density from a fixation corpus");
    baseline->add_option("--humans", base.humans, "Human scanpaths JSON")->required()->check(CLI::ExistingFile);
    auto* ppd_opt = baseline->add_option("--px-per-degree", ppd, "Pixels per degree of visual angle (kernel sigma)");
    baseline->add_option("--dims", base_dims, "Image size WxH (default 1680x1050)");
    baseline->add_option("--out", base.out, "Density JSON")->required();

    CLI11_PARSE(app, argc, argv);

    if (*calibrate) return semba::cmd_calibrate(cal);
    if (*search_cmd) {
        if (!search_out.empty()) search.out = search_out;
        if (search_jobs >= 0) search.jobs = search_jobs;
        return semba::cmd_search(search);
    }
    if (*evaluate) {
        if (!baseline_path.empty()) eval.baseline = baseline_path;
        if (!reference_path.empty()) eval.reference = reference_path;
        eval.conditional = !no_conditional;
        return semba::cmd_evaluate(eval);
    }
    if (*cumulative) return semba::cmd_cumulative(cum);
    if (*foveate) {
        if (!focal_text.empty()) {
            semba::Point2 p;
            if (!parse_pair(focal_text, p.x, p.y)) {
                std::cerr << "semba foveate: error: --focal expects x,y\n";
                return 2;
            }
            fov.focal = p;
        }
        return semba::cmd_foveate(fov);
    }
    if (*simulate) {
        if (!dims_text.empty() && !parse_pair(dims_text, sim.spec.dims.width, sim.spec.dims.height)) {
            std::cerr << "semba simulate: error: --dims expects WxH\n";
            return 2;
        }
        if (!calib_log.empty()) sim.calibration_log = calib_log;
        if (!humans_out.empty()) sim.humans = humans_out;
        return semba::cmd_simulate(sim);
    }
    if (*baseline) {
        if (*ppd_opt) base.px_per_degree = ppd;
        if (!base_dims.empty() && !parse_pair(base_dims, base.dims.width, base.dims.height)) {
            std::cerr << "semba baseline: error: --dims expects WxH\n";
            return 2;
        }
        return semba::cmd_baseline(base);
    }
    return 0;
}
