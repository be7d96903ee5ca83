#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "semba/belief.hpp"
#include "semba/dirichlet.hpp"
#include "semba/experiment.hpp"
#include "semba/fovea.hpp"
#include "semba/metrics.hpp"

namespace py = pybind11;
using namespace semba;

namespace {

AttentionMap to_map(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("attention map must be a 2-D array");
    AttentionMap m(GridDims{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))});
    std::memcpy(m.values.data(), a.data(), m.values.size() * sizeof(double));
    return m;
}

Cell to_cell(std::pair<int, int> rc) { return {rc.first, rc.second}; }

std::vector<double> fused(std::vector<double> beta, const std::vector<double>& lambda) {
    if (beta.size() != lambda.size()) throw std::invalid_argument("beta and lambda differ in length");
    kaplan_update(beta, lambda);
    return beta;
}

py::array_t<std::uint8_t> foveate_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                                        std::pair<double, double> focal, double eta, int levels, double sigma_base) {
    if (a.ndim() != 2 && !(a.ndim() == 3 && a.shape(2) == 3)) {
        throw std::invalid_argument("image must be HxW or HxWx3 uint8");
    }
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), a.ndim() == 3 ? 3 : 1);
    std::memcpy(img.pixels.data(), a.data(), img.pixels.size());
    FoveaConfig cfg;
    cfg.eta = eta;
    cfg.levels = levels;
    cfg.sigma_base = sigma_base;
    Image out;
    {
        py::gil_scoped_release release;
        out = foveate(img, FocalFrame({focal.first, focal.second}, img.dims(), eta), cfg);
    }
    std::vector<py::ssize_t> shape{a.shape(0), a.shape(1)};
    if (a.ndim() == 3) shape.push_back(3);
    py::array_t<std::uint8_t> result(shape);
    std::memcpy(result.mutable_data(), out.pixels.data(), out.pixels.size());
    return result;
}

std::vector<double> fit_alpha(const std::vector<std::vector<double>>& samples) {
    return fit_dirichlet_mle(std::span<const std::vector<double>>(samples)).params.vector();
}

std::vector<std::vector<double>> sample_dirichlet(const std::vector<double>& alpha, std::size_t n, std::uint64_t seed) {
    const DirichletParams p(alpha);
    Rng rng(seed);
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(dirichlet_sample(p, rng));
    return out;
}

int checked(int rc, const char* what) {
    if (rc != 0) throw std::runtime_error(std::string(what) + " failed with exit code " + std::to_string(rc));
    return rc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Semantic visual search with foveated detections";

    m.def("kaplan_update", &fused, py::arg("beta"), py::arg("likelihood"),
          "Fuse one likelihood vector into Dirichlet pseudo-counts; returns the updated counts.");
    m.def("digamma", &digamma);
    m.def("inverse_digamma", &inverse_digamma);
    m.def("dirichlet_sample", &sample_dirichlet, py::arg("alpha"), py::arg("n"), py::arg("seed") = 0);
    m.def("fit_dirichlet", &fit_alpha, py::arg("samples"), "Maximum-likelihood Dirichlet concentration.");

    m.def("foveate", &foveate_array, py::arg("image"), py::arg("focal"), py::arg("eta") = 0.156,
          py::arg("levels") = 5, py::arg("sigma_base") = 1.0);

    m.def("sequence_score", [](const Symbols& a, const Symbols& b) { return sequence_score(a, b); });
    m.def("fixation_edit_distance", [](const Symbols& a, const Symbols& b) { return fixation_edit_distance(a, b); });
    m.def("cnss", [](const py::array_t<double>& map, std::pair<int, int> cell) { return cnss(to_map(map), to_cell(cell)); });
    m.def("cauc", [](const py::array_t<double>& map, std::pair<int, int> cell) { return cauc(to_map(map), to_cell(cell)); });
    m.def("cig", [](const py::array_t<double>& map, std::pair<int, int> cell, const py::array_t<double>& baseline) {
        const AttentionMap b = to_map(baseline);
        BaselineDensity density;
        density.dims = b.dims;
        density.values = b.values;
        return cig(to_map(map), to_cell(cell), density);
    });

    m.def("simulate",
          [](const std::filesystem::path& config, const std::filesystem::path& out, int scenes,
             std::vector<std::string> overrides, std::optional<std::filesystem::path> humans, int subjects) {
              SimulateOptions o;
              o.config = config;
              o.out = out;
              o.scenes = scenes;
              o.overrides = std::move(overrides);
              o.humans = std::move(humans);
              o.subjects = subjects;
              py::gil_scoped_release release;
              return checked(cmd_simulate(o), "simulate");
          },
          py::arg("config"), py::arg("out"), py::arg("scenes") = 100, py::arg("overrides") = std::vector<std::string>{},
          py::arg("humans") = py::none(), py::arg("subjects") = 10);
    m.def("search",
          [](const std::filesystem::path& config, const std::filesystem::path& out, std::vector<std::string> overrides,
             std::optional<int> jobs) {
              SearchOptions o;
              o.config = config;
              o.out = out;
              o.overrides = std::move(overrides);
              o.jobs = jobs;
              py::gil_scoped_release release;
              return checked(cmd_search(o), "search");
          },
          py::arg("config"), py::arg("out"), py::arg("overrides") = std::vector<std::string>{},
          py::arg("jobs") = py::none());
    m.def("cumulative",
          [](std::vector<std::string> inputs, const std::filesystem::path& out, int max_n) {
              CumulativeOptions o;
              o.inputs = std::move(inputs);
              o.out = out;
              o.max_n = max_n;
              return checked(cmd_cumulative(o), "cumulative");
          },
          py::arg("inputs"), py::arg("out"), py::arg("max_n") = 7);
}
