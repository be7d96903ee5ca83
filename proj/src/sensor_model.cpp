#include "semba/sensor_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "semba/types.hpp"

namespace semba {

SensorModel::SensorModel(std::vector<std::string> class_names, int distortion_levels, double eta)
    : class_names_(std::move(class_names)), distortion_levels_(distortion_levels), eta_(eta) {
    if (class_names_.size() < 2) throw std::invalid_argument("sensor model needs at least 2 classes");
    if (distortion_levels_ < 1) throw std::invalid_argument("sensor model needs at least 1 distortion level");
    const std::size_t n = class_names_.size() * static_cast<std::size_t>(distortion_levels_);
    table_.assign(n, DirichletParams::flat(class_count()));
    diagnostics_.assign(n, BinDiagnostics{});
}

std::size_t SensorModel::slot(int k, int d) const {
    if (k < 0 || k >= class_count()) throw std::out_of_range("sensor model class out of range: " + std::to_string(k));
    if (d < 1 || d > distortion_levels_) throw std::out_of_range("sensor model level out of range: " + std::to_string(d));
    return static_cast<std::size_t>(k) * distortion_levels_ + (d - 1);
}

const DirichletParams& SensorModel::params(int k, int d) const { return table_[slot(k, d)]; }
const BinDiagnostics& SensorModel::diagnostics(int k, int d) const { return diagnostics_[slot(k, d)]; }

void SensorModel::set(int k, int d, DirichletParams params, BinDiagnostics diag) {
    if (params.size() != static_cast<std::size_t>(class_count())) {
        throw std::invalid_argument("Dirichlet dimension does not match sensor class count");
    }
    const auto s = slot(k, d);
    table_[s] = std::move(params);
    diagnostics_[s] = diag;
}

int SensorModel::fallback_count() const {
    return static_cast<int>(std::count_if(diagnostics_.begin(), diagnostics_.end(),
                                          [](const BinDiagnostics& d) { return d.fallback; }));
}

std::vector<double> SensorModel::calibrated_likelihoods(std::span<const double> scores, int d, double clamp_eps) const {
    if (scores.size() != static_cast<std::size_t>(class_count())) {
        throw std::invalid_argument("score vector dimension does not match sensor model");
    }
    const auto s = clamp_to_interior(scores, clamp_eps);
    std::vector<double> log_lik(class_names_.size());
    for (int k = 0; k < class_count(); ++k) log_lik[k] = dirichlet_log_density(params(k, d), s);
    const double top = *std::max_element(log_lik.begin(), log_lik.end());
    for (double& v : log_lik) v = std::exp(v - top);
    return log_lik;
}

std::vector<double> SensorModel::centred_mean(int k) const { return dirichlet_mean(params(k, 1)); }

nlohmann::json SensorModel::to_json() const {
    nlohmann::json alpha = nlohmann::json::array();
    nlohmann::json counts = nlohmann::json::array();
    nlohmann::json bins = nlohmann::json::array();
    for (int k = 0; k < class_count(); ++k) {
        nlohmann::json alpha_row = nlohmann::json::array();
        nlohmann::json count_row = nlohmann::json::array();
        for (int d = 1; d <= distortion_levels_; ++d) {
            alpha_row.push_back(params(k, d).vector());
            const auto& diag = diagnostics(k, d);
            count_row.push_back(diag.samples);
            bins.push_back({{"class", k},
                            {"level", d},
                            {"samples", diag.samples},
                            {"fallback", diag.fallback},
                            {"iterations", diag.iterations},
                            {"converged", diag.converged},
                            {"log_likelihood", diag.log_likelihood}});
        }
        alpha.push_back(std::move(alpha_row));
        counts.push_back(std::move(count_row));
    }
    return {{"K", class_count()},
            {"D", distortion_levels_},
            {"eta", eta_},
            {"class_names", class_names_},
            {"alpha", std::move(alpha)},
            {"sample_counts", std::move(counts)},
            {"fallback_bins", fallback_count()},
            {"diagnostics", std::move(bins)}};
}

SensorModel SensorModel::from_json(const nlohmann::json& j) {
    try {
        const int k_count = j.at("K").get<int>();
        const int d_count = j.at("D").get<int>();
        auto names = j.at("class_names").get<std::vector<std::string>>();
        if (static_cast<int>(names.size()) != k_count) throw FormatError("calibration: class_names length != K");
        SensorModel model(std::move(names), d_count, j.at("eta").get<double>());
        const auto& alpha = j.at("alpha");
        if (!alpha.is_array() || static_cast<int>(alpha.size()) != k_count) throw FormatError("calibration: alpha must be K x D");
        for (int k = 0; k < k_count; ++k) {
            if (static_cast<int>(alpha[k].size()) != d_count) throw FormatError("calibration: alpha must be K x D");
            for (int d = 1; d <= d_count; ++d) {
                auto values = alpha[k][d - 1].get<std::vector<double>>();
                if (static_cast<int>(values.size()) != k_count) throw FormatError("calibration: alpha vectors must have K entries");
                BinDiagnostics diag;
                if (j.contains("sample_counts")) diag.samples = j["sample_counts"][k][d - 1].get<std::size_t>();
                model.set(k, d, DirichletParams(std::move(values)), diag);
            }
        }
        if (j.contains("diagnostics")) {
            for (const auto& bin : j["diagnostics"]) {
                const int k = bin.at("class").get<int>();
                const int d = bin.at("level").get<int>();
                BinDiagnostics diag;
                diag.samples = bin.at("samples").get<std::size_t>();
                diag.fallback = bin.at("fallback").get<bool>();
                diag.iterations = bin.at("iterations").get<int>();
                diag.converged = bin.at("converged").get<bool>();
                diag.log_likelihood = bin.at("log_likelihood").get<double>();
                model.diagnostics_[model.slot(k, d)] = diag;
            }
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("calibration: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("calibration: ") + e.what());
    }
}

SensorModel fit_sensor_model(const std::vector<std::vector<DirichletStats>>& bins, std::vector<std::string> class_names,
                             double eta, const FitConfig& config) {
    const int k_count = static_cast<int>(class_names.size());
    if (static_cast<int>(bins.size()) != k_count || bins.empty()) throw std::invalid_argument("bins must be K x D");
    const int d_count = static_cast<int>(bins.front().size());
    SensorModel model(std::move(class_names), d_count, eta);
    for (int k = 0; k < k_count; ++k) {
        if (static_cast<int>(bins[k].size()) != d_count) throw std::invalid_argument("bins must be K x D");
        for (int d = 1; d <= d_count; ++d) {
            const DirichletStats& stats = bins[k][d - 1];
            BinDiagnostics diag;
            diag.samples = stats.count();
            if (stats.count() < static_cast<std::size_t>(std::max(config.min_samples, 2))) {
                diag.fallback = true;
                diag.iterations = 0;
                model.set(k, d, DirichletParams::flat(k_count), diag);
                continue;
            }
            FitResult fit = fit_dirichlet_mle(stats, config);
            diag.iterations = fit.iterations;
            diag.converged = fit.converged;
            diag.log_likelihood = fit.log_likelihood();
            model.set(k, d, fit.params, diag);
        }
    }
    return model;
}

SensorModel load_sensor_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open calibration file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("calibration file " + path.string() + ": " + e.what());
    }
    return SensorModel::from_json(j);
}

}  // namespace semba
