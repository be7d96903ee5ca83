#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "semba/dirichlet.hpp"

namespace semba {

/// Fit outcome of one (class, distortion level) bin.
struct BinDiagnostics {
    std::size_t samples = 0;
    bool fallback = false;  // too few samples: flat Dirichlet used instead of a fit
    int iterations = 0;
    bool converged = true;
    double log_likelihood = 0.0;
};

/// K x D table of Dirichlet score models P(S | C = k, d). Levels d are 1-based.
class SensorModel {
public:
    /// Flat (alpha = 1) table.
    SensorModel(std::vector<std::string> class_names, int distortion_levels, double eta);

    int class_count() const { return static_cast<int>(class_names_.size()); }
    int distortion_levels() const { return distortion_levels_; }
    double eta() const { return eta_; }
    const std::vector<std::string>& class_names() const { return class_names_; }

    const DirichletParams& params(int k, int d) const;
    const BinDiagnostics& diagnostics(int k, int d) const;
    void set(int k, int d, DirichletParams params, BinDiagnostics diag = {});

    int fallback_count() const;

    /// lambda_k = exp(log Dir(s | alpha_{k,d}) - max_j log Dir(s | alpha_{j,d})). The shift keeps
    /// values in (0, 1] without changing the fusion result. `scores` are clamped to the interior.
    std::vector<double> calibrated_likelihoods(std::span<const double> scores, int d, double clamp_eps = 1e-6) const;

    /// Mean of alpha_{k,1}: the expected score vector of a foveated, centred object of class k.
    std::vector<double> centred_mean(int k) const;

    nlohmann::json to_json() const;
    static SensorModel from_json(const nlohmann::json& j);

private:
    std::size_t slot(int k, int d) const;

    std::vector<std::string> class_names_;
    int distortion_levels_;
    double eta_;
    std::vector<DirichletParams> table_;
    std::vector<BinDiagnostics> diagnostics_;
};

/// Fits every bin of a K x D grid of accumulated statistics (bins[k][d-1]). Bins with fewer
/// than config.min_samples samples get the flat Dirichlet and are flagged as fallbacks.
SensorModel fit_sensor_model(const std::vector<std::vector<DirichletStats>>& bins,
                             std::vector<std::string> class_names, double eta, const FitConfig& config = {});

SensorModel load_sensor_model(const std::filesystem::path& path);

}  // namespace semba
