#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "semba/types.hpp"

namespace semba {

/// Concentration parameters of a Dirichlet distribution; every entry finite and > 0.
class DirichletParams {
public:
    explicit DirichletParams(std::vector<double> alpha);
    static DirichletParams flat(int dimension);

    std::span<const double> alpha() const { return alpha_; }
    const std::vector<double>& vector() const { return alpha_; }
    std::size_t size() const { return alpha_.size(); }
    double concentration() const;
    double operator[](std::size_t i) const { return alpha_[i]; }

private:
    std::vector<double> alpha_;
};

double digamma(double x);
double trigamma(double x);

/// Solves digamma(x) = y by Newton's method from Minka's initial guess.
double inverse_digamma(double y);

/// Clamps every entry to at least `eps` and renormalises to unit sum. Detector scores may hold
/// exact zeros; the density is only defined on the open simplex.
std::vector<double> clamp_to_interior(std::span<const double> s, double eps = 1e-6);

/// log Dir(s | alpha). `s` must be strictly inside the simplex (no clamping happens here).
double dirichlet_log_density(const DirichletParams& params, std::span<const double> s);

std::vector<double> dirichlet_mean(const DirichletParams& params);

/// One draw via normalised Gamma variates.
std::vector<double> dirichlet_sample(const DirichletParams& params, Rng& rng);

struct FitConfig {
    double tol = 1e-7;
    int max_iters = 1000;
    int min_samples = 25;  // used by calibration to decide the flat fallback
    double clamp_eps = 1e-6;
    bool require_convergence = false;
};

/// Accumulates the sufficient statistics of a sample set (clamped to the interior on entry),
/// so large calibration logs never need to be held in memory.
class DirichletStats {
public:
    explicit DirichletStats(std::size_t dimension, double clamp_eps = 1e-6);

    void add(std::span<const double> s);
    std::size_t count() const { return count_; }
    std::size_t dimension() const { return sum_log_.size(); }

    std::vector<double> mean_log() const;
    std::vector<double> mean() const;
    std::vector<double> mean_square() const;

private:
    double clamp_eps_;
    std::size_t count_ = 0;
    std::vector<double> sum_log_;
    std::vector<double> sum_;
    std::vector<double> sum_sq_;
};

struct FitResult {
    DirichletParams params;
    int iterations = 0;
    bool converged = false;
    /// Mean per-sample log-likelihood at the initial point and after every iteration.
    std::vector<double> log_likelihood_trace;

    double log_likelihood() const { return log_likelihood_trace.back(); }
};

class DirichletFitError : public std::runtime_error {
public:
    DirichletFitError(const std::string& what, FitResult result)
        : std::runtime_error(what), result_(std::move(result)) {}
    const FitResult& result() const { return result_; }

private:
    FitResult result_;
};

/// Maximum-likelihood Dirichlet fit by Minka's fixed point
///   alpha_k <- digamma^-1(digamma(sum alpha) + mean log s_k),
/// started from the method-of-moments estimate. Stops when max |d alpha| / alpha < tol.
/// Throws std::invalid_argument for fewer than two samples; on hitting max_iters it returns the
/// last iterate with converged=false (or throws DirichletFitError if require_convergence).
FitResult fit_dirichlet_mle(std::span<const std::vector<double>> samples, const FitConfig& config = {});
FitResult fit_dirichlet_mle(const DirichletStats& stats, const FitConfig& config = {});

/// Mean per-sample log-likelihood from sufficient statistics.
double dirichlet_mean_log_likelihood(const DirichletParams& params, std::span<const double> mean_log);

}  // namespace semba
