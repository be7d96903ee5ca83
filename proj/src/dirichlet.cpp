#include "semba/dirichlet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace semba {

DirichletParams::DirichletParams(std::vector<double> alpha) : alpha_(std::move(alpha)) {
    if (alpha_.empty()) throw std::invalid_argument("Dirichlet parameters are empty");
    for (double a : alpha_) {
        if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("Dirichlet parameters must be finite and > 0");
    }
}

DirichletParams DirichletParams::flat(int dimension) {
    return DirichletParams(std::vector<double>(static_cast<std::size_t>(dimension), 1.0));
}

double DirichletParams::concentration() const {
    double total = 0.0;
    for (double a : alpha_) total += a;
    return total;
}

double digamma(double x) {
    if (x <= 0.0 && x == std::floor(x)) return std::numeric_limits<double>::quiet_NaN();
    if (x < 0.0) return digamma(1.0 - x) - std::numbers::pi / std::tan(std::numbers::pi * x);
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double f = 1.0 / (x * x);
    // Asymptotic expansion in Bernoulli numbers, truncated after the x^-12 term.
    const double tail =
        f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132 - f * (691.0 / 32760))))));
    return result + std::log(x) - 0.5 / x - tail;
}

double trigamma(double x) {
    if (x <= 0.0 && x == std::floor(x)) return std::numeric_limits<double>::quiet_NaN();
    if (x < 0.0) {
        const double s = std::sin(std::numbers::pi * x);
        return -trigamma(1.0 - x) + std::numbers::pi * std::numbers::pi / (s * s);
    }
    double result = 0.0;
    while (x < 10.0) {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    const double f = 1.0 / (x * x);
    const double tail = 1.0 / x + f / 2.0 +
                        f / x * (1.0 / 6 - f * (1.0 / 30 - f * (1.0 / 42 - f * (1.0 / 30 - f * (5.0 / 66)))));
    return result + tail;
}

double inverse_digamma(double y) {
    if (!std::isfinite(y)) throw std::invalid_argument("inverse_digamma: non-finite argument");
    constexpr double euler_gamma = 0.57721566490153286061;
    double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + euler_gamma);
    for (int i = 0; i < 100; ++i) {
        const double step = (digamma(x) - y) / trigamma(x);
        double next = x - step;
        if (next <= 0.0) next = 0.5 * x;  // keep the iterate on digamma's positive branch
        if (std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * x) return next;
        x = next;
    }
    return x;
}

std::vector<double> clamp_to_interior(std::span<const double> s, double eps) {
    std::vector<double> out(s.begin(), s.end());
    double total = 0.0;
    for (double& v : out) {
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("score entries must be finite and >= 0");
        v = std::max(v, eps);
        total += v;
    }
    for (double& v : out) v /= total;
    return out;
}

double dirichlet_log_density(const DirichletParams& params, std::span<const double> s) {
    if (s.size() != params.size()) throw std::invalid_argument("score vector dimension does not match Dirichlet");
    double total = 0.0;
    for (double v : s) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("score vector must lie strictly inside the simplex");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("score vector does not sum to 1");
    double log_p = std::lgamma(params.concentration());
    for (std::size_t i = 0; i < s.size(); ++i) {
        log_p += (params[i] - 1.0) * std::log(s[i]) - std::lgamma(params[i]);
    }
    return log_p;
}

std::vector<double> dirichlet_mean(const DirichletParams& params) {
    const double total = params.concentration();
    std::vector<double> mean(params.size());
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = params[i] / total;
    return mean;
}

std::vector<double> dirichlet_sample(const DirichletParams& params, Rng& rng) {
    std::vector<double> draw(params.size());
    double total = 0.0;
    for (std::size_t i = 0; i < draw.size(); ++i) {
        std::gamma_distribution<double> gamma(params[i], 1.0);
        draw[i] = gamma(rng);
        total += draw[i];
    }
    if (!(total > 0.0)) {
        // Every component underflowed (only possible for tiny alphas); fall back to the mean.
        return dirichlet_mean(params);
    }
    for (double& v : draw) v /= total;
    return draw;
}

DirichletStats::DirichletStats(std::size_t dimension, double clamp_eps)
    : clamp_eps_(clamp_eps), sum_log_(dimension, 0.0), sum_(dimension, 0.0), sum_sq_(dimension, 0.0) {
    if (dimension < 2) throw std::invalid_argument("Dirichlet dimension must be at least 2");
}

void DirichletStats::add(std::span<const double> s) {
    if (s.size() != dimension()) throw std::invalid_argument("sample dimension mismatch");
    const auto clamped = clamp_to_interior(s, clamp_eps_);
    for (std::size_t i = 0; i < clamped.size(); ++i) {
        sum_log_[i] += std::log(clamped[i]);
        sum_[i] += clamped[i];
        sum_sq_[i] += clamped[i] * clamped[i];
    }
    ++count_;
}

namespace {

std::vector<double> scaled(const std::vector<double>& v, double n) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

// Method of moments: alpha = precision * mean, precision averaged over per-component estimates.
std::vector<double> moment_estimate(const std::vector<double>& mean, const std::vector<double>& mean_sq) {
    double precision_sum = 0.0;
    int valid = 0;
    for (std::size_t k = 0; k < mean.size(); ++k) {
        const double var = mean_sq[k] - mean[k] * mean[k];
        const double p = (mean[k] - mean_sq[k]) / var;
        if (var > 0.0 && std::isfinite(p) && p > 0.0) {
            precision_sum += p;
            ++valid;
        }
    }
    const double precision = valid > 0 ? precision_sum / valid : static_cast<double>(mean.size());
    std::vector<double> alpha(mean.size());
    for (std::size_t k = 0; k < mean.size(); ++k) alpha[k] = std::max(precision * mean[k], 1e-8);
    return alpha;
}

}  // namespace

std::vector<double> DirichletStats::mean_log() const { return scaled(sum_log_, static_cast<double>(count_)); }
std::vector<double> DirichletStats::mean() const { return scaled(sum_, static_cast<double>(count_)); }
std::vector<double> DirichletStats::mean_square() const { return scaled(sum_sq_, static_cast<double>(count_)); }

double dirichlet_mean_log_likelihood(const DirichletParams& params, std::span<const double> mean_log) {
    double ll = std::lgamma(params.concentration());
    for (std::size_t k = 0; k < params.size(); ++k) {
        ll += (params[k] - 1.0) * mean_log[k] - std::lgamma(params[k]);
    }
    return ll;
}

FitResult fit_dirichlet_mle(const DirichletStats& stats, const FitConfig& config) {
    if (stats.count() < 2) throw std::invalid_argument("Dirichlet fit needs at least 2 samples");
    const auto mean_log = stats.mean_log();
    std::vector<double> alpha = moment_estimate(stats.mean(), stats.mean_square());

    FitResult result{DirichletParams(alpha), 0, false, {}};
    result.log_likelihood_trace.push_back(dirichlet_mean_log_likelihood(result.params, mean_log));

    std::vector<double> next(alpha.size());
    for (int iter = 1; iter <= config.max_iters; ++iter) {
        double total = 0.0;
        for (double a : alpha) total += a;
        const double psi_total = digamma(total);
        double max_rel_change = 0.0;
        for (std::size_t k = 0; k < alpha.size(); ++k) {
            next[k] = inverse_digamma(psi_total + mean_log[k]);
            max_rel_change = std::max(max_rel_change, std::abs(next[k] - alpha[k]) / alpha[k]);
        }
        alpha.swap(next);
        result.params = DirichletParams(alpha);
        result.iterations = iter;
        result.log_likelihood_trace.push_back(dirichlet_mean_log_likelihood(result.params, mean_log));
        if (max_rel_change < config.tol) {
            result.converged = true;
            break;
        }
    }
    if (!result.converged && config.require_convergence) {
        throw DirichletFitError("Dirichlet fit did not converge within " + std::to_string(config.max_iters) +
                                    " iterations",
                                result);
    }
    return result;
}

FitResult fit_dirichlet_mle(std::span<const std::vector<double>> samples, const FitConfig& config) {
    if (samples.size() < 2) throw std::invalid_argument("Dirichlet fit needs at least 2 samples");
    DirichletStats stats(samples.front().size(), config.clamp_eps);
    for (const auto& s : samples) stats.add(s);
    return fit_dirichlet_mle(stats, config);
}

}  // namespace semba
