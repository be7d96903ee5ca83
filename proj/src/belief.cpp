#include "semba/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace semba {

ClassCatalog::ClassCatalog(std::vector<std::string> names, std::vector<int> known)
    : names_(std::move(names)), known_(std::move(known)) {
    if (names_.size() < 2) throw std::invalid_argument("class catalog needs at least 2 classes");
    std::set<std::string> seen(names_.begin(), names_.end());
    if (seen.size() != names_.size()) throw std::invalid_argument("class names must be unique");
    if (known_.empty()) {
        known_.resize(names_.size());
        std::iota(known_.begin(), known_.end(), 0);
    }
    std::sort(known_.begin(), known_.end());
    known_.erase(std::unique(known_.begin(), known_.end()), known_.end());
    for (int k : known_) {
        if (k < 0 || k >= size()) throw std::invalid_argument("known class id out of range: " + std::to_string(k));
    }
}

ClassCatalog ClassCatalog::numbered(int class_count) {
    std::vector<std::string> names;
    for (int k = 0; k < class_count; ++k) names.push_back(std::to_string(k));
    return ClassCatalog(std::move(names));
}

bool ClassCatalog::is_known(int k) const { return std::binary_search(known_.begin(), known_.end(), k); }

std::optional<int> ClassCatalog::find(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<int>(it - names_.begin());
}

LikelihoodVector::LikelihoodVector(std::vector<double> lambda) : lambda_(std::move(lambda)) {
    if (lambda_.empty()) throw std::invalid_argument("likelihood vector is empty");
    bool any_positive = false;
    for (double v : lambda_) {
        if (!std::isfinite(v)) throw std::invalid_argument("likelihood vector has a non-finite entry");
        if (v < 0.0) throw std::invalid_argument("likelihood vector has a negative entry");
        any_positive = any_positive || v > 0.0;
    }
    if (!any_positive) throw std::invalid_argument("likelihood vector is all zero");
}

BeliefGrid::BeliefGrid(GridDims dims, ClassCatalog catalog, double max_pseudo_count)
    : dims_(dims), catalog_(std::move(catalog)), max_pseudo_count_(max_pseudo_count) {
    if (dims_.rows < 1 || dims_.cols < 1) throw std::invalid_argument("belief grid dimensions must be positive");
    if (!(max_pseudo_count_ > 1.0)) throw std::invalid_argument("max pseudo-count must exceed 1");
    beta_.assign(dims_.cell_count() * static_cast<std::size_t>(class_count()), 1.0);
}

void BeliefGrid::check_cell(Cell c) const {
    if (!dims_.contains(c)) {
        throw std::out_of_range("cell (" + std::to_string(c.row) + "," + std::to_string(c.col) + ") outside grid");
    }
}

std::span<const double> BeliefGrid::cell(Cell c) const {
    check_cell(c);
    const std::size_t k = static_cast<std::size_t>(class_count());
    return std::span<const double>(beta_).subspan(dims_.index(c) * k, k);
}

std::span<double> BeliefGrid::mutable_cell(Cell c) {
    check_cell(c);
    const std::size_t k = static_cast<std::size_t>(class_count());
    return std::span<double>(beta_).subspan(dims_.index(c) * k, k);
}

void BeliefGrid::set_cell(Cell c, std::span<const double> beta) {
    auto dst = mutable_cell(c);
    if (beta.size() != dst.size()) throw std::invalid_argument("belief vector has wrong dimension");
    for (double v : beta) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("pseudo-counts must be finite and > 0");
    }
    std::copy(beta.begin(), beta.end(), dst.begin());
}

void BeliefGrid::update(Cell c, const LikelihoodVector& lambda) {
    auto beta = mutable_cell(c);
    if (lambda.size() != beta.size()) throw std::invalid_argument("likelihood dimension does not match class count");
    kaplan_update(beta, lambda.values(), max_pseudo_count_);
}

nlohmann::json BeliefGrid::to_json() const {
    return {{"rows", dims_.rows}, {"cols", dims_.cols}, {"K", class_count()}, {"beta", beta_}};
}

BeliefGrid BeliefGrid::from_json(const nlohmann::json& j, const ClassCatalog& catalog) {
    try {
        GridDims dims{j.at("rows").get<int>(), j.at("cols").get<int>()};
        const int k = j.at("K").get<int>();
        if (k != catalog.size()) throw FormatError("belief grid K does not match catalog");
        auto beta = j.at("beta").get<std::vector<double>>();
        BeliefGrid grid(dims, catalog);
        if (beta.size() != grid.beta_.size()) throw FormatError("belief grid beta has wrong length");
        for (double v : beta) {
            if (!(v > 0.0) || !std::isfinite(v)) throw FormatError("belief grid has non-positive pseudo-count");
        }
        grid.beta_ = std::move(beta);
        return grid;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("belief grid: ") + e.what());
    }
}

BeliefGrid new_belief_grid(int rows, int cols, const ClassCatalog& catalog) {
    return BeliefGrid(GridDims{rows, cols}, catalog);
}

void kaplan_update(std::span<double> beta, std::span<const double> lambda, double max_pseudo_count) {
    if (beta.size() != lambda.size()) throw std::invalid_argument("likelihood dimension does not match class count");
    double weighted = 0.0;
    double min_lambda = lambda[0];
    for (std::size_t j = 0; j < beta.size(); ++j) {
        weighted += beta[j] * lambda[j];
        min_lambda = std::min(min_lambda, lambda[j]);
    }
    if (!(weighted > 0.0) || !std::isfinite(weighted)) {
        throw std::invalid_argument("fusion normaliser sum(beta*lambda) must be positive and finite");
    }
    const double denom = 1.0 + min_lambda / weighted;
    for (std::size_t k = 0; k < beta.size(); ++k) {
        beta[k] = std::min(beta[k] * (1.0 + lambda[k] / weighted) / denom, max_pseudo_count);
    }
}

double class_posterior(std::span<const double> beta, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= beta.size()) throw std::out_of_range("class id out of range");
    double total = 0.0;
    for (double b : beta) total += b;
    return beta[k] / total;
}

double class_posterior(const BeliefGrid& grid, Cell c, int k) {
    if (!grid.catalog().is_known(k)) throw std::invalid_argument("class " + std::to_string(k) + " is not a target class");
    return class_posterior(grid.cell(c), k);
}

double multinomial_posterior(std::span<const double> beta, std::span<const int> counts) {
    if (beta.size() != counts.size()) throw std::invalid_argument("count vector has wrong dimension");
    double total = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < beta.size(); ++i) {
        if (counts[i] < 0) throw std::invalid_argument("negative count");
        total += beta[i];
        n += counts[i];
    }
    // log n! - n log(sum beta) + sum (n_i log beta_i - log n_i!)
    double log_p = std::lgamma(n + 1.0) - n * std::log(total);
    for (std::size_t i = 0; i < beta.size(); ++i) {
        log_p += counts[i] * std::log(beta[i]) - std::lgamma(counts[i] + 1.0);
    }
    return std::exp(log_p);
}

AttentionMap posterior_map(const BeliefGrid& grid, int k) {
    if (!grid.catalog().is_known(k)) throw std::invalid_argument("class " + std::to_string(k) + " is not a target class");
    AttentionMap map(grid.dims());
    for (std::size_t i = 0; i < grid.dims().cell_count(); ++i) {
        map.values[i] = class_posterior(grid.cell(grid.dims().cell_at(i)), k);
    }
    return map;
}

}  // namespace semba
