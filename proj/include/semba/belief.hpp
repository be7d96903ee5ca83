#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "semba/attention_map.hpp"
#include "semba/types.hpp"

namespace semba {

/// Class labels known to the detector, plus the subset eligible as search targets.
/// Class ids are 0-based indices into `names`.
class ClassCatalog {
public:
    /// `known` empty means every class is a valid target.
    explicit ClassCatalog(std::vector<std::string> names, std::vector<int> known = {});

    /// Catalog with names "0".."K-1".
    static ClassCatalog numbered(int class_count);

    int size() const { return static_cast<int>(names_.size()); }
    const std::string& name(int k) const { return names_.at(k); }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<int>& known() const { return known_; }
    bool is_known(int k) const;
    std::optional<int> find(std::string_view name) const;

private:
    std::vector<std::string> names_;
    std::vector<int> known_;
};

/// Per-class observation likelihoods. Non-negative, finite, at least one entry > 0.
/// Only ratios matter to the fusion rule.
class LikelihoodVector {
public:
    explicit LikelihoodVector(std::vector<double> lambda);
    std::span<const double> values() const { return lambda_; }
    std::size_t size() const { return lambda_.size(); }

private:
    std::vector<double> lambda_;
};

/// Grid of Dirichlet pseudo-count vectors, one per cell. Starts at the flat prior (all ones).
/// Single writer or many readers; no internal locking.
class BeliefGrid {
public:
    static constexpr double kDefaultMaxPseudoCount = 1e6;

    BeliefGrid(GridDims dims, ClassCatalog catalog, double max_pseudo_count = kDefaultMaxPseudoCount);

    GridDims dims() const { return dims_; }
    int class_count() const { return catalog_.size(); }
    const ClassCatalog& catalog() const { return catalog_; }
    double max_pseudo_count() const { return max_pseudo_count_; }

    std::span<const double> cell(Cell c) const;
    std::span<const double> raw() const { return beta_; }

    /// Overwrites one cell; all entries must be finite and > 0.
    void set_cell(Cell c, std::span<const double> beta);

    /// Fuses one observation into one cell (see kaplan_update below).
    void update(Cell c, const LikelihoodVector& lambda);

    /// {rows, cols, K, beta}; beta is row-major flat of length rows*cols*K.
    nlohmann::json to_json() const;
    static BeliefGrid from_json(const nlohmann::json& j, const ClassCatalog& catalog);

private:
    std::span<double> mutable_cell(Cell c);
    void check_cell(Cell c) const;

    GridDims dims_;
    ClassCatalog catalog_;
    double max_pseudo_count_;
    std::vector<double> beta_;
};

BeliefGrid new_belief_grid(int rows, int cols, const ClassCatalog& catalog);

/// Kaplan's subjective-logic fusion of a likelihood vector into Dirichlet pseudo-counts:
///   beta_k <- beta_k (1 + lambda_k / S) / (1 + min_i lambda_i / S),  S = sum_j beta_j lambda_j.
/// Entries are clamped to `max_pseudo_count` afterwards.
void kaplan_update(std::span<double> beta, std::span<const double> lambda,
                   double max_pseudo_count = BeliefGrid::kDefaultMaxPseudoCount);

inline void kaplan_update(BeliefGrid& grid, Cell c, const LikelihoodVector& lambda) { grid.update(c, lambda); }

/// P(C = k | beta) for a single observation: beta_k / sum(beta).
double class_posterior(std::span<const double> beta, int k);
double class_posterior(const BeliefGrid& grid, Cell c, int k);

/// General multinomial form n! / (sum beta)^n * prod beta_i^{n_i} / n_i!. With counts equal to
/// the unit vector e_k it reduces to class_posterior. Used for checking the single-trial form.
double multinomial_posterior(std::span<const double> beta, std::span<const int> counts);

/// Posterior of class k in every cell. Throws if k is not a known target class.
AttentionMap posterior_map(const BeliefGrid& grid, int k);

}  // namespace semba
