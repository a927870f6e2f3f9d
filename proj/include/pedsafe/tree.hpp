#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pedsafe/common.hpp"
#include "pedsafe/targets.hpp"

namespace pedsafe::tree {

/// Flat node of an axis-aligned binary tree. Internal nodes route
/// `row[feature] <= threshold` to `left`, everything else to `right`.
/// `cover` is the number of training rows (bootstrap multiplicity included)
/// that reached the node.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    double cover = 0.0;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    /// Index of the leaf reached by `row`.
    std::size_t leaf_for(std::span<const double> row) const;
    std::size_t depth() const;
    bool operator==(const Tree&) const = default;
};

inline constexpr std::size_t kUnlimitedDepth = std::numeric_limits<std::size_t>::max();

struct TreeParams {
    std::size_t max_depth = kUnlimitedDepth;
    std::size_t min_samples_leaf = 1;
    double min_impurity_decrease = 0.0;
    /// Candidate features drawn per split; 0 means all features.
    std::size_t feature_subsample = 0;

    void validate() const;
};

class EmptyNode : public Error {
public:
    using Error::Error;
};

class FeatureOutOfRange : public Error {
public:
    using Error::Error;
};

/// 1 - sum_c p_c^2 over (possibly weighted) class counts.
double gini(std::span<const double> counts);

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double decrease = 0.0;
};

/// Best Gini split of all rows of `rows`. Thresholds are midpoints between
/// consecutive distinct values; ties go to the lower feature index, then the
/// lower threshold. `weights` may be empty (all ones). `candidates` may be
/// empty (all features).
std::optional<Split> best_split(const Matrix& rows, std::span<const int> labels, const TreeParams& params,
                                std::span<const double> weights = {},
                                std::span<const std::size_t> candidates = {});

/// Row indices of each column sorted by (value, row index). Sharing one
/// instance across the trees of an ensemble avoids re-sorting.
struct SortedColumns {
    std::vector<std::vector<std::uint32_t>> order;
    static SortedColumns build(const Matrix& rows);
};

/// Gini tree; leaves hold the weighted positive fraction. `multiplicity`
/// (bootstrap counts, may be empty) scales both weight and cover.
Tree fit_tree(const Matrix& rows, std::span<const int> labels, const TreeParams& params,
              std::span<const double> weights, Rng& rng, std::span<const std::uint32_t> multiplicity = {},
              const SortedColumns* presorted = nullptr);

Tree fit_tree(const LabeledDataset& data, const TreeParams& params, std::span<const double> weights, Rng& rng);

/// Second-order regression tree on gradients/hessians: split gain
/// 0.5*[GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)], leaf weight -G/(H+l).
/// `params.min_impurity_decrease` is the minimum gain.
Tree fit_gradient_tree(const Matrix& rows, std::span<const double> gradients, std::span<const double> hessians,
                       const TreeParams& params, double l2_lambda, Rng& rng,
                       const SortedColumns* presorted = nullptr);

double predict_tree(const Tree& tree, std::span<const double> row);

nlohmann::json to_json(const Tree& tree);
Tree tree_from_json(const nlohmann::json& j);

}  // namespace pedsafe::tree
