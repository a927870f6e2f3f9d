#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pedsafe/resample.hpp"
#include "pedsafe/tree.hpp"

namespace pedsafe::ensemble {

inline constexpr int kModelSchemaVersion = 1;

/// Per-split feature count for forests: 0 means floor(sqrt(d)).
inline constexpr std::size_t kSqrtFeatures = 0;
/// Request every feature at every split.
inline constexpr std::size_t kAllFeatures = static_cast<std::size_t>(-1);

struct ForestParams {
    tree::TreeParams tree;
    std::size_t n_trees = 100;
    bool bootstrap = true;
    std::size_t max_features = kSqrtFeatures;

    void validate() const;
};

struct ForestModel {
    std::vector<tree::Tree> trees;
    ForestParams params;
    std::uint64_t seed = 0;
    std::vector<std::string> feature_names;
};

/// positive_weight value that resolves to negatives/positives of the
/// training data.
inline constexpr double kBalancedWeight = -1.0;

struct BoostParams {
    tree::TreeParams tree{6, 1, 0.0, 0};
    std::size_t rounds = 100;
    double learning_rate = 0.3;
    double l2_lambda = 1.0;
    /// Instance-weight multiplier for label-1 rows (the minority class of
    /// every target here).
    double positive_weight = 1.0;

    void validate() const;
};

inline constexpr double kRawScoreClip = 30.0;

struct BoostedModel {
    std::vector<tree::Tree> trees;  // leaves hold raw score increments
    double learning_rate = 0.3;
    double l2_lambda = 1.0;
    double base_score = 0.0;       // log-odds of the weighted positive rate
    double positive_weight = 1.0;  // resolved value actually used
    std::size_t n_rounds = 0;
    tree::TreeParams tree_params;
    std::vector<std::string> feature_names;
    /// Weighted training log-loss; entry 0 is the base score, entry r the loss
    /// after round r.
    std::vector<double> training_loss;

    /// base_score + eta * sum of tree outputs, unclipped.
    double raw_margin(std::span<const double> row) const;
};

ForestModel fit_forest(const LabeledDataset& train, const ForestParams& params, std::uint64_t seed,
                       unsigned threads = 1);
std::vector<double> predict_forest(const ForestModel& model, const Matrix& rows);
double predict_forest(const ForestModel& model, std::span<const double> row);

BoostedModel fit_boosted(const LabeledDataset& train, const BoostParams& params, std::uint64_t seed);
std::vector<double> predict_boosted(const BoostedModel& model, const Matrix& rows);
double predict_boosted(const BoostedModel& model, std::span<const double> row);

double weighted_log_loss(std::span<const int> labels, std::span<const double> probabilities,
                         std::span<const double> weights);

using Model = std::variant<ForestModel, BoostedModel>;

std::vector<double> predict(const Model& model, const Matrix& rows);
const std::vector<std::string>& feature_names(const Model& model);

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

enum class ModelKind { Forest, Boosted };
std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

enum class SelectionMetric { Accuracy, RocAuc, F1Minority };
std::string_view to_string(SelectionMetric m);
SelectionMetric parse_selection_metric(std::string_view s);

struct GridSpec {
    std::vector<std::size_t> n_trees;  // trees (forest) or rounds (boosted)
    std::vector<std::size_t> max_depth;
    std::vector<std::size_t> min_samples_leaf;
    std::vector<double> learning_rate;
    std::vector<double> l2_lambda;
    std::vector<double> positive_weight;
    SelectionMetric metric = SelectionMetric::RocAuc;
    double holdout_fraction = 0.2;
    std::size_t k_folds = 0;  // >= 2 switches from holdout to k-fold
    double threshold = 0.5;
    std::optional<resample::SmoteConfig> smote;
    bool include_base = false;  // score the base parameters as cell 0

    static GridSpec default_forest();
    static GridSpec default_boosted();
};

struct Candidate {
    ModelKind kind = ModelKind::Forest;
    ForestParams forest;
    BoostParams boosted;

    std::string describe() const;
};

/// Cartesian product in a fixed order (n_trees outermost, then max_depth,
/// min_samples_leaf, learning_rate, l2_lambda, positive_weight). Empty axes
/// keep the base value. Axes that do not apply to the model kind are ignored.
std::vector<Candidate> expand_grid(const GridSpec& spec, ModelKind kind, const ForestParams& base_forest = {},
                                   const BoostParams& base_boosted = {});

struct LeaderboardRow {
    std::size_t index = 0;
    Candidate candidate;
    double score = 0.0;
    bool ok = true;
    std::string error;
    bool validation_untouched = true;
};

struct GridResult {
    std::size_t best_index = 0;
    Candidate best;
    std::vector<LeaderboardRow> leaderboard;
};

/// Scores every candidate on a stratified holdout (or k folds) of `train`.
/// SMOTE, when configured, is applied to each training fold only. The best
/// score wins; ties go to the earlier candidate.
GridResult grid_search(const LabeledDataset& train, const GridSpec& spec, ModelKind kind, std::uint64_t seed,
                       unsigned threads = 1, const ForestParams& base_forest = {},
                       const BoostParams& base_boosted = {});

Model fit_candidate(const LabeledDataset& train, const Candidate& c, std::uint64_t seed, unsigned threads = 1);

void write_leaderboard(std::ostream& out, const GridResult& result);

}  // namespace pedsafe::ensemble
