#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pedsafe/ensemble.hpp"

namespace pedsafe::shap {

class MissingCover : public Error {
public:
    using Error::Error;
};

enum class OutputScale { Probability, LogOdds };
std::string_view to_string(OutputScale s);

struct TreeAttribution {
    double base_value = 0.0;
    std::vector<double> contributions;
};

/// Exact Shapley values of one tree under path-dependent (cover-weighted)
/// conditional expectations, computed in polynomial time by tracking the
/// proportion of feature subsets that flow down each path.
TreeAttribution shap_tree(const tree::Tree& tree, std::span<const double> instance);

/// Cover-weighted mean of the leaf values.
double expected_value(const tree::Tree& tree);

struct ShapExplanation {
    double base_value = 0.0;
    std::vector<double> contributions;
    double model_output = 0.0;
    OutputScale scale = OutputScale::Probability;
};

/// Forest: mean of member attributions on the probability scale.
/// Boosted: base_score plus learning-rate-scaled member attributions on the
/// raw log-odds scale.
ShapExplanation shap_ensemble(const ensemble::Model& model, std::span<const double> instance);

std::vector<ShapExplanation> explain_rows(const ensemble::Model& model, const Matrix& rows, unsigned threads = 1);

struct GlobalImportance {
    std::vector<std::string> feature_names;
    std::vector<double> mean_abs;       // per feature, input order
    std::vector<std::size_t> ranking;   // feature indices, most important first
};

GlobalImportance global_importance(const std::vector<ShapExplanation>& explanations,
                                   const std::vector<std::string>& feature_names);
GlobalImportance global_importance(const ensemble::Model& model, const LabeledDataset& data, unsigned threads = 1);

/// Long-form table (row_id, feature, feature_value, shap_value), features in
/// ranking order, rows in dataset order within each feature.
void beeswarm_export(std::ostream& out, const std::vector<ShapExplanation>& explanations, const LabeledDataset& data,
                     const GlobalImportance& importance);

nlohmann::json to_json(const GlobalImportance& g);
nlohmann::json to_json(const ShapExplanation& e, const std::vector<std::string>& feature_names);

}  // namespace pedsafe::shap
