#include "pedsafe/shap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "pedsafe/csv.hpp"

namespace pedsafe::shap {

namespace {

struct PathElement {
    int feature = -1;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double weight = 0.0;
};

using Path = std::vector<PathElement>;

void extend(Path& path, std::size_t depth, double zero_fraction, double one_fraction, int feature) {
    path.resize(depth + 1);
    path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
    const double denom = static_cast<double>(depth + 1);
    for (std::size_t i = depth; i-- > 0;) {
        path[i + 1].weight += one_fraction * path[i].weight * static_cast<double>(i + 1) / denom;
        path[i].weight = zero_fraction * path[i].weight * static_cast<double>(depth - i) / denom;
    }
}

void unwind(Path& path, std::size_t depth, std::size_t index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    const double denom = static_cast<double>(depth + 1);
    double next_one = path[depth].weight;
    for (std::size_t i = depth; i-- > 0;) {
        if (one != 0.0) {
            const double tmp = path[i].weight;
            path[i].weight = next_one * denom / (static_cast<double>(i + 1) * one);
            next_one = tmp - path[i].weight * zero * static_cast<double>(depth - i) / denom;
        } else {
            path[i].weight = path[i].weight * denom / (zero * static_cast<double>(depth - i));
        }
    }
    for (std::size_t i = index; i < depth; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.resize(depth);
}

double unwound_sum(const Path& path, std::size_t depth, std::size_t index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    const double denom = static_cast<double>(depth + 1);
    double next_one = path[depth].weight;
    double total = 0.0;
    for (std::size_t i = depth; i-- > 0;) {
        if (one != 0.0) {
            const double tmp = next_one * denom / (static_cast<double>(i + 1) * one);
            total += tmp;
            next_one = path[i].weight - tmp * zero * static_cast<double>(depth - i) / denom;
        } else {
            total += path[i].weight / zero / (static_cast<double>(depth - i) / denom);
        }
    }
    return total;
}

void recurse(const tree::Tree& t, std::size_t node, std::span<const double> x, std::vector<double>& phi, Path path,
             std::size_t depth, double zero_fraction, double one_fraction, int feature) {
    extend(path, depth, zero_fraction, one_fraction, feature);
    const auto& n = t.nodes[node];
    if (n.is_leaf()) {
        for (std::size_t i = 1; i <= depth; ++i) {
            const double w = unwound_sum(path, depth, i);
            const auto& el = path[i];
            phi[static_cast<std::size_t>(el.feature)] += w * (el.one_fraction - el.zero_fraction) * n.value;
        }
        return;
    }
    const auto f = static_cast<std::size_t>(n.feature);
    if (f >= x.size()) throw tree::FeatureOutOfRange("tree references a feature beyond the instance width");
    const auto hot = static_cast<std::size_t>(x[f] <= n.threshold ? n.left : n.right);
    const auto cold = static_cast<std::size_t>(x[f] <= n.threshold ? n.right : n.left);
    const double hot_zero = t.nodes[hot].cover / n.cover;
    const double cold_zero = t.nodes[cold].cover / n.cover;

    double incoming_zero = 1.0;
    double incoming_one = 1.0;
    for (std::size_t k = 1; k <= depth; ++k) {
        if (path[k].feature == n.feature) {
            incoming_zero = path[k].zero_fraction;
            incoming_one = path[k].one_fraction;
            unwind(path, depth, k);
            --depth;
            break;
        }
    }
    recurse(t, hot, x, phi, path, depth + 1, hot_zero * incoming_zero, incoming_one, n.feature);
    recurse(t, cold, x, phi, path, depth + 1, cold_zero * incoming_zero, 0.0, n.feature);
}

void check_cover(const tree::Tree& t) {
    if (t.nodes.empty()) throw ModelError("empty tree");
    for (const auto& n : t.nodes)
        if (!(n.cover > 0.0)) throw MissingCover("tree node without positive cover");
}

}  // namespace

std::string_view to_string(OutputScale s) { return s == OutputScale::Probability ? "probability" : "log_odds"; }

double expected_value(const tree::Tree& t) {
    check_cover(t);
    double sum = 0.0;
    for (const auto& n : t.nodes)
        if (n.is_leaf()) sum += n.cover * n.value;
    return sum / t.nodes[0].cover;
}

TreeAttribution shap_tree(const tree::Tree& t, std::span<const double> instance) {
    check_cover(t);
    TreeAttribution out;
    out.base_value = expected_value(t);
    out.contributions.assign(instance.size(), 0.0);
    recurse(t, 0, instance, out.contributions, {}, 0, 1.0, 1.0, -1);
    return out;
}

ShapExplanation shap_ensemble(const ensemble::Model& model, std::span<const double> instance) {
    ShapExplanation e;
    e.contributions.assign(instance.size(), 0.0);
    if (const auto* f = std::get_if<ensemble::ForestModel>(&model)) {
        if (f->trees.empty()) throw ModelError("forest has no trees");
        e.scale = OutputScale::Probability;
        double base = 0.0;
        for (const auto& t : f->trees) {
            const auto a = shap_tree(t, instance);
            base += a.base_value;
            for (std::size_t j = 0; j < a.contributions.size(); ++j) e.contributions[j] += a.contributions[j];
        }
        const double k = static_cast<double>(f->trees.size());
        e.base_value = base / k;
        for (double& c : e.contributions) c /= k;
        e.model_output = ensemble::predict_forest(*f, instance);
    } else {
        const auto& b = std::get<ensemble::BoostedModel>(model);
        e.scale = OutputScale::LogOdds;
        double base = 0.0;
        for (const auto& t : b.trees) {
            const auto a = shap_tree(t, instance);
            base += a.base_value;
            for (std::size_t j = 0; j < a.contributions.size(); ++j) e.contributions[j] += a.contributions[j];
        }
        e.base_value = b.base_score + b.learning_rate * base;
        for (double& c : e.contributions) c *= b.learning_rate;
        e.model_output = b.raw_margin(instance);
    }
    return e;
}

std::vector<ShapExplanation> explain_rows(const ensemble::Model& model, const Matrix& rows, unsigned threads) {
    std::vector<ShapExplanation> out(rows.rows());
    parallel_for(rows.rows(), threads, [&](std::size_t i) { out[i] = shap_ensemble(model, rows.row(i)); });
    return out;
}

GlobalImportance global_importance(const std::vector<ShapExplanation>& explanations,
                                   const std::vector<std::string>& feature_names) {
    if (explanations.empty()) throw Error("global_importance: empty evaluation set");
    GlobalImportance g;
    g.feature_names = feature_names;
    g.mean_abs.assign(feature_names.size(), 0.0);
    for (const auto& e : explanations)
        for (std::size_t j = 0; j < g.mean_abs.size(); ++j) g.mean_abs[j] += std::abs(e.contributions[j]);
    for (double& v : g.mean_abs) v /= static_cast<double>(explanations.size());
    g.ranking.resize(g.mean_abs.size());
    std::iota(g.ranking.begin(), g.ranking.end(), 0);
    std::stable_sort(g.ranking.begin(), g.ranking.end(),
                     [&](std::size_t a, std::size_t b) { return g.mean_abs[a] > g.mean_abs[b]; });
    return g;
}

GlobalImportance global_importance(const ensemble::Model& model, const LabeledDataset& data, unsigned threads) {
    return global_importance(explain_rows(model, data.rows, threads), data.feature_names);
}

void beeswarm_export(std::ostream& out, const std::vector<ShapExplanation>& explanations, const LabeledDataset& data,
                     const GlobalImportance& importance) {
    csv::write_row(out, {"row_id", "feature", "feature_value", "shap_value"});
    for (std::size_t j : importance.ranking)
        for (std::size_t i = 0; i < explanations.size(); ++i)
            csv::write_row(out, {data.row_ids.empty() ? std::to_string(i) : data.row_ids[i], data.feature_names[j],
                                 format_double(data.rows.at(i, j)), format_double(explanations[i].contributions[j])});
}

nlohmann::json to_json(const GlobalImportance& g) {
    nlohmann::json ranking = nlohmann::json::array();
    for (std::size_t r = 0; r < g.ranking.size(); ++r) {
        const std::size_t j = g.ranking[r];
        ranking.push_back({{"rank", r + 1}, {"feature", g.feature_names[j]}, {"mean_abs_shap", g.mean_abs[j]}});
    }
    return {{"ranking", ranking}};
}

nlohmann::json to_json(const ShapExplanation& e, const std::vector<std::string>& feature_names) {
    nlohmann::json contrib = nlohmann::json::object();
    for (std::size_t j = 0; j < feature_names.size(); ++j) contrib[feature_names[j]] = e.contributions[j];
    return {{"base_value", e.base_value},
            {"model_output", e.model_output},
            {"scale", to_string(e.scale)},
            {"contributions", contrib}};
}

}  // namespace pedsafe::shap
