#include "pedsafe/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pedsafe/csv.hpp"
#include "pedsafe/metrics.hpp"

namespace pedsafe::ensemble {

namespace {

std::size_t resolve_max_features(std::size_t max_features, std::size_t d) {
    if (max_features == kSqrtFeatures)
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
    if (max_features == kAllFeatures || max_features >= d) return 0;
    return max_features;
}

double resolve_positive_weight(double requested, const LabeledDataset& train) {
    if (requested != kBalancedWeight) return requested;
    const double pos = static_cast<double>(train.positives());
    const double neg = static_cast<double>(train.size()) - pos;
    if (pos == 0.0) throw ModelError("balanced weight needs at least one positive row");
    return neg / pos;
}

nlohmann::json depth_json(std::size_t depth) {
    return depth == tree::kUnlimitedDepth ? nlohmann::json(nullptr) : nlohmann::json(depth);
}

std::size_t depth_from_json(const nlohmann::json& j) {
    return j.is_null() ? tree::kUnlimitedDepth : j.get<std::size_t>();
}

nlohmann::json tree_params_json(const tree::TreeParams& p) {
    return {{"max_depth", depth_json(p.max_depth)},
            {"min_samples_leaf", p.min_samples_leaf},
            {"min_impurity_decrease", p.min_impurity_decrease},
            {"feature_subsample", p.feature_subsample}};
}

tree::TreeParams tree_params_from_json(const nlohmann::json& j) {
    tree::TreeParams p;
    p.max_depth = depth_from_json(j.at("max_depth"));
    p.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    p.min_impurity_decrease = j.at("min_impurity_decrease").get<double>();
    p.feature_subsample = j.at("feature_subsample").get<std::size_t>();
    return p;
}

std::string depth_text(std::size_t d) { return d == tree::kUnlimitedDepth ? "none" : std::to_string(d); }

double score(SelectionMetric metric, std::span<const int> labels, std::span<const double> probs, double threshold) {
    switch (metric) {
        case SelectionMetric::RocAuc: return metrics::roc_auc(labels, probs);
        case SelectionMetric::Accuracy: {
            const auto c = metrics::confusion(labels, probs, threshold);
            return static_cast<double>(c.tp + c.tn) / static_cast<double>(labels.size());
        }
        case SelectionMetric::F1Minority: {
            const auto c = metrics::confusion(labels, probs, threshold);
            const double p = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
            const double r = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
            return metrics::f1_score(p, r);
        }
    }
    return 0.0;
}

}  // namespace

void ForestParams::validate() const {
    tree.validate();
    if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
}

void BoostParams::validate() const {
    tree.validate();
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("learning_rate must lie in (0, 1]");
    if (!(l2_lambda >= 0.0)) throw ConfigError("l2_lambda must be >= 0");
    if (!(positive_weight > 0.0) && positive_weight != kBalancedWeight)
        throw ConfigError("positive_weight must be > 0 or 'balanced'");
}

ForestModel fit_forest(const LabeledDataset& train, const ForestParams& params, std::uint64_t seed, unsigned threads) {
    params.validate();
    train.validate();
    ForestModel model;
    model.params = params;
    model.seed = seed;
    model.feature_names = train.feature_names;
    tree::TreeParams tp = params.tree;
    tp.feature_subsample = resolve_max_features(params.max_features, train.width());
    model.params.tree.feature_subsample = tp.feature_subsample;

    const auto presorted = tree::SortedColumns::build(train.rows);
    model.trees.resize(params.n_trees);
    const std::size_t n = train.size();
    parallel_for(params.n_trees, threads, [&](std::size_t t) {
        Rng rng(seed, "forest-tree", t);
        std::vector<std::uint32_t> counts;
        if (params.bootstrap) {
            Rng boot(seed, "forest-bootstrap", t);
            counts.assign(n, 0);
            for (std::size_t i = 0; i < n; ++i) ++counts[boot.below(n)];
        }
        model.trees[t] = tree::fit_tree(train.rows, train.labels, tp, {}, rng, counts, &presorted);
    });
    return model;
}

double predict_forest(const ForestModel& model, std::span<const double> row) {
    if (model.trees.empty()) throw ModelError("forest has no trees");
    double sum = 0.0;
    for (const auto& t : model.trees) sum += tree::predict_tree(t, row);
    return sum / static_cast<double>(model.trees.size());
}

std::vector<double> predict_forest(const ForestModel& model, const Matrix& rows) {
    std::vector<double> out(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) out[i] = predict_forest(model, rows.row(i));
    return out;
}

double BoostedModel::raw_margin(std::span<const double> row) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += tree::predict_tree(t, row);
    return base_score + learning_rate * sum;
}

double predict_boosted(const BoostedModel& model, std::span<const double> row) {
    return sigmoid(std::clamp(model.raw_margin(row), -kRawScoreClip, kRawScoreClip));
}

std::vector<double> predict_boosted(const BoostedModel& model, const Matrix& rows) {
    std::vector<double> out(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) out[i] = predict_boosted(model, rows.row(i));
    return out;
}

double weighted_log_loss(std::span<const int> labels, std::span<const double> probs, std::span<const double> weights) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        const double p = std::clamp(probs[i], 1e-15, 1.0 - 1e-15);
        num += w * (labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p));
        den += w;
    }
    return den > 0.0 ? num / den : 0.0;
}

BoostedModel fit_boosted(const LabeledDataset& train, const BoostParams& params, std::uint64_t seed) {
    params.validate();
    train.validate();
    const std::size_t n = train.size();
    BoostedModel model;
    model.learning_rate = params.learning_rate;
    model.l2_lambda = params.l2_lambda;
    model.positive_weight = resolve_positive_weight(params.positive_weight, train);
    model.n_rounds = params.rounds;
    model.tree_params = params.tree;
    model.feature_names = train.feature_names;

    std::vector<double> w(n);
    double wpos = 0.0, wneg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = train.labels[i] == 1 ? model.positive_weight : 1.0;
        (train.labels[i] == 1 ? wpos : wneg) += w[i];
    }
    if (wpos <= 0.0 || wneg <= 0.0) throw ModelError("boosting needs both classes with positive weight");
    model.base_score = std::clamp(std::log(wpos / wneg), -kRawScoreClip, kRawScoreClip);

    const auto presorted = tree::SortedColumns::build(train.rows);
    std::vector<double> raw(n, model.base_score), prob(n), g(n), h(n);
    auto refresh = [&] {
        for (std::size_t i = 0; i < n; ++i) prob[i] = sigmoid(std::clamp(raw[i], -kRawScoreClip, kRawScoreClip));
    };
    refresh();
    model.training_loss.push_back(weighted_log_loss(train.labels, prob, w));

    for (std::size_t round = 0; round < params.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = w[i] * (prob[i] - train.labels[i]);
            h[i] = w[i] * prob[i] * (1.0 - prob[i]);
        }
        Rng rng(seed, "boost-round", round);
        tree::Tree t = tree::fit_gradient_tree(train.rows, g, h, params.tree, params.l2_lambda, rng, &presorted);
        for (std::size_t i = 0; i < n; ++i) raw[i] += params.learning_rate * tree::predict_tree(t, train.rows.row(i));
        refresh();
        model.training_loss.push_back(weighted_log_loss(train.labels, prob, w));
        model.trees.push_back(std::move(t));
    }
    return model;
}

std::vector<double> predict(const Model& model, const Matrix& rows) {
    return std::visit(
        [&](const auto& m) {
            if constexpr (std::is_same_v<std::decay_t<decltype(m)>, ForestModel>)
                return predict_forest(m, rows);
            else
                return predict_boosted(m, rows);
        },
        model);
}

const std::vector<std::string>& feature_names(const Model& model) {
    return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.feature_names; }, model);
}

nlohmann::json to_json(const Model& model) {
    nlohmann::json j;
    j["schema_version"] = kModelSchemaVersion;
    nlohmann::json trees = nlohmann::json::array();
    if (const auto* f = std::get_if<ForestModel>(&model)) {
        j["kind"] = "forest";
        j["feature_names"] = f->feature_names;
        j["seed"] = f->seed;
        j["params"] = {{"tree", tree_params_json(f->params.tree)},
                       {"n_trees", f->params.n_trees},
                       {"bootstrap", f->params.bootstrap},
                       {"max_features", f->params.max_features == kAllFeatures ? nlohmann::json("all")
                                                                                : nlohmann::json(f->params.max_features)}};
        for (const auto& t : f->trees) trees.push_back(tree::to_json(t));
    } else {
        const auto& b = std::get<BoostedModel>(model);
        j["kind"] = "boosted";
        j["feature_names"] = b.feature_names;
        j["learning_rate"] = b.learning_rate;
        j["l2_lambda"] = b.l2_lambda;
        j["base_score"] = b.base_score;
        j["positive_weight"] = b.positive_weight;
        j["n_rounds"] = b.n_rounds;
        j["tree_params"] = tree_params_json(b.tree_params);
        j["training_loss"] = b.training_loss;
        for (const auto& t : b.trees) trees.push_back(tree::to_json(t));
    }
    j["trees"] = trees;
    return j;
}

Model model_from_json(const nlohmann::json& j) {
    if (j.value("schema_version", 0) != kModelSchemaVersion) throw ModelError("unsupported model schema version");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "forest") {
        ForestModel f;
        f.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        f.seed = j.at("seed").get<std::uint64_t>();
        const auto& p = j.at("params");
        f.params.tree = tree_params_from_json(p.at("tree"));
        f.params.n_trees = p.at("n_trees").get<std::size_t>();
        f.params.bootstrap = p.at("bootstrap").get<bool>();
        f.params.max_features = p.at("max_features").is_string() ? kAllFeatures : p.at("max_features").get<std::size_t>();
        for (const auto& t : j.at("trees")) f.trees.push_back(tree::tree_from_json(t));
        return f;
    }
    if (kind == "boosted") {
        BoostedModel b;
        b.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        b.learning_rate = j.at("learning_rate").get<double>();
        b.l2_lambda = j.at("l2_lambda").get<double>();
        b.base_score = j.at("base_score").get<double>();
        b.positive_weight = j.at("positive_weight").get<double>();
        b.n_rounds = j.at("n_rounds").get<std::size_t>();
        b.tree_params = tree_params_from_json(j.at("tree_params"));
        b.training_loss = j.value("training_loss", std::vector<double>{});
        for (const auto& t : j.at("trees")) b.trees.push_back(tree::tree_from_json(t));
        return b;
    }
    throw ModelError("unknown model kind '" + kind + "'");
}

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << to_json(model).dump() << '\n';
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model " + path);
    return model_from_json(nlohmann::json::parse(in));
}

std::string_view to_string(ModelKind k) { return k == ModelKind::Forest ? "forest" : "boosted"; }

ModelKind parse_model_kind(std::string_view s) {
    if (s == "forest" || s == "random_forest") return ModelKind::Forest;
    if (s == "boosted" || s == "gbt" || s == "xgboost") return ModelKind::Boosted;
    throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

std::string_view to_string(SelectionMetric m) {
    switch (m) {
        case SelectionMetric::Accuracy: return "accuracy";
        case SelectionMetric::RocAuc: return "roc_auc";
        case SelectionMetric::F1Minority: return "f1_minority";
    }
    return "roc_auc";
}

SelectionMetric parse_selection_metric(std::string_view s) {
    if (s == "accuracy") return SelectionMetric::Accuracy;
    if (s == "roc_auc") return SelectionMetric::RocAuc;
    if (s == "f1_minority") return SelectionMetric::F1Minority;
    throw ConfigError("unknown selection metric '" + std::string(s) + "'");
}

GridSpec GridSpec::default_forest() {
    GridSpec g;
    g.n_trees = {100, 300};
    g.max_depth = {tree::kUnlimitedDepth, 10, 20};
    g.min_samples_leaf = {1, 5};
    return g;
}

GridSpec GridSpec::default_boosted() {
    GridSpec g;
    g.n_trees = {100, 300};
    g.max_depth = {3, 6};
    g.learning_rate = {0.1, 0.3};
    g.l2_lambda = {1.0, 10.0};
    g.positive_weight = {1.0, kBalancedWeight};
    return g;
}

std::string Candidate::describe() const {
    std::ostringstream s;
    if (kind == ModelKind::Forest) {
        s << "n_trees=" << forest.n_trees << " max_depth=" << depth_text(forest.tree.max_depth)
          << " min_samples_leaf=" << forest.tree.min_samples_leaf;
    } else {
        s << "rounds=" << boosted.rounds << " max_depth=" << depth_text(boosted.tree.max_depth)
          << " min_samples_leaf=" << boosted.tree.min_samples_leaf << " learning_rate=" << boosted.learning_rate
          << " l2_lambda=" << boosted.l2_lambda << " positive_weight="
          << (boosted.positive_weight == kBalancedWeight ? std::string("balanced")
                                                         : format_double(boosted.positive_weight));
    }
    return s.str();
}

std::vector<Candidate> expand_grid(const GridSpec& spec, ModelKind kind, const ForestParams& base_forest,
                                   const BoostParams& base_boosted) {
    const bool boosted = kind == ModelKind::Boosted;
    auto or_base = []<typename T>(const std::vector<T>& axis, T base) {
        return axis.empty() ? std::vector<T>{base} : axis;
    };
    const auto trees = or_base(spec.n_trees, boosted ? base_boosted.rounds : base_forest.n_trees);
    const auto depths = or_base(spec.max_depth, boosted ? base_boosted.tree.max_depth : base_forest.tree.max_depth);
    const auto leaves =
        or_base(spec.min_samples_leaf, boosted ? base_boosted.tree.min_samples_leaf : base_forest.tree.min_samples_leaf);
    const auto rates = boosted ? or_base(spec.learning_rate, base_boosted.learning_rate) : std::vector<double>{0.0};
    const auto lambdas = boosted ? or_base(spec.l2_lambda, base_boosted.l2_lambda) : std::vector<double>{0.0};
    const auto weights = boosted ? or_base(spec.positive_weight, base_boosted.positive_weight) : std::vector<double>{0.0};

    std::vector<Candidate> out;
    for (auto nt : trees)
        for (auto depth : depths)
            for (auto leaf : leaves)
                for (double rate : rates)
                    for (double lambda : lambdas)
                        for (double weight : weights) {
                            Candidate c;
                            c.kind = kind;
                            c.forest = base_forest;
                            c.boosted = base_boosted;
                            if (boosted) {
                                c.boosted.rounds = nt;
                                c.boosted.tree.max_depth = depth;
                                c.boosted.tree.min_samples_leaf = leaf;
                                c.boosted.learning_rate = rate;
                                c.boosted.l2_lambda = lambda;
                                c.boosted.positive_weight = weight;
                            } else {
                                c.forest.n_trees = nt;
                                c.forest.tree.max_depth = depth;
                                c.forest.tree.min_samples_leaf = leaf;
                            }
                            out.push_back(c);
                        }
    return out;
}

Model fit_candidate(const LabeledDataset& train, const Candidate& c, std::uint64_t seed, unsigned threads) {
    if (c.kind == ModelKind::Forest) return fit_forest(train, c.forest, seed, threads);
    return fit_boosted(train, c.boosted, seed);
}

GridResult grid_search(const LabeledDataset& train, const GridSpec& spec, ModelKind kind, std::uint64_t seed,
                       unsigned threads, const ForestParams& base_forest, const BoostParams& base_boosted) {
    auto candidates = expand_grid(spec, kind, base_forest, base_boosted);
    if (candidates.empty()) throw ConfigError("grid is empty");
    if (spec.include_base) {
        Candidate base;
        base.kind = kind;
        base.forest = base_forest;
        base.boosted = base_boosted;
        candidates.insert(candidates.begin(), base);
    }

    struct Fold {
        LabeledDataset fit;
        LabeledDataset validation;
        std::uint64_t validation_checksum = 0;
    };
    std::vector<Fold> folds;
    auto add_fold = [&](std::vector<std::size_t> fit_idx, const std::vector<std::size_t>& val_idx, std::size_t f) {
        Fold fold;
        fold.fit = train.subset(fit_idx);
        fold.validation = train.subset(val_idx);
        if (spec.smote) {
            auto cfg = *spec.smote;
            cfg.seed = Rng(seed, "grid-smote", f).next_u64();
            fold.fit = resample::smote(fold.fit, cfg, threads).data;
        }
        fold.validation_checksum = checksum(fold.validation.rows.data());
        folds.push_back(std::move(fold));
    };
    if (spec.k_folds >= 2) {
        const auto parts = resample::stratified_folds(train, spec.k_folds, Rng(seed, "grid-folds").next_u64());
        for (std::size_t f = 0; f < parts.size(); ++f) {
            std::vector<std::size_t> fit_idx;
            for (std::size_t g = 0; g < parts.size(); ++g)
                if (g != f) fit_idx.insert(fit_idx.end(), parts[g].begin(), parts[g].end());
            std::sort(fit_idx.begin(), fit_idx.end());
            add_fold(std::move(fit_idx), parts[f], f);
        }
    } else {
        const auto split =
            resample::stratified_split(train, spec.holdout_fraction, Rng(seed, "grid-holdout").next_u64());
        add_fold(split.train_indices, split.test_indices, 0);
    }

    GridResult result;
    result.leaderboard.resize(candidates.size());
    parallel_for(candidates.size(), threads, [&](std::size_t ci) {
        LeaderboardRow& row = result.leaderboard[ci];
        row.index = ci;
        row.candidate = candidates[ci];
        try {
            double total = 0.0;
            for (std::size_t f = 0; f < folds.size(); ++f) {
                const auto& fold = folds[f];
                const Model m = fit_candidate(fold.fit, candidates[ci], Rng(seed, "grid-cell", ci).next_u64(), 1);
                const auto probs = predict(m, fold.validation.rows);
                total += score(spec.metric, fold.validation.labels, probs, spec.threshold);
                if (checksum(fold.validation.rows.data()) != fold.validation_checksum) row.validation_untouched = false;
            }
            row.score = total / static_cast<double>(folds.size());
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
            row.score = std::numeric_limits<double>::quiet_NaN();
        }
    });

    bool found = false;
    for (const auto& row : result.leaderboard) {
        if (!row.ok) continue;
        if (!found || row.score > result.leaderboard[result.best_index].score) {
            result.best_index = row.index;
            found = true;
        }
    }
    if (!found) throw ModelError("every grid cell failed: " + result.leaderboard.front().error);
    result.best = result.leaderboard[result.best_index].candidate;
    return result;
}

void write_leaderboard(std::ostream& out, const GridResult& result) {
    csv::write_row(out, {"index", "params", "score", "ok", "error", "validation_untouched", "best"});
    for (const auto& row : result.leaderboard)
        csv::write_row(out, {std::to_string(row.index), row.candidate.describe(),
                             row.ok ? format_double(row.score) : "", row.ok ? "1" : "0", row.error,
                             row.validation_untouched ? "1" : "0", row.index == result.best_index ? "1" : "0"});
}

}  // namespace pedsafe::ensemble
