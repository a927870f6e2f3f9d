#include "pedsafe/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace pedsafe::tree {

namespace {

struct Stats {
    double a = 0.0;      // weight (gini) or hessian sum (gradient)
    double b = 0.0;      // weighted positives (gini) or gradient sum
    double count = 0.0;  // training rows, multiplicity included

    Stats operator-(const Stats& o) const { return {a - o.a, b - o.b, count - o.count}; }
    void operator+=(const Stats& o) {
        a += o.a;
        b += o.b;
        count += o.count;
    }
};

struct GiniCriterion {
    std::span<const int> labels;
    std::span<const double> weights;
    std::span<const std::uint32_t> multiplicity;

    Stats row(std::size_t r) const {
        const double m = multiplicity.empty() ? 1.0 : multiplicity[r];
        const double w = (weights.empty() ? 1.0 : weights[r]) * m;
        return {w, labels[r] == 1 ? w : 0.0, m};
    }
    static double impurity(const Stats& s) {
        if (s.a <= 0.0) return 0.0;
        const double counts[2] = {s.a - s.b, s.b};
        return gini(counts);
    }
    double gain(const Stats& parent, const Stats& left, const Stats& right) const {
        if (left.a <= 0.0 || right.a <= 0.0) return 0.0;
        return impurity(parent) - (left.a / parent.a) * impurity(left) - (right.a / parent.a) * impurity(right);
    }
    double leaf(const Stats& s) const { return s.a > 0.0 ? s.b / s.a : 0.0; }
    bool splittable(const Stats& s) const { return impurity(s) > 0.0; }
};

struct GradientCriterion {
    std::span<const double> gradients;
    std::span<const double> hessians;
    double lambda = 0.0;

    Stats row(std::size_t r) const { return {hessians[r], gradients[r], 1.0}; }
    double term(const Stats& s) const {
        const double denom = s.a + lambda;
        return denom > 0.0 ? s.b * s.b / denom : 0.0;
    }
    double gain(const Stats& parent, const Stats& left, const Stats& right) const {
        return 0.5 * (term(left) + term(right) - term(parent));
    }
    double leaf(const Stats& s) const {
        const double denom = s.a + lambda;
        return denom > 0.0 ? -s.b / denom : 0.0;
    }
    bool splittable(const Stats&) const { return true; }
};

// Gains at or below this are treated as rounding noise.
constexpr double kMinGain = 1e-12;

bool better(double gain, double best) { return gain > best + 1e-12 * std::max(1.0, std::abs(best)); }

template <typename Criterion>
class Grower {
public:
    Grower(const Matrix& x, const Criterion& crit, const TreeParams& params, Rng* rng,
           std::span<const std::uint32_t> multiplicity, const SortedColumns* presorted)
        : x_(x), crit_(crit), params_(params), rng_(rng), left_flag_(x.rows(), 0) {
        SortedColumns local;
        if (!presorted) {
            local = SortedColumns::build(x);
            presorted = &local;
        }
        cols_.resize(x.cols());
        for (std::size_t f = 0; f < x.cols(); ++f) {
            const auto& order = presorted->order[f];
            cols_[f].reserve(order.size());
            for (std::uint32_t r : order)
                if (multiplicity.empty() || multiplicity[r] > 0) cols_[f].push_back(r);
        }
        buffer_.resize(cols_.empty() ? 0 : cols_[0].size());
    }

    std::size_t active_rows() const { return cols_.empty() ? 0 : cols_[0].size(); }

    Stats node_stats(std::size_t begin, std::size_t end) const {
        Stats s;
        for (std::size_t i = begin; i < end; ++i) s += crit_.row(cols_[0][i]);
        return s;
    }

    std::optional<Split> scan(std::span<const std::size_t> candidates, std::size_t begin, std::size_t end,
                              const Stats& parent) const {
        std::optional<Split> best;
        const double min_leaf = static_cast<double>(params_.min_samples_leaf);
        for (std::size_t f : candidates) {
            const auto& col = cols_[f];
            Stats left;
            for (std::size_t i = begin; i + 1 < end; ++i) {
                const std::uint32_t r = col[i];
                left += crit_.row(r);
                const double v = x_.at(r, f);
                const double next = x_.at(col[i + 1], f);
                if (!(v < next)) continue;
                if (left.count < min_leaf || parent.count - left.count < min_leaf) continue;
                const Stats right = parent - left;
                const double g = crit_.gain(parent, left, right);
                if (!best || better(g, best->decrease)) {
                    double mid = v + (next - v) / 2.0;
                    if (!(mid < next)) mid = v;
                    best = Split{f, mid, g};
                }
            }
        }
        return best;
    }

    std::vector<std::size_t> draw_candidates() {
        const std::size_t d = x_.cols();
        std::vector<std::size_t> all(d);
        std::iota(all.begin(), all.end(), 0);
        const std::size_t want = params_.feature_subsample;
        if (want == 0 || want >= d || !rng_) return all;
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng_->below(d - i));
            std::swap(all[i], all[j]);
        }
        all.resize(want);
        std::sort(all.begin(), all.end());
        return all;
    }

    Tree grow() {
        tree_.nodes.clear();
        if (active_rows() == 0) throw EmptyNode("fit_tree: no training rows");
        grow_node(0, active_rows(), 0);
        return std::move(tree_);
    }

private:
    int grow_node(std::size_t begin, std::size_t end, std::size_t depth) {
        const Stats s = node_stats(begin, end);
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, crit_.leaf(s), s.count});

        if (depth >= params_.max_depth) return id;
        if (s.count < 2.0 * static_cast<double>(params_.min_samples_leaf)) return id;
        if (!crit_.splittable(s)) return id;
        const auto candidates = draw_candidates();
        const auto split = scan(candidates, begin, end, s);
        if (!split || !(split->decrease > kMinGain) || split->decrease < params_.min_impurity_decrease) return id;

        const std::size_t mid = partition(begin, end, *split);
        const int left = grow_node(begin, mid, depth + 1);
        const int right = grow_node(mid, end, depth + 1);
        TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = static_cast<int>(split->feature);
        node.threshold = split->threshold;
        node.left = left;
        node.right = right;
        return id;
    }

    // Stable partition of every column range; returns the boundary.
    std::size_t partition(std::size_t begin, std::size_t end, const Split& split) {
        std::size_t n_left = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint32_t r = cols_[split.feature][i];
            const bool go_left = x_.at(r, split.feature) <= split.threshold;
            left_flag_[r] = go_left;
            n_left += go_left;
        }
        for (auto& col : cols_) {
            std::size_t l = begin;
            std::size_t rpos = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const std::uint32_t r = col[i];
                if (left_flag_[r])
                    col[l++] = r;
                else
                    buffer_[rpos++] = r;
            }
            std::copy(buffer_.begin(), buffer_.begin() + static_cast<long>(rpos), col.begin() + static_cast<long>(l));
        }
        return begin + n_left;
    }

    const Matrix& x_;
    const Criterion& crit_;
    const TreeParams& params_;
    Rng* rng_;
    std::vector<std::vector<std::uint32_t>> cols_;
    std::vector<char> left_flag_;
    std::vector<std::uint32_t> buffer_;
    Tree tree_;
};

std::size_t depth_from(const Tree& t, int id) {
    const auto& n = t.nodes[static_cast<std::size_t>(id)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(t, n.left), depth_from(t, n.right));
}

}  // namespace

std::size_t Tree::leaf_for(std::span<const double> row) const {
    if (nodes.empty()) throw ModelError("empty tree");
    std::size_t id = 0;
    while (!nodes[id].is_leaf()) {
        const auto& n = nodes[id];
        if (static_cast<std::size_t>(n.feature) >= row.size())
            throw FeatureOutOfRange("tree references feature " + std::to_string(n.feature) + " but row has " +
                                    std::to_string(row.size()));
        id = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return id;
}

std::size_t Tree::depth() const { return nodes.empty() ? 0 : depth_from(*this, 0); }

void TreeParams::validate() const {
    if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
    if (!(min_impurity_decrease >= 0.0)) throw ConfigError("min_impurity_decrease must be >= 0");
}

double gini(std::span<const double> counts) {
    double total = 0.0;
    for (double c : counts) total += c;
    if (!(total > 0.0)) throw EmptyNode("gini: empty node");
    double sum_sq = 0.0;
    for (double c : counts) {
        const double p = c / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

SortedColumns SortedColumns::build(const Matrix& rows) {
    SortedColumns s;
    s.order.resize(rows.cols());
    for (std::size_t f = 0; f < rows.cols(); ++f) {
        auto& o = s.order[f];
        o.resize(rows.rows());
        std::iota(o.begin(), o.end(), 0u);
        std::stable_sort(o.begin(), o.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return rows.at(a, f) < rows.at(b, f); });
    }
    return s;
}

std::optional<Split> best_split(const Matrix& rows, std::span<const int> labels, const TreeParams& params,
                                std::span<const double> weights, std::span<const std::size_t> candidates) {
    params.validate();
    if (rows.rows() != labels.size()) throw ModelError("best_split: rows/labels length mismatch");
    GiniCriterion crit{labels, weights, {}};
    Grower<GiniCriterion> g(rows, crit, params, nullptr, {}, nullptr);
    const Stats s = g.node_stats(0, g.active_rows());
    if (s.count < 2.0 * static_cast<double>(params.min_samples_leaf) || !crit.splittable(s)) return std::nullopt;
    std::vector<std::size_t> all;
    if (candidates.empty()) {
        all.resize(rows.cols());
        std::iota(all.begin(), all.end(), 0);
        candidates = all;
    }
    auto split = g.scan(candidates, 0, g.active_rows(), s);
    if (!split || !(split->decrease > kMinGain) || split->decrease < params.min_impurity_decrease) return std::nullopt;
    return split;
}

Tree fit_tree(const Matrix& rows, std::span<const int> labels, const TreeParams& params,
              std::span<const double> weights, Rng& rng, std::span<const std::uint32_t> multiplicity,
              const SortedColumns* presorted) {
    params.validate();
    if (rows.rows() != labels.size()) throw ModelError("fit_tree: rows/labels length mismatch");
    if (!weights.empty() && weights.size() != labels.size()) throw ModelError("fit_tree: weights length mismatch");
    GiniCriterion crit{labels, weights, multiplicity};
    Grower<GiniCriterion> g(rows, crit, params, &rng, multiplicity, presorted);
    return g.grow();
}

Tree fit_tree(const LabeledDataset& data, const TreeParams& params, std::span<const double> weights, Rng& rng) {
    data.validate();
    return fit_tree(data.rows, data.labels, params, weights, rng);
}

Tree fit_gradient_tree(const Matrix& rows, std::span<const double> gradients, std::span<const double> hessians,
                       const TreeParams& params, double l2_lambda, Rng& rng, const SortedColumns* presorted) {
    params.validate();
    if (gradients.size() != rows.rows() || hessians.size() != rows.rows())
        throw ModelError("fit_gradient_tree: gradient length mismatch");
    GradientCriterion crit{gradients, hessians, l2_lambda};
    Grower<GradientCriterion> g(rows, crit, params, &rng, {}, presorted);
    return g.grow();
}

double predict_tree(const Tree& tree, std::span<const double> row) { return tree.nodes[tree.leaf_for(row)].value; }

nlohmann::json to_json(const Tree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
        if (n.is_leaf())
            nodes.push_back({{"value", n.value}, {"cover", n.cover}});
        else
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"value", n.value},
                             {"cover", n.cover}});
    }
    return {{"nodes", nodes}};
}

Tree tree_from_json(const nlohmann::json& j) {
    Tree t;
    for (const auto& n : j.at("nodes")) {
        TreeNode node;
        node.value = n.at("value").get<double>();
        node.cover = n.at("cover").get<double>();
        if (n.contains("feature")) {
            node.feature = n.at("feature").get<int>();
            node.threshold = n.at("threshold").get<double>();
            node.left = n.at("left").get<int>();
            node.right = n.at("right").get<int>();
        }
        t.nodes.push_back(node);
    }
    const int count = static_cast<int>(t.nodes.size());
    for (const auto& n : t.nodes)
        if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
            throw ModelError("tree json: child index out of range");
    if (t.nodes.empty()) throw ModelError("tree json: no nodes");
    return t;
}

}  // namespace pedsafe::tree
