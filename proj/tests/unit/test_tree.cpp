#include <doctest.h>

#include <set>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "pedsafe/tree.hpp"
#include "support.hpp"

using namespace pedsafe;
using namespace pedsafe::tree;

using namespace oracle;
namespace {

Matrix matrix(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m.at(i, j) = rows[i][j];
    return m;
}

}  // namespace

TEST_CASE("gini examples") {
    const double a[] = {3, 3}, b[] = {4, 0}, c[] = {1, 3};
    CHECK(gini(a) == 0.5);
    CHECK(gini(b) == 0.0);
    CHECK(gini(c) == doctest::Approx(0.375).epsilon(1e-15));
    const double empty[] = {0, 0};
    CHECK_THROWS_AS(gini(empty), EmptyNode);
}

TEST_CASE("gini matches the two-class closed form") {
    Rng r(4);
    for (int i = 0; i < 1000; ++i) {
        const double n0 = static_cast<double>(r.below(1000)), n1 = static_cast<double>(1 + r.below(1000));
        const double counts[] = {n0, n1};
        const double g = gini(counts);
        CHECK(std::abs(g - 2.0 * n0 * n1 / ((n0 + n1) * (n0 + n1))) <= 1e-12);
        CHECK(g >= 0.0);
        CHECK(g <= 0.5);
    }
}

TEST_CASE("best split on two points") {
    const auto s = best_split(matrix({{0}, {1}}), std::vector<int>{0, 1}, TreeParams{});
    REQUIRE(s);
    CHECK(s->feature == 0);
    CHECK(s->threshold == 0.5);
    CHECK(s->decrease == 0.5);
    CHECK_FALSE(best_split(matrix({{0}, {1}, {2}}), std::vector<int>{1, 1, 1}, TreeParams{}));
}

TEST_CASE("8-point 2-feature fixture agrees with exhaustive search") {
    const auto x = matrix({{1, 5}, {2, 3}, {3, 8}, {4, 1}, {5, 7}, {6, 2}, {7, 6}, {8, 4}});
    const std::vector<int> y{0, 0, 1, 0, 1, 0, 1, 1};
    const auto s = best_split(x, y, TreeParams{});
    const auto o = exhaustive(x, y, {});
    REQUIRE(s);
    CHECK(std::abs(s->decrease - o.decrease) <= 1e-12);
    if (o.unique) {
        CHECK(s->feature == o.feature);
        CHECK(s->threshold == o.threshold);
    }
}

TEST_CASE("property: root split equals exhaustive search on small fixtures") {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 400; ++seed) {
        Rng g(seed, "tree-fixture");
        const std::size_t n = 2 + g.below(15), d = 1 + g.below(3);
        Matrix x(n, d);
        std::vector<int> y(n);
        std::vector<double> w;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) x.at(i, j) = static_cast<double>(g.below(6));
            y[i] = static_cast<int>(g.below(2));
        }
        if (seed % 3 == 0)
            for (std::size_t i = 0; i < n; ++i) w.push_back(0.5 + static_cast<double>(g.below(4)));
        TreeParams p;
        p.min_samples_leaf = 1 + (seed % 4 == 0 ? g.below(3) : 0);
        const auto o = exhaustive(x, y, w, p.min_samples_leaf);
        const auto s = best_split(x, y, p, w);
        if (o.decrease <= 1e-12) {
            CHECK_FALSE(s);
            continue;
        }
        REQUIRE(s);
        CHECK(std::abs(s->decrease - o.decrease) <= 1e-12);
        if (o.unique) {
            CHECK(s->feature == o.feature);
            CHECK(s->threshold == o.threshold);
        }
        Rng rng(seed);
        const auto t = fit_tree(x, y, p, w, rng);
        if (!t.nodes[0].is_leaf()) {
            CHECK(static_cast<std::size_t>(t.nodes[0].feature) == s->feature);
            CHECK(t.nodes[0].threshold == s->threshold);
        }
        ++checked;
    }
    CHECK(checked > 200);
}

TEST_CASE("separable 1-D data fits a single split with perfect accuracy") {
    const auto x = matrix({{1}, {2}, {3}, {10}, {11}, {12}});
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    Rng rng(1);
    const auto t = fit_tree(x, y, TreeParams{}, {}, rng);
    CHECK(t.depth() == 1);
    for (std::size_t i = 0; i < 6; ++i) CHECK((predict_tree(t, x.row(i)) >= 0.5) == (y[i] == 1));
}

TEST_CASE("depth-1 tree on XOR cannot beat the best stump") {
    // XOR with unequal replication so that some stumps have signal.
    const auto x = matrix({{0, 0}, {0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 1}, {1, 1}, {0, 1}});
    const std::vector<int> y{0, 0, 1, 1, 0, 0, 0, 1};
    TreeParams p;
    p.max_depth = 1;
    Rng rng(2);
    const auto t = fit_tree(x, y, p, {}, rng);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) correct += (predict_tree(t, x.row(i)) >= 0.5) == (y[i] == 1);
    const double acc = static_cast<double>(correct) / static_cast<double>(y.size());

    double best_stump = 0.0;
    for (std::size_t f = 0; f < 2; ++f)
        for (int left_label = 0; left_label < 2; ++left_label)
            for (int right_label = 0; right_label < 2; ++right_label) {
                std::size_t c = 0;
                for (std::size_t i = 0; i < y.size(); ++i) c += (x.at(i, f) <= 0.5 ? left_label : right_label) == y[i];
                best_stump = std::max(best_stump, static_cast<double>(c) / static_cast<double>(y.size()));
            }
    CHECK(best_stump <= 0.75);
    CHECK(acc <= best_stump + 1e-12);
    CHECK(acc <= 0.75);
}

TEST_CASE("pure labels give a single leaf") {
    Rng rng(1);
    const auto t = fit_tree(matrix({{1}, {2}, {3}}), std::vector<int>{1, 1, 1}, TreeParams{}, {}, rng);
    REQUIRE(t.nodes.size() == 1);
    CHECK(t.nodes[0].value == 1.0);
}

TEST_CASE("prediction routing") {
    Tree leaf;
    leaf.nodes.push_back({-1, 0, -1, -1, 0.3, 1});
    const double any[] = {123.0};
    CHECK(predict_tree(leaf, any) == 0.3);
    Tree stump;
    stump.nodes = {{0, 0.5, 1, 2, 0.5, 2}, {-1, 0, -1, -1, 0.1, 1}, {-1, 0, -1, -1, 0.9, 1}};
    const double zero[] = {0.0}, half[] = {0.5}, one[] = {1.0};
    CHECK(predict_tree(stump, zero) == 0.1);
    CHECK(predict_tree(stump, half) == 0.1);
    CHECK(predict_tree(stump, one) == 0.9);
    CHECK_THROWS_AS(predict_tree(stump, std::span<const double>{}), FeatureOutOfRange);
}

TEST_CASE("property: covers add up and leaves store their training purity") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto d = testsupport::planted_dataset(200, 4, seed);
        TreeParams p;
        p.max_depth = 1 + seed % 6;
        p.min_samples_leaf = 1 + seed % 5;
        p.feature_subsample = seed % 3 == 0 ? 2 : 0;
        Rng rng(seed);
        const auto t = fit_tree(d, p, {}, rng);
        CHECK(t.depth() <= p.max_depth);
        for (const auto& n : t.nodes) {
            if (n.is_leaf()) {
                CHECK(n.cover >= static_cast<double>(p.min_samples_leaf));
                continue;
            }
            CHECK(n.cover == t.nodes[n.left].cover + t.nodes[n.right].cover);
        }
        std::map<std::size_t, std::pair<double, double>> leaf_stats;
        for (std::size_t i = 0; i < d.size(); ++i) {
            auto& [n, k] = leaf_stats[t.leaf_for(d.rows.row(i))];
            n += 1;
            k += d.labels[i];
        }
        for (const auto& [leaf, nk] : leaf_stats) {
            CHECK(t.nodes[leaf].value == doctest::Approx(nk.second / nk.first).epsilon(1e-12));
            CHECK(t.nodes[leaf].cover == nk.first);
        }
    }
}

TEST_CASE("bootstrap multiplicity equals duplicating rows") {
    const auto d = testsupport::planted_dataset(60, 3, 5);
    std::vector<std::uint32_t> mult(d.size());
    Rng g(8);
    for (auto& m : mult) m = static_cast<std::uint32_t>(g.below(3));
    std::vector<std::size_t> expanded;
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::uint32_t k = 0; k < mult[i]; ++k) expanded.push_back(i);
    const auto dup = d.subset(expanded);
    Rng r1(1), r2(1);
    const auto a = fit_tree(d.rows, d.labels, TreeParams{}, {}, r1, mult);
    const auto b = fit_tree(dup.rows, dup.labels, TreeParams{}, {}, r2);
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        CHECK(a.nodes[i].feature == b.nodes[i].feature);
        CHECK(a.nodes[i].threshold == b.nodes[i].threshold);
        CHECK(a.nodes[i].value == doctest::Approx(b.nodes[i].value).epsilon(1e-12));
    }
}

TEST_CASE("gradient tree leaf is -G/(H+lambda)") {
    const auto x = matrix({{1}, {1}, {1}});
    const std::vector<double> g{0.5, -0.2, 0.3}, h{0.25, 0.16, 0.21};
    Rng rng(1);
    const auto t = fit_gradient_tree(x, g, h, TreeParams{}, 0.0, rng);
    REQUIRE(t.nodes.size() == 1);
    CHECK(t.nodes[0].value == doctest::Approx(-(0.6) / (0.62)).epsilon(1e-12));
    const auto t2 = fit_gradient_tree(x, g, h, TreeParams{}, 1.0, rng);
    CHECK(t2.nodes[0].value == doctest::Approx(-(0.6) / (1.62)).epsilon(1e-12));
}

TEST_CASE("tree json round-trip and parameter validation") {
    const auto d = testsupport::planted_dataset(100, 3, 9);
    Rng rng(3);
    const auto t = fit_tree(d, TreeParams{}, {}, rng);
    CHECK(tree_from_json(nlohmann::json::parse(to_json(t).dump())) == t);
    TreeParams p;
    p.max_depth = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.max_depth = 3;
    p.min_samples_leaf = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}
