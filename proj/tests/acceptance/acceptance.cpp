// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "pedsafe/metrics.hpp"
#include "pedsafe/pipeline.hpp"
#include "pedsafe/resample.hpp"
#include "pedsafe/shap.hpp"
#include "support.hpp"

using namespace pedsafe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

int failures = 0;

void criterion(int id, const std::string& title, double limit_seconds, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limit_seconds > 0 && secs >= limit_seconds)
        o.require(false, "took " + std::to_string(secs) + " s, limit " + std::to_string(limit_seconds) + " s");
    if (!o.pass) ++failures;
    std::printf("criterion %2d: %s  %s [%.2f s]%s%s\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), secs,
                o.detail.empty() ? "" : " - ", o.detail.c_str());
    std::fflush(stdout);
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("pedsafe_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        out[fs::relative(e.path(), dir).string()] = s.str();
    }
    return out;
}

unsigned hardware_threads() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

int run(const std::string& cmd, const fs::path& cfg, const pipeline::Overrides& o, std::string* log_out = nullptr) {
    std::ostringstream log, err;
    const int code = pipeline::run_command(cmd, cfg, o, log, err);
    if (log_out) *log_out += log.str() + err.str();
    return code;
}

Outcome imputation() {
    Outcome o;
    const auto schema = ingest::default_schema();
    const auto data = ingest::generate_synthetic(1000, 11, ingest::default_effects(), schema);
    const auto before = ingest::scan_invalid(data.collisions, schema);
    o.require(before.affected_rows > 0, "no invalid codes planted");
    const auto imp = ingest::impute_mode(data.collisions, schema);
    o.require(ingest::scan_invalid(imp.records, schema).affected_rows == 0, "invalid cells remain");
    const auto again = ingest::impute_mode(imp.records, schema);
    o.require(again.records == imp.records, "second imputation changed records");
    for (const auto& l : again.logs) o.require(l.replaced_count == 0, "second imputation replaced cells");
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        const auto& col = schema.columns[c];
        if (imp.logs[c].replaced_count == 0) continue;
        std::vector<int> values;
        for (const auto& r : data.collisions) values.push_back(r[col.field()]);
        o.require(imp.logs[c].mode_value == oracle::mode_oracle(values, col), "mode mismatch in " + col.name);
    }
    o.detail = o.pass ? std::to_string(before.affected_rows) + " affected rows repaired" : o.detail;
    return o;
}

Outcome split_and_smote() {
    Outcome o;
    const auto schema = ingest::default_schema();
    const auto raw = ingest::generate_synthetic(10000, 12, ingest::default_effects(), schema);
    const auto imp = ingest::impute_mode(raw.collisions, schema);
    const auto tt = targets::build_targets(imp.records, raw.casualties, schema.pedestrian_class);
    const auto d = targets::encode(imp.records, tt, TargetKind::Pedestrian, targets::default_features(schema), schema);
    const auto s = resample::stratified_split(d, 0.2, 3);
    auto share = [](const LabeledDataset& x) { return static_cast<double>(x.positives()) / static_cast<double>(x.size()); };
    const double bound = 1.0 / static_cast<double>(s.test.size());
    o.require(std::abs(share(s.test) - share(d)) <= bound + 1e-12, "test share outside bound");

    const auto test_sum = checksum(s.test.rows.data());
    resample::SmoteConfig cfg;
    cfg.target_ratio = 1.0;
    cfg.snap_categoricals = false;
    cfg.seed = 4;
    const auto sm = resample::smote(s.train, cfg, hardware_threads());
    const auto minority = static_cast<std::size_t>(std::count(sm.data.labels.begin(), sm.data.labels.end(), sm.minority_label));
    o.require(2 * minority == sm.data.size(), "classes not balanced");

    std::vector<double> lo(d.width(), 1e300), hi(d.width(), -1e300);
    for (std::size_t i = 0; i < s.train.size(); ++i)
        if (s.train.labels[i] == sm.minority_label)
            for (std::size_t j = 0; j < d.width(); ++j)
                lo[j] = std::min(lo[j], s.train.rows.at(i, j)), hi[j] = std::max(hi[j], s.train.rows.at(i, j));
    for (std::size_t i = s.train.size(); i < sm.data.size(); ++i)
        for (std::size_t j = 0; j < d.width(); ++j) {
            const double v = sm.data.rows.at(i, j);
            o.require(v >= lo[j] && v <= hi[j], "synthetic sample outside the minority box");
        }
    o.require(checksum(s.test.rows.data()) == test_sum, "test partition changed");
    if (o.pass) o.detail = std::to_string(sm.provenance.size()) + " synthetic rows";
    return o;
}

Outcome tree_oracle() {
    Outcome o;
    std::size_t fixtures = 0;
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        Rng g(seed, "fixture");
        const std::size_t n = 2 + g.below(15), width = 1 + g.below(3);
        Matrix x(n, width);
        std::vector<int> y(n);
        std::vector<double> w;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < width; ++j) x.at(i, j) = static_cast<double>(g.below(6));
            y[i] = g.bernoulli(0.5) ? 1 : 0;
        }
        if (seed % 3 == 0)
            for (std::size_t i = 0; i < n; ++i) w.push_back(static_cast<double>(1 + g.below(4)));
        tree::TreeParams p;
        p.min_samples_leaf = 1 + g.below(3);
        const auto ref = oracle::exhaustive(x, y, w, p.min_samples_leaf);
        const auto got = tree::best_split(x, y, p, w);
        if (ref.decrease <= 1e-12) {
            o.require(!got, "split found where none improves");
            continue;
        }
        o.require(got.has_value(), "no split found");
        if (!got) continue;
        o.require(std::abs(got->decrease - ref.decrease) <= 1e-12, "impurity decrease differs");
        if (ref.unique) o.require(got->feature == ref.feature && got->threshold == ref.threshold, "different root split");
        ++fixtures;
    }
    Rng r(5);
    for (int i = 0; i < 1000; ++i) {
        const double a = static_cast<double>(r.below(1000)), b = static_cast<double>(1 + r.below(1000));
        const double c[] = {a, b};
        o.require(std::abs(tree::gini(c) - 2 * a * b / ((a + b) * (a + b))) <= 1e-12, "gini closed form");
    }
    if (o.pass) o.detail = std::to_string(fixtures) + " fixtures with a split";
    return o;
}

Outcome boosting() {
    Outcome o;
    const auto d = testsupport::numeric_dataset({{1, 7}, {2, 3}, {3, 5}, {4, 1}, {5, 8}, {6, 2}, {7, 6}, {8, 4}},
                                                {0, 0, 1, 0, 1, 1, 1, 0});
    ensemble::BoostParams p;
    p.tree.max_depth = 1;
    p.learning_rate = 0.5;
    const auto ref = oracle::boosting_oracle(d, 3, p.learning_rate, p.l2_lambda);
    for (std::size_t rounds = 1; rounds <= 3; ++rounds) {
        p.rounds = rounds;
        const auto probs = ensemble::predict_boosted(ensemble::fit_boosted(d, p, 1), d.rows);
        for (std::size_t i = 0; i < d.size(); ++i)
            o.require(std::abs(probs[i] - ref[rounds - 1][i]) <= 1e-9, "round " + std::to_string(rounds) + " differs");
    }
    const auto planted = testsupport::planted_dataset(5000, 6, 21);
    ensemble::BoostParams q;
    q.rounds = 50;
    const auto m = ensemble::fit_boosted(planted, q, 2);
    o.require(m.training_loss.size() == 51, "loss history length");
    for (std::size_t r = 1; r < m.training_loss.size(); ++r)
        o.require(m.training_loss[r] <= m.training_loss[r - 1] + 1e-9, "loss increased at round " + std::to_string(r));
    if (o.pass) o.detail = "loss " + num(m.training_loss.front()) + " -> " + num(m.training_loss.back());
    return o;
}

Outcome metrics_oracle() {
    Outcome o;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        Rng rng(seed, "auc");
        const std::size_t n = 2 + rng.below(999), levels = 1 + rng.below(30);
        std::vector<int> y(n);
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.bernoulli(0.3) ? 1 : 0;
            p[i] = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
        }
        y[0] = 0;
        y[1] = 1;
        o.require(std::abs(metrics::roc_auc(y, p) - oracle::all_pairs_auc(y, p)) <= 1e-12, "auc differs from all-pairs count");
    }
    auto column = [](std::array<double, 3> c0, std::array<double, 3> c1, double acc, double auc) {
        metrics::EvalReport r;
        r.per_class[0] = {c0[0], c0[1], c0[2], 8071};
        r.per_class[1] = {c1[0], c1[1], c1[2], 1776};
        r.accuracy = acc;
        r.roc_auc = auc;
        return r;
    };
    const std::vector<std::pair<std::string, metrics::EvalReport>> cols{
        {"forest_pre", column({.97, .92, .95}, {.72, .86, .78}, .9134, .940)},
        {"forest_post", column({.97, .93, .95}, {.72, .87, .79}, .9171, .944)},
        {"boosted_pre", column({.97, .93, .95}, {.72, .89, .80}, .9189, .953)},
        {"boosted_post", column({.98, .93, .95}, {.73, .90, .80}, .9210, .955)},
    };
    std::ifstream in(std::string(PEDSAFE_GOLDEN_DIR) + "/pedestrian_table.txt", std::ios::binary);
    o.require(static_cast<bool>(in), "golden file missing");
    std::stringstream golden;
    golden << in.rdbuf();
    o.require(metrics::format_table(cols) == golden.str(), "table does not match the golden file");
    return o;
}

Outcome shap_suite() {
    Outcome o;
    const auto d = testsupport::planted_dataset(600, 5, 31);
    ensemble::ForestParams fp;
    fp.n_trees = 20;
    ensemble::BoostParams bp;
    bp.rounds = 40;
    for (const ensemble::Model& m : {ensemble::Model{ensemble::fit_forest(d, fp, 1)}, ensemble::Model{ensemble::fit_boosted(d, bp, 1)}}) {
        const auto ex = shap::explain_rows(m, d.rows, hardware_threads());
        for (std::size_t i = 0; i < 100; ++i) {
            double s = ex[i].base_value;
            for (double c : ex[i].contributions) s += c;
            o.require(std::abs(s - ex[i].model_output) <= 1e-9, "local accuracy");
        }
    }
    std::size_t trees = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        const std::size_t width = 1 + seed % 4;
        const auto t = oracle::random_tree(seed, width);
        Rng rng(seed, "points");
        for (int k = 0; k < 4; ++k) {
            std::vector<double> x(width + 1);  // the last feature never appears in the tree
            for (auto& v : x) v = std::round(rng.uniform() * 10) / 10;
            const auto a = shap::shap_tree(t, x);
            const auto b = oracle::brute_shapley(t, std::span<const double>(x).first(width));
            for (std::size_t j = 0; j < width; ++j) o.require(std::abs(a.contributions[j] - b[j]) <= 1e-9, "brute force");
            o.require(a.contributions[width] == 0.0, "dummy attribution not zero");
        }
        ++trees;
    }
    if (o.pass) o.detail = std::to_string(trees) + " random trees";
    return o;
}

Outcome spatial_suite() {
    Outcome o;
    auto make = [](std::string id, std::vector<geo::Point> pts) {
        pts.push_back(pts.front());
        geo::DistrictPolygon d;
        d.district_id = std::move(id);
        d.parts.push_back({{pts}});
        d.validate();
        return d;
    };
    const std::vector<geo::DistrictPolygon> shapes{
        make("convex", {{0, 0}, {4, 1}, {5, 4}, {2, 5}, {0, 3}}),
        make("concave", {{0, 0}, {5, 0}, {5, 5}, {4, 5}, {4, 1}, {1, 1}, {1, 5}, {0, 5}}),
    };
    std::size_t points = 0;
    for (const auto& s : shapes)
        for (int i = 0; i < 100; ++i)
            for (int j = 0; j < 100; ++j, ++points) {
                const geo::Point p{-0.5 + i / 16.0, -0.5 + j / 16.0};
                o.require(geo::point_in_polygon(p, s) == oracle::oracle_inside(p, s), "disagrees with winding oracle");
            }
    const auto districts = geo::grid_districts(3, 3, {0, 0, 90, 90});
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed, "join");
        std::vector<ingest::CollisionRecord> cs;
        for (int i = 0; i < 500; ++i) {
            auto r = testsupport::valid_record("c" + std::to_string(i), ingest::default_schema());
            r.x = rng.uniform() * 110 - 10;
            r.y = rng.uniform() * 110 - 10;
            if (rng.bernoulli(0.01)) r.x = std::nan("");
            cs.push_back(r);
        }
        const auto j = geo::spatial_join(cs, districts, hardware_threads());
        o.require(j.assignments.size() + j.unmatched.size() + j.without_location.size() == j.total && j.total == cs.size(),
                  "matched + unmatched != total");
    }
    if (o.pass) o.detail = std::to_string(points) + " grid points";
    return o;
}

const char* kEndToEnd = R"(
[target]
kind = over_serious

[synth]
rows = 20000

[models]
kinds = forest, boosted

[forest]
n_trees = 100
max_depth = 12
min_samples_leaf = 5

[boosted]
rounds = 100
max_depth = 3
learning_rate = 0.1

[grid.forest]
n_trees = 100
max_depth = 8, 16
min_samples_leaf = 5

[grid.boosted]
n_trees = 150
max_depth = 3, 4
learning_rate = 0.1
l2_lambda = 1
positive_weight = 1

[explain]
max_rows = 1000
)";

Outcome end_to_end() {
    Outcome o;
    const auto dir = scratch("e2e");
    const auto cfg = dir / "run.ini";
    std::ofstream(cfg) << kEndToEnd;
    pipeline::Overrides ov;
    ov.out = dir / "out";
    ov.threads = hardware_threads();
    for (const char* cmd : {"synth", "prep", "train"}) o.require(run(cmd, cfg, ov) == 0, std::string(cmd) + " failed");

    // Monte-Carlo estimate of the generator's Bayes-optimal AUC.
    const auto schema = ingest::default_schema();
    const auto mc = ingest::generate_synthetic(200000, 777, ingest::default_effects(), schema);
    const auto tt = targets::build_targets(mc.collisions, mc.casualties, schema.pedestrian_class);
    std::vector<int> labels;
    for (const auto& c : mc.collisions) labels.push_back(tt.over_serious.at(c.collision_id));
    const double bayes = metrics::roc_auc(labels, mc.severity_probability);
    o.require(bayes >= 0.85, "generator Bayes AUC " + num(bayes) + " < 0.85");

    std::string summary = "bayes " + num(bayes);
    for (const std::string kind : {"forest", "boosted"}) {
        std::ifstream in(ov.out.value() / ("report_" + kind + "_tuned.json"));
        const auto rep = nlohmann::json::parse(in);
        const double auc = rep.at("roc_auc").get<double>();
        summary += ", " + kind + " auc " + num(auc);
        o.require(auc >= 0.75, kind + " tuned AUC " + num(auc) + " < 0.75");

        auto ex = ov;
        ex.model = "model_" + kind + "_tuned.json";
        o.require(run("explain", cfg, ex) == 0, "explain failed");
        std::ifstream sin(ov.out.value() / ("shap_importance_model_" + kind + "_tuned.json"));
        const auto ranking = nlohmann::json::parse(sin).at("ranking");
        std::vector<std::string> top;
        for (std::size_t r = 0; r < 3 && r < ranking.size(); ++r) top.push_back(ranking[r].at("feature"));
        auto has = [&](const std::string& f) { return std::find(top.begin(), top.end(), f) != top.end(); };
        o.require(has("speed_limit") && has("light_conditions"),
                  kind + " top-3 SHAP features miss a planted feature");
        summary += " top3 [" + top[0] + "," + top[1] + "," + top[2] + "]";
    }
    o.detail = o.pass ? summary : o.detail + " (" + summary + ")";
    fs::remove_all(dir);
    return o;
}

Outcome real_data(bool& skipped) {
    Outcome o;
    const char* coll = std::getenv("PEDSAFE_STATS19_COLLISIONS");
    const char* cas = std::getenv("PEDSAFE_STATS19_CASUALTIES");
    if (!coll || !cas) {
        skipped = true;
        o.detail = "PEDSAFE_STATS19_COLLISIONS / PEDSAFE_STATS19_CASUALTIES not set";
        return o;
    }
    const auto schema = ingest::default_schema();
    std::ifstream cin_(coll), kin(cas);
    if (!cin_ || !kin) throw std::runtime_error("cannot open the real data files");
    const auto records = ingest::parse_collisions(cin_, schema);
    const auto casualties = ingest::parse_casualties(kin, schema);
    const auto scan = ingest::scan_invalid(records, schema);
    o.require(records.size() == 49316, "parsed " + std::to_string(records.size()) + " collisions, expected 49316");
    o.require(scan.affected_rows == 6312, "affected rows " + std::to_string(scan.affected_rows) + ", expected 6312");
    const auto imp = ingest::impute_mode(records, schema);
    const auto kept = ingest::drop_casualty_outliers(imp.records, schema.max_casualties);
    const auto tt = targets::build_targets(kept.records, casualties, schema.pedestrian_class);
    auto ones = [](const targets::FlagMap& m) {
        std::size_t n = 0;
        for (const auto& [k, v] : m) n += v;
        return n;
    };
    o.require(ones(tt.pedestrian) == 8881, "pedestrian ones " + std::to_string(ones(tt.pedestrian)));
    o.require(ones(tt.over_serious) == 11544, "over-serious ones " + std::to_string(ones(tt.over_serious)));
    o.require(ones(tt.interaction) == 2823, "interaction ones " + std::to_string(ones(tt.interaction)));
    // The two reference figures for the non-serious class (37668 and 37688) disagree; show both counts.
    const auto m = targets::marginals_json(tt, casualties);
    const std::string both = "not-serious collisions " + m["over_serious"]["0"].dump() + " (reference 37668), slight casualties " +
                             m["casualty_severity"]["slight"].dump() + " (reference 37688)";
    o.detail = o.pass ? both : o.detail + "; " + both;
    return o;
}

const char* kDeterminism = R"(
[synth]
rows = 3000

[forest]
n_trees = 20

[boosted]
rounds = 20

[grid.forest]
n_trees = 20
max_depth = 6, 12
min_samples_leaf = 1

[grid.boosted]
n_trees = 20
max_depth = 3
learning_rate = 0.1, 0.3
l2_lambda = 1
positive_weight = 1, balanced

[explain]
max_rows = 200
)";

Outcome determinism() {
    Outcome o;
    const auto dir = scratch("determinism");
    const auto cfg = dir / "run.ini";
    std::ofstream(cfg) << kDeterminism;
    std::vector<std::map<std::string, std::string>> runs;
    const std::vector<unsigned> threads{1, 1, 4};
    for (std::size_t k = 0; k < threads.size(); ++k) {
        pipeline::Overrides ov;
        ov.out = dir / ("run" + std::to_string(k));
        ov.threads = threads[k];
        for (const char* cmd : {"synth", "prep", "describe", "train", "explain", "spatial"})
            o.require(run(cmd, cfg, ov) == 0, std::string(cmd) + " failed");
        runs.push_back(snapshot(ov.out.value()));
    }
    for (std::size_t k = 1; k < runs.size(); ++k) {
        o.require(runs[k].size() == runs[0].size(), "different file sets");
        for (const auto& [name, bytes] : runs[0]) {
            auto it = runs[k].find(name);
            o.require(it != runs[k].end() && it->second == bytes, name + " differs");
        }
    }
    if (o.pass) o.detail = std::to_string(runs[0].size()) + " files identical over 3 runs (threads 1, 1, 4)";
    fs::remove_all(dir);
    return o;
}

}  // namespace

int main() {
    criterion(1, "imputation suite", 1.0, imputation);
    criterion(2, "split and SMOTE suite", 5.0, split_and_smote);
    criterion(3, "tree oracle", 0, tree_oracle);
    criterion(4, "boosting recurrence", 0, boosting);
    criterion(5, "metrics oracle and report golden file", 0, metrics_oracle);
    criterion(6, "SHAP suite", 0, shap_suite);
    criterion(7, "spatial suite", 2.0, spatial_suite);
    criterion(8, "end-to-end planted-signal run", 120.0, end_to_end);

    bool skipped = false;
    const auto start = std::chrono::steady_clock::now();
    Outcome real;
    try {
        real = real_data(skipped);
    } catch (const std::exception& e) {
        real.pass = false;
        real.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (skipped) {
        std::printf("criterion  9: SKIP  real-data counts [%.2f s] - %s\n", secs, real.detail.c_str());
    } else {
        if (!real.pass) ++failures;
        std::printf("criterion  9: %s  real-data counts [%.2f s]%s%s\n", real.pass ? "PASS" : "FAIL", secs,
                    real.detail.empty() ? "" : " - ", real.detail.c_str());
    }

    criterion(10, "determinism across reruns and thread counts", 0, determinism);
    std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
