#include "pedsafe/pipeline.hpp"

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pedsafe/csv.hpp"
#include "pedsafe/metrics.hpp"
#include "pedsafe/shap.hpp"

namespace pedsafe::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

void write_text(const fs::path& path, const std::string& text) { open_out(path) << text; }

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    return in;
}

struct Cleaned {
    std::size_t parsed = 0;
    ingest::InvalidScan scan;
    std::vector<ingest::ImputationLog> logs;
    std::vector<std::string> dropped;
    std::vector<ingest::CollisionRecord> collisions;
    std::vector<ingest::CasualtyRow> casualties;
    targets::TargetTable targets;
};

// parse -> scan -> impute -> drop outliers -> targets
Cleaned load_clean(const config::RunConfig& cfg) {
    Cleaned c;
    auto cin = open_in(cfg.collisions_path());
    auto records = ingest::parse_collisions(cin, cfg.schema);
    auto kin = open_in(cfg.casualties_path());
    c.casualties = ingest::parse_casualties(kin, cfg.schema);
    c.parsed = records.size();
    c.scan = ingest::scan_invalid(records, cfg.schema);
    auto imputed = ingest::impute_mode(std::move(records), cfg.schema, cfg.threads);
    c.logs = std::move(imputed.logs);
    auto kept = ingest::drop_casualty_outliers(std::move(imputed.records), cfg.schema.max_casualties);
    c.collisions = std::move(kept.records);
    c.dropped = std::move(kept.dropped_ids);
    c.targets = targets::build_targets(c.collisions, c.casualties, cfg.schema.pedestrian_class);
    return c;
}

std::string dataset_stem(TargetKind t) { return "dataset_" + std::string(to_string(t)); }
std::string test_stem(TargetKind t) { return "test_" + std::string(to_string(t)); }

fs::path with_ext(const fs::path& dir, const std::string& stem, const char* ext) { return dir / (stem + ext); }

LabeledDataset read_staged(const fs::path& dir, const std::string& stem) {
    const auto csv_path = with_ext(dir, stem, ".csv");
    const auto json_path = with_ext(dir, stem, ".json");
    if (!fs::is_regular_file(csv_path) || !fs::is_regular_file(json_path))
        throw ModelError("missing " + csv_path.string() + "; run prep first");
    return targets::read_dataset(csv_path.string(), json_path.string());
}

std::string stage_tag(ensemble::ModelKind kind, bool tuned) {
    return std::string(ensemble::to_string(kind)) + (tuned ? "_tuned" : "_baseline");
}

}  // namespace

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) { return Rng(seed, stage).next_u64(); }

config::RunConfig resolve_config(const fs::path& path, const Overrides& o) {
    config::RunConfig cfg = path.empty() ? config::RunConfig{} : config::load_config(path);
    if (o.target) {
        try {
            cfg.target = parse_target(*o.target);
        } catch (const Error& e) {
            throw ConfigError(std::string("--target: ") + e.what());
        }
    }
    if (o.threshold) cfg.threshold = *o.threshold;
    if (o.threads) cfg.threads = *o.threads;
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out_dir = *o.out;
    if (o.model) cfg.explain_model = *o.model;
    return cfg;
}

void cmd_synth(const config::RunConfig& cfg, std::ostream& log) {
    cfg.validate(false);
    ensure_dir(cfg.out_dir);
    const auto spec = ingest::default_effects();
    const auto data = ingest::generate_synthetic(cfg.synth_rows, stage_seed(cfg.seed, "synth"), spec, cfg.schema);
    {
        auto out = open_out(cfg.out_dir / "synthetic_collisions.csv");
        ingest::write_collisions(out, data.collisions, cfg.schema);
    }
    {
        auto out = open_out(cfg.out_dir / "synthetic_casualties.csv");
        ingest::write_casualties(out, data.casualties, cfg.schema);
    }
    const auto polygons = geo::grid_districts(cfg.synth_grid_x, cfg.synth_grid_y,
                                              {spec.area_min_x, spec.area_min_y, spec.area_max_x, spec.area_max_y});
    write_json(cfg.out_dir / "synthetic_boundaries.geojson", geo::boundaries_json(polygons, cfg.boundary_options));

    // Bayes AUC of the true severity probability against the drawn labels.
    const auto tt = targets::build_targets(data.collisions, data.casualties, cfg.schema.pedestrian_class);
    std::vector<int> labels;
    for (const auto& c : data.collisions) labels.push_back(tt.over_serious.at(c.collision_id));
    json effects = json::array();
    for (const auto& e : spec.severity) effects.push_back({{"feature", e.feature}, {"coef", e.coef}, {"times", e.times}});
    json truth = {{"rows", cfg.synth_rows},
                  {"severity_intercept", spec.severity_intercept},
                  {"severity_effects", effects},
                  {"bayes_auc_severity", metrics::roc_auc(labels, data.severity_probability)}};
    write_json(cfg.out_dir / "synthetic_truth.json", truth);
    log << "synth: " << data.collisions.size() << " collisions, " << data.casualties.size() << " casualties, "
        << polygons.size() << " districts -> " << cfg.out_dir.string() << '\n';
}

void cmd_prep(const config::RunConfig& cfg, std::ostream& log) {
    cfg.validate(true);
    ensure_dir(cfg.out_dir);
    const auto c = load_clean(cfg);
    {
        auto out = open_out(cfg.out_dir / "cleaned_collisions.csv");
        ingest::write_collisions(out, c.collisions, cfg.schema);
    }
    json logs = json::array();
    for (const auto& l : c.logs) logs.push_back(ingest::to_json(l));
    write_json(cfg.out_dir / "imputation_log.json", {{"parsed_collisions", c.parsed},
                                                     {"invalid_scan", ingest::to_json(c.scan)},
                                                     {"imputation", logs},
                                                     {"outliers_dropped", c.dropped},
                                                     {"collisions_without_casualties", c.targets.without_casualties}});
    {
        auto out = open_out(cfg.out_dir / "targets.csv");
        csv::write_row(out, {cfg.schema.id_column, "pedestrian", "over_serious", "pedestrian_over_serious"});
        for (const auto& rec : c.collisions) {
            const auto& id = rec.collision_id;
            csv::write_row(out, {id, std::to_string(c.targets.pedestrian.at(id)),
                                 std::to_string(c.targets.over_serious.at(id)),
                                 std::to_string(c.targets.interaction.at(id))});
        }
    }
    write_json(cfg.out_dir / "target_marginals.json", targets::marginals_json(c.targets, c.casualties));
    for (auto kind : {TargetKind::Pedestrian, TargetKind::OverSerious, TargetKind::PedestrianOverSerious}) {
        const auto data = targets::encode(c.collisions, c.targets, kind, cfg.feature_list(), cfg.schema);
        const auto stem = dataset_stem(kind);
        targets::write_dataset(data, with_ext(cfg.out_dir, stem, ".csv").string(),
                               with_ext(cfg.out_dir, stem, ".json").string());
    }
    log << "prep: parsed " << c.parsed << " collisions, " << c.scan.affected_rows << " rows with invalid codes, "
        << c.dropped.size() << " outliers dropped, " << c.collisions.size() << " kept\n";
}

void cmd_describe(const config::RunConfig& cfg, std::ostream& log) {
    cfg.validate(true);
    const auto dir = cfg.out_dir / "describe";
    ensure_dir(dir);
    const auto c = load_clean(cfg);
    for (const auto& col : cfg.schema.columns) {
        std::map<int, std::size_t> counts;
        for (const auto& rec : c.collisions) ++counts[rec[col.field()]];
        auto out = open_out(dir / (col.name + ".csv"));
        csv::write_row(out, {"code", "count"});
        for (const auto& [code, n] : counts) csv::write_row(out, {std::to_string(code), std::to_string(n)});
    }
    const auto m = targets::marginals_json(c.targets, c.casualties);
    {
        auto out = open_out(dir / "severity.csv");
        csv::write_row(out, {"severity", "collisions", "casualties"});
        for (const char* level : {"fatal", "serious", "slight"})
            csv::write_row(out, {level, std::to_string(m["collision_severity"][level].get<std::size_t>()),
                                 std::to_string(m["casualty_severity"][level].get<std::size_t>())});
    }
    {
        auto out = open_out(dir / "targets.csv");
        csv::write_row(out, {"target", "class_0", "class_1"});
        for (const char* t : {"pedestrian", "over_serious", "pedestrian_over_serious"})
            csv::write_row(out, {t, std::to_string(m[t]["0"].get<std::size_t>()),
                                 std::to_string(m[t]["1"].get<std::size_t>())});
    }
    log << "describe: " << cfg.schema.columns.size() << " variable tables over " << c.collisions.size()
        << " collisions -> " << dir.string() << '\n';
}

void cmd_train(const config::RunConfig& cfg, std::ostream& log) {
    cfg.validate(false);
    ensure_dir(cfg.out_dir);
    const auto data = read_staged(cfg.out_dir, dataset_stem(cfg.target));
    const auto split = resample::stratified_split(data, cfg.test_fraction, stage_seed(cfg.seed, "split"));
    const auto tstem = test_stem(cfg.target);
    targets::write_dataset(split.test, with_ext(cfg.out_dir, tstem, ".csv").string(),
                           with_ext(cfg.out_dir, tstem, ".json").string());

    auto smote_cfg = cfg.smote;
    smote_cfg.seed = stage_seed(cfg.seed, "smote");
    LabeledDataset training = split.train;
    json split_info = {{"target", to_string(cfg.target)},
                       {"train_rows", split.train.size()},
                       {"test_rows", split.test.size()},
                       {"train_positives", split.train.positives()},
                       {"test_positives", split.test.positives()},
                       {"test_checksum", checksum(split.test.rows.data())}};
    if (cfg.smote_enabled) {
        auto sm = resample::smote(split.train, smote_cfg, cfg.threads);
        split_info["smote"] = {{"rows_after", sm.data.size()},
                               {"synthetic", sm.provenance.size()},
                               {"effective_k", sm.effective_k},
                               {"k_clamped", sm.k_clamped}};
        training = std::move(sm.data);
    }
    write_json(cfg.out_dir / "split.json", split_info);

    std::vector<std::pair<std::string, metrics::EvalReport>> columns;
    for (auto kind : cfg.models) {
        auto spec = kind == ensemble::ModelKind::Forest ? cfg.forest_grid : cfg.boosted_grid;
        spec.threshold = cfg.threshold;
        spec.include_base = true;
        if (cfg.smote_enabled) spec.smote = smote_cfg;
        else spec.smote.reset();

        ensemble::Candidate baseline;
        baseline.kind = kind;
        baseline.forest = cfg.forest;
        baseline.boosted = cfg.boosted;
        const auto grid = ensemble::grid_search(split.train, spec, kind, stage_seed(cfg.seed, "grid"), cfg.threads,
                                                cfg.forest, cfg.boosted);
        {
            auto out = open_out(cfg.out_dir / ("leaderboard_" + std::string(ensemble::to_string(kind)) + ".csv"));
            ensemble::write_leaderboard(out, grid);
        }
        for (bool tuned : {false, true}) {
            const auto& cand = tuned ? grid.best : baseline;
            const auto model = ensemble::fit_candidate(training, cand, stage_seed(cfg.seed, "fit"), cfg.threads);
            const auto probs = ensemble::predict(model, split.test.rows);
            const auto tag = stage_tag(kind, tuned);
            auto rep = metrics::report(split.test.labels, probs, cfg.threshold, cfg.target, tag);
            ensemble::save_model(model, (cfg.out_dir / ("model_" + tag + ".json")).string());
            auto rj = metrics::to_json(rep);
            rj["params"] = cand.describe();
            write_json(cfg.out_dir / ("report_" + tag + ".json"), rj);
            log << "train: " << tag << " accuracy " << format_double(rep.accuracy) << " roc_auc "
                << format_double(rep.roc_auc) << '\n';
            columns.emplace_back(std::string(ensemble::to_string(kind)) + (tuned ? "_post" : "_pre"), std::move(rep));
        }
    }
    write_text(cfg.out_dir / ("report_table_" + std::string(to_string(cfg.target)) + ".txt"),
               metrics::format_table(columns));
}

void cmd_explain(const config::RunConfig& cfg, std::ostream& log) {
    cfg.validate(false);
    ensure_dir(cfg.out_dir);
    fs::path model_path = cfg.explain_model.empty()
                              ? cfg.out_dir / ("model_" + stage_tag(cfg.models.back(), true) + ".json")
                              : fs::path(cfg.explain_model);
    if (model_path.is_relative() && !cfg.explain_model.empty() && !fs::exists(model_path))
        model_path = cfg.out_dir / model_path;
    if (!fs::is_regular_file(model_path)) throw ExplainError("model not found: " + model_path.string());
    ensemble::Model model;
    try {
        model = ensemble::load_model(model_path.string());
    } catch (const Error& e) {
        throw ExplainError(std::string("cannot load model: ") + e.what());
    }
    const auto tstem = test_stem(cfg.target);
    const auto csv_path = with_ext(cfg.out_dir, tstem, ".csv");
    if (!fs::is_regular_file(csv_path)) throw ExplainError("missing " + csv_path.string() + "; run train first");
    auto data = targets::read_dataset(csv_path.string(), with_ext(cfg.out_dir, tstem, ".json").string());
    if (ensemble::feature_names(model) != data.feature_names)
        throw ExplainError("model features do not match the evaluation set");
    if (cfg.explain_max_rows > 0 && cfg.explain_max_rows < data.size()) {
        std::vector<std::size_t> head(cfg.explain_max_rows);
        for (std::size_t i = 0; i < head.size(); ++i) head[i] = i;
        data = data.subset(head);
    }
    const auto explanations = shap::explain_rows(model, data.rows, cfg.threads);
    const auto importance = shap::global_importance(explanations, data.feature_names);
    const std::string stem = model_path.stem().string();
    auto j = shap::to_json(importance);
    j["model"] = stem;
    j["rows"] = data.size();
    j["scale"] = shap::to_string(explanations.front().scale);
    j["base_value"] = explanations.front().base_value;
    write_json(cfg.out_dir / ("shap_importance_" + stem + ".json"), j);
    {
        auto out = open_out(cfg.out_dir / ("shap_beeswarm_" + stem + ".csv"));
        shap::beeswarm_export(out, explanations, data, importance);
    }
    log << "explain: " << stem << " over " << data.size() << " rows; top feature "
        << importance.feature_names[importance.ranking.front()] << '\n';
}

void cmd_spatial(const config::RunConfig& cfg, std::ostream& log) {
    cfg.validate(true);
    if (!fs::is_regular_file(cfg.boundaries_path()))
        throw ConfigError("boundaries file not found: " + cfg.boundaries_path().string());
    ensure_dir(cfg.out_dir);
    const auto c = load_clean(cfg);
    const auto polygons = geo::read_boundaries_file(cfg.boundaries_path().string(), cfg.boundary_options);
    const auto join = geo::spatial_join(c.collisions, polygons, cfg.threads);
    const std::size_t unmatched = join.unmatched.size() + join.without_location.size();
    if (join.assignments.size() + unmatched != join.total)
        throw SpatialError("join lost collisions: matched + unmatched != total");
    const auto agg = geo::aggregate_districts(join, polygons, c.targets);
    {
        auto out = open_out(cfg.out_dir / "district_summary.csv");
        geo::write_summary_csv(out, agg);
    }
    write_json(cfg.out_dir / ("choropleth_" + std::string(geo::to_string(cfg.measure)) + ".geojson"),
               geo::export_choropleth(agg.districts, polygons, cfg.measure));
    write_json(cfg.out_dir / "spatial_join.json", {{"total", join.total},
                                                   {"matched", join.assignments.size()},
                                                   {"unmatched", join.unmatched},
                                                   {"without_location", join.without_location},
                                                   {"overlaps", join.overlaps},
                                                   {"match_rate", join.match_rate()},
                                                   {"bbox_warning", join.bbox_warning}});
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.2f%%", join.match_rate() * 100.0);
    log << "spatial: matched " << join.assignments.size() << " + unmatched " << unmatched << " = " << join.total
        << " (match rate " << rate << ")\n";
    if (join.bbox_warning)
        log << "spatial: warning: most collisions fall outside the boundary extent; check both layers share a CRS\n";
}

int run_command(const std::string& command, const fs::path& config_path, const Overrides& overrides,
                std::ostream& log, std::ostream& err) {
    static const std::map<std::string, std::pair<void (*)(const config::RunConfig&, std::ostream&), int>> table{
        {"synth", {cmd_synth, kIngestFailure}},     {"prep", {cmd_prep, kIngestFailure}},
        {"describe", {cmd_describe, kIngestFailure}}, {"train", {cmd_train, kModelFailure}},
        {"explain", {cmd_explain, kExplainFailure}},  {"spatial", {cmd_spatial, kSpatialFailure}},
    };
    auto it = table.find(command);
    if (it == table.end()) {
        err << "error: unknown command '" << command << "'\n";
        return kConfigFailure;
    }
    try {
        const auto cfg = resolve_config(config_path, overrides);
        it->second.first(cfg, log);
        return kOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const ingest::IngestError& e) {
        err << "ingest error: " << e.what() << '\n';
        return kIngestFailure;
    } catch (const std::exception& e) {
        err << command << " failed: " << e.what() << '\n';
        return it->second.second;
    }
}

}  // namespace pedsafe::pipeline
