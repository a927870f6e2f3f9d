#include "pedsafe/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace pedsafe::config {

namespace {

using Section = std::map<std::string, std::string>;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string where(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

class Reader {
public:
    Reader(std::map<std::string, Section> sections, std::filesystem::path base)
        : sections_(std::move(sections)), base_(std::move(base)) {}

    const Section* section(const std::string& name) {
        auto it = sections_.find(name);
        if (it == sections_.end()) return nullptr;
        seen_sections_.insert(name);
        return &it->second;
    }

    std::optional<std::string> text(const std::string& sec, const std::string& key) {
        const Section* s = section(sec);
        if (!s) return std::nullopt;
        auto it = s->find(key);
        if (it == s->end()) return std::nullopt;
        seen_keys_.insert(sec + "\n" + key);
        return it->second;
    }

    template <typename T>
    void number(const std::string& sec, const std::string& key, T& out) {
        if (auto v = text(sec, key)) out = parse_number<T>(*v, where(sec, key));
    }

    void boolean(const std::string& sec, const std::string& key, bool& out) {
        auto v = text(sec, key);
        if (!v) return;
        if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") out = true;
        else if (*v == "false" || *v == "no" || *v == "0" || *v == "off") out = false;
        else throw ConfigError(where(sec, key) + ": expected a boolean, got '" + *v + "'");
    }

    void path(const std::string& sec, const std::string& key, std::filesystem::path& out) {
        auto v = text(sec, key);
        if (!v) return;
        if (v->empty()) {
            out.clear();
            return;
        }
        std::filesystem::path p(*v);
        out = p.is_absolute() || base_.empty() ? p : base_ / p;
    }

    template <typename T>
    static T parse_number(const std::string& v, const std::string& ctx) {
        T out{};
        const char* first = v.data();
        const char* last = v.data() + v.size();
        if (!v.empty() && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, out);
        if (ec != std::errc() || ptr != last || v.empty())
            throw ConfigError(ctx + ": cannot parse '" + v + "' as a number");
        return out;
    }

    /// Every section and key present must have been consumed.
    void reject_unknown() const {
        for (const auto& [name, keys] : sections_) {
            if (!seen_sections_.count(name)) throw ConfigError("unknown section [" + name + "]");
            for (const auto& [key, value] : keys)
                if (!seen_keys_.count(name + "\n" + key)) throw ConfigError("unknown key " + where(name, key));
        }
    }

    const std::map<std::string, Section>& all() const { return sections_; }

private:
    std::map<std::string, Section> sections_;
    std::filesystem::path base_;
    std::set<std::string> seen_sections_;
    std::set<std::string> seen_keys_;
};

std::size_t parse_depth(const std::string& v, const std::string& ctx) {
    if (v == "none" || v == "unlimited") return tree::kUnlimitedDepth;
    return Reader::parse_number<std::size_t>(v, ctx);
}

double parse_weight(const std::string& v, const std::string& ctx) {
    if (v == "balanced") return ensemble::kBalancedWeight;
    return Reader::parse_number<double>(v, ctx);
}

template <typename T, typename Fn>
void list(Reader& r, const std::string& sec, const std::string& key, std::vector<T>& out, Fn parse) {
    auto v = r.text(sec, key);
    if (!v) return;
    out.clear();
    for (const auto& item : split_list(*v)) out.push_back(parse(item, where(sec, key)));
}

std::set<int> code_set(const std::string& v, const std::string& ctx) {
    std::set<int> out;
    for (const auto& item : split_list(v)) out.insert(Reader::parse_number<int>(item, ctx));
    return out;
}

void read_column(Reader& r, const std::string& sec, ingest::ColumnSchema& col) {
    if (auto v = r.text(sec, "source")) col.source = *v;
    if (auto v = r.text(sec, "kind")) {
        if (*v == "numeric") col.kind = ingest::ColumnKind::Numeric;
        else if (*v == "categorical") col.kind = ingest::ColumnKind::Categorical;
        else throw ConfigError(where(sec, "kind") + ": expected numeric or categorical");
    }
    if (auto v = r.text(sec, "valid_codes")) col.valid_codes = code_set(*v, where(sec, "valid_codes"));
    if (auto v = r.text(sec, "invalid_codes")) col.invalid_codes = code_set(*v, where(sec, "invalid_codes"));
    r.number(sec, "min", col.numeric_min);
    r.number(sec, "max", col.numeric_max);
}

RunConfig build(Reader& r) {
    RunConfig c;
    r.section("paths");
    r.path("paths", "collisions", c.collisions);
    r.path("paths", "casualties", c.casualties);
    r.path("paths", "boundaries", c.boundaries);
    r.path("paths", "out", c.out_dir);

    auto& s = c.schema;
    for (const char* key : {"id_column", "x_column", "y_column", "casualty_id_column", "casualty_class_column",
                            "casualty_severity_column"}) {
        if (auto v = r.text("schema", key)) {
            const std::string k = key;
            if (k == "id_column") s.id_column = *v;
            else if (k == "x_column") s.x_column = *v;
            else if (k == "y_column") s.y_column = *v;
            else if (k == "casualty_id_column") s.casualty_id_column = *v;
            else if (k == "casualty_class_column") s.casualty_class_column = *v;
            else s.casualty_severity_column = *v;
        }
    }
    r.number("schema", "pedestrian_class", s.pedestrian_class);
    r.number("schema", "max_casualties", s.max_casualties);
    if (auto v = r.text("schema", "features")) c.features = split_list(*v);

    for (const auto& [name, keys] : r.all()) {
        if (name.rfind("column.", 0) != 0) continue;
        const std::string field = name.substr(7);
        auto it = std::find_if(s.columns.begin(), s.columns.end(),
                               [&](const ingest::ColumnSchema& col) { return col.name == field; });
        if (it == s.columns.end()) throw ConfigError("[" + name + "]: no such column in the schema");
        r.section(name);
        read_column(r, name, *it);
    }

    r.number("run", "seed", c.seed);
    r.number("run", "threads", c.threads);
    if (auto v = r.text("target", "kind")) {
        try {
            c.target = parse_target(*v);
        } catch (const Error& e) {
            throw ConfigError(where("target", "kind") + ": " + e.what());
        }
    }
    r.number("split", "test_fraction", c.test_fraction);
    r.number("evaluation", "threshold", c.threshold);

    r.boolean("smote", "enabled", c.smote_enabled);
    r.number("smote", "k_neighbors", c.smote.k_neighbors);
    r.number("smote", "target_ratio", c.smote.target_ratio);
    r.boolean("smote", "snap_categoricals", c.smote.snap_categoricals);
    if (auto v = r.text("smote", "distance")) {
        if (*v == "euclidean") c.smote.distance = resample::Distance::Euclidean;
        else if (*v == "manhattan") c.smote.distance = resample::Distance::Manhattan;
        else throw ConfigError(where("smote", "distance") + ": expected euclidean or manhattan");
    }

    if (auto v = r.text("models", "kinds")) {
        c.models.clear();
        for (const auto& k : split_list(*v)) c.models.push_back(ensemble::parse_model_kind(k));
        if (c.models.empty()) throw ConfigError(where("models", "kinds") + ": no model kind given");
    }

    r.number("forest", "n_trees", c.forest.n_trees);
    if (auto v = r.text("forest", "max_depth")) c.forest.tree.max_depth = parse_depth(*v, where("forest", "max_depth"));
    r.number("forest", "min_samples_leaf", c.forest.tree.min_samples_leaf);
    r.number("forest", "min_impurity_decrease", c.forest.tree.min_impurity_decrease);
    r.boolean("forest", "bootstrap", c.forest.bootstrap);
    if (auto v = r.text("forest", "max_features")) {
        if (*v == "sqrt") c.forest.max_features = ensemble::kSqrtFeatures;
        else if (*v == "all") c.forest.max_features = ensemble::kAllFeatures;
        else c.forest.max_features = Reader::parse_number<std::size_t>(*v, where("forest", "max_features"));
    }

    r.number("boosted", "rounds", c.boosted.rounds);
    if (auto v = r.text("boosted", "max_depth")) c.boosted.tree.max_depth = parse_depth(*v, where("boosted", "max_depth"));
    r.number("boosted", "min_samples_leaf", c.boosted.tree.min_samples_leaf);
    r.number("boosted", "learning_rate", c.boosted.learning_rate);
    r.number("boosted", "l2_lambda", c.boosted.l2_lambda);
    if (auto v = r.text("boosted", "positive_weight"))
        c.boosted.positive_weight = parse_weight(*v, where("boosted", "positive_weight"));

    auto size_item = [](const std::string& v, const std::string& ctx) { return Reader::parse_number<std::size_t>(v, ctx); };
    auto double_item = [](const std::string& v, const std::string& ctx) { return Reader::parse_number<double>(v, ctx); };
    for (auto* grid : {&c.forest_grid, &c.boosted_grid}) {
        if (auto v = r.text("grid", "metric")) grid->metric = ensemble::parse_selection_metric(*v);
        r.number("grid", "holdout_fraction", grid->holdout_fraction);
        r.number("grid", "k_folds", grid->k_folds);
    }
    list(r, "grid.forest", "n_trees", c.forest_grid.n_trees, size_item);
    list(r, "grid.forest", "max_depth", c.forest_grid.max_depth, parse_depth);
    list(r, "grid.forest", "min_samples_leaf", c.forest_grid.min_samples_leaf, size_item);
    list(r, "grid.boosted", "n_trees", c.boosted_grid.n_trees, size_item);
    list(r, "grid.boosted", "max_depth", c.boosted_grid.max_depth, parse_depth);
    list(r, "grid.boosted", "min_samples_leaf", c.boosted_grid.min_samples_leaf, size_item);
    list(r, "grid.boosted", "learning_rate", c.boosted_grid.learning_rate, double_item);
    list(r, "grid.boosted", "l2_lambda", c.boosted_grid.l2_lambda, double_item);
    list(r, "grid.boosted", "positive_weight", c.boosted_grid.positive_weight, parse_weight);

    if (auto v = r.text("explain", "model")) c.explain_model = *v;
    r.number("explain", "max_rows", c.explain_max_rows);

    if (auto v = r.text("spatial", "measure")) c.measure = geo::parse_measure(*v);
    if (auto v = r.text("spatial", "id_property")) c.boundary_options.id_property = *v;
    if (auto v = r.text("spatial", "name_property")) c.boundary_options.name_property = *v;

    r.number("synth", "rows", c.synth_rows);
    r.number("synth", "grid_x", c.synth_grid_x);
    r.number("synth", "grid_y", c.synth_grid_y);

    r.reject_unknown();
    return c;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::filesystem::path RunConfig::collisions_path() const {
    return collisions.empty() ? out_dir / "synthetic_collisions.csv" : collisions;
}
std::filesystem::path RunConfig::casualties_path() const {
    return casualties.empty() ? out_dir / "synthetic_casualties.csv" : casualties;
}
std::filesystem::path RunConfig::boundaries_path() const {
    return boundaries.empty() ? out_dir / "synthetic_boundaries.geojson" : boundaries;
}

std::vector<std::string> RunConfig::feature_list() const {
    return features.empty() ? targets::default_features(schema) : features;
}

void RunConfig::validate(bool check_inputs) const {
    try {
        schema.validate();
        smote.validate();
        forest.validate();
        boosted.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("split test_fraction must lie in (0, 1)");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
    if (threads == 0) throw ConfigError("threads must be at least 1");
    if (synth_rows == 0 || synth_grid_x == 0 || synth_grid_y == 0) throw ConfigError("synth sizes must be positive");
    for (const auto& f : feature_list())
        if (!schema.find(f)) throw ConfigError("feature '" + f + "' is not a schema column");
    if (out_dir.empty()) throw ConfigError("output directory not set");
    if (check_inputs) {
        for (const auto& p : {collisions_path(), casualties_path()})
            if (!std::filesystem::is_regular_file(p)) throw ConfigError("input file not found: " + p.string());
    }
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    std::map<std::string, Section> sections;
    for (const auto& [name, child] : tree) {
        if (child.empty() && !child.data().empty()) throw ConfigError("config: key '" + name + "' outside any section");
        auto& sec = sections[name];
        for (const auto& [key, value] : child) sec[key] = trim(value.data());
    }
    Reader r(std::move(sections), base_dir);
    try {
        return build(r);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_config(in, path.parent_path());
}

}  // namespace pedsafe::config
