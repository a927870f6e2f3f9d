#include "pedsafe/targets.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pedsafe/csv.hpp"

namespace pedsafe {

std::string_view to_string(TargetKind t) {
    switch (t) {
        case TargetKind::Pedestrian: return "pedestrian";
        case TargetKind::OverSerious: return "over_serious";
        case TargetKind::PedestrianOverSerious: return "pedestrian_over_serious";
    }
    return "pedestrian";
}

TargetKind parse_target(std::string_view text) {
    if (text == "pedestrian") return TargetKind::Pedestrian;
    if (text == "over_serious" || text == "severity") return TargetKind::OverSerious;
    if (text == "pedestrian_over_serious" || text == "interaction")
        return TargetKind::PedestrianOverSerious;
    throw ConfigError("unknown target '" + std::string(text) + "'");
}

std::size_t LabeledDataset::positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    out.feature_names = feature_names;
    out.target = target;
    out.column_kinds = column_kinds;
    out.categorical_levels = categorical_levels;
    out.rows = Matrix(indices.size(), width());
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = rows.row(indices[i]);
        std::copy(src.begin(), src.end(), out.rows.row(i).begin());
        out.labels.push_back(labels[indices[i]]);
        if (!row_ids.empty()) out.row_ids.push_back(row_ids[indices[i]]);
    }
    return out;
}

void LabeledDataset::validate() const {
    if (feature_names.empty()) throw ModelError("dataset has no features");
    if (labels.empty()) throw ModelError("dataset has no rows");
    if (rows.rows() != labels.size() || rows.cols() != feature_names.size())
        throw ModelError("dataset matrix shape does not match labels/features");
    if (column_kinds.size() != width() || categorical_levels.size() != width())
        throw ModelError("dataset column metadata has the wrong length");
    if (!row_ids.empty() && row_ids.size() != labels.size())
        throw ModelError("dataset row ids have the wrong length");
    for (int y : labels)
        if (y != 0 && y != 1) throw ModelError("labels must be 0 or 1");
}

}  // namespace pedsafe

namespace pedsafe::targets {

using ingest::CasualtyRow;
using ingest::CollisionRecord;

PedestrianFlags build_pedestrian_flag(const std::vector<CollisionRecord>& collisions,
                                      const std::vector<CasualtyRow>& casualties, int pedestrian_class) {
    std::map<std::string, int> any_ped;
    for (const auto& c : casualties) {
        int& flag = any_ped[c.collision_id];
        if (c.casualty_class == pedestrian_class) flag = 1;
    }
    PedestrianFlags out;
    for (const auto& rec : collisions) {
        auto it = any_ped.find(rec.collision_id);
        if (it == any_ped.end()) {
            out.flags[rec.collision_id] = 0;
            out.without_casualties.push_back(rec.collision_id);
        } else {
            out.flags[rec.collision_id] = it->second;
        }
    }
    return out;
}

FlagMap build_over_serious(const std::vector<CasualtyRow>& casualties) {
    std::map<std::string, int> worst;  // lowest code = most severe
    for (const auto& c : casualties) {
        auto [it, inserted] = worst.emplace(c.collision_id, c.casualty_severity);
        if (!inserted) it->second = std::min(it->second, c.casualty_severity);
    }
    FlagMap out;
    for (const auto& [id, sev] : worst) out[id] = sev <= 2 ? 1 : 0;
    return out;
}

FlagMap build_interaction(const FlagMap& pedestrian, const FlagMap& over_serious) {
    if (pedestrian.size() != over_serious.size())
        throw KeyMismatch("interaction: flag maps cover different collisions");
    FlagMap out;
    auto a = pedestrian.begin();
    auto b = over_serious.begin();
    for (; a != pedestrian.end(); ++a, ++b) {
        if (a->first != b->first)
            throw KeyMismatch("interaction: key '" + a->first + "' has no partner");
        out.emplace_hint(out.end(), a->first, a->second * b->second);
    }
    return out;
}

const FlagMap& TargetTable::get(TargetKind kind) const {
    switch (kind) {
        case TargetKind::Pedestrian: return pedestrian;
        case TargetKind::OverSerious: return over_serious;
        case TargetKind::PedestrianOverSerious: return interaction;
    }
    return pedestrian;
}

TargetTable build_targets(const std::vector<CollisionRecord>& collisions,
                          const std::vector<CasualtyRow>& casualties, int pedestrian_class) {
    TargetTable t;
    auto ped = build_pedestrian_flag(collisions, casualties, pedestrian_class);
    t.pedestrian = std::move(ped.flags);
    t.without_casualties = std::move(ped.without_casualties);
    const FlagMap severe = build_over_serious(casualties);
    for (const auto& rec : collisions) {
        auto it = severe.find(rec.collision_id);
        t.over_serious[rec.collision_id] = it == severe.end() ? 0 : it->second;
    }
    t.interaction = build_interaction(t.pedestrian, t.over_serious);
    return t;
}

std::vector<std::string> default_features(const ingest::Schema& schema) {
    std::vector<std::string> out;
    for (const auto& c : schema.columns) out.push_back(c.name);
    return out;
}

LabeledDataset encode(const std::vector<CollisionRecord>& collisions, const TargetTable& targets,
                      TargetKind target, const std::vector<std::string>& feature_list,
                      const ingest::Schema& schema) {
    std::vector<ingest::Field> fields;
    LabeledDataset ds;
    ds.target = target;
    for (const auto& name : feature_list) {
        auto f = ingest::field_from_name(name);
        if (!f) throw UnknownFeature("unknown feature '" + name + "'");
        fields.push_back(*f);
        ds.feature_names.push_back(name);
        const ingest::ColumnSchema* col = schema.find(name);
        ds.column_kinds.push_back(col ? col->kind : ingest::ColumnKind::Numeric);
    }
    const FlagMap& flags = targets.get(target);
    ds.rows = Matrix(collisions.size(), fields.size());
    ds.categorical_levels.assign(fields.size(), {});
    std::vector<std::set<double>> levels(fields.size());
    for (std::size_t i = 0; i < collisions.size(); ++i) {
        const auto& rec = collisions[i];
        for (std::size_t j = 0; j < fields.size(); ++j) {
            ds.rows.at(i, j) = rec[fields[j]];
            if (ds.column_kinds[j] == ingest::ColumnKind::Categorical) levels[j].insert(rec[fields[j]]);
        }
        auto it = flags.find(rec.collision_id);
        ds.labels.push_back(it == flags.end() ? 0 : it->second);
        ds.row_ids.push_back(rec.collision_id);
    }
    for (std::size_t j = 0; j < fields.size(); ++j)
        ds.categorical_levels[j].assign(levels[j].begin(), levels[j].end());
    return ds;
}

void write_dataset(const LabeledDataset& data, const std::string& csv_path, const std::string& json_path) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error("cannot write " + csv_path);
    std::vector<std::string> header;
    const bool ids = !data.row_ids.empty();
    if (ids) header.push_back("row_id");
    header.insert(header.end(), data.feature_names.begin(), data.feature_names.end());
    header.push_back("label");
    csv::write_row(out, header);
    std::vector<std::string> fields;
    for (std::size_t i = 0; i < data.size(); ++i) {
        fields.clear();
        if (ids) fields.push_back(data.row_ids[i]);
        for (double v : data.rows.row(i)) fields.push_back(format_double(v));
        fields.push_back(std::to_string(data.labels[i]));
        csv::write_row(out, fields);
    }

    nlohmann::json meta;
    meta["target"] = to_string(data.target);
    meta["feature_names"] = data.feature_names;
    std::vector<std::string> kinds;
    for (auto k : data.column_kinds) kinds.push_back(k == ingest::ColumnKind::Numeric ? "numeric" : "categorical");
    meta["column_kinds"] = kinds;
    meta["categorical_levels"] = data.categorical_levels;
    meta["label_column"] = "label";
    meta["has_row_ids"] = ids;
    std::ofstream js(json_path, std::ios::binary);
    if (!js) throw Error("cannot write " + json_path);
    js << meta.dump(2) << '\n';
}

LabeledDataset read_dataset(const std::string& csv_path, const std::string& json_path) {
    std::ifstream js(json_path);
    if (!js) throw Error("cannot open " + json_path);
    const nlohmann::json meta = nlohmann::json::parse(js);
    LabeledDataset ds;
    ds.target = parse_target(meta.at("target").get<std::string>());
    ds.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
    for (const auto& k : meta.at("column_kinds"))
        ds.column_kinds.push_back(k == "numeric" ? ingest::ColumnKind::Numeric : ingest::ColumnKind::Categorical);
    ds.categorical_levels = meta.at("categorical_levels").get<std::vector<std::vector<double>>>();
    const bool ids = meta.value("has_row_ids", false);

    const csv::Table t = csv::read_file(csv_path);
    const std::size_t offset = ids ? 1 : 0;
    if (t.header.size() != ds.width() + offset + 1)
        throw Error(csv_path + ": column count does not match sidecar");
    ds.rows = Matrix(t.rows.size(), ds.width());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        if (r.size() != t.header.size()) throw Error(csv_path + ": ragged row " + std::to_string(i + 1));
        if (ids) ds.row_ids.push_back(r[0]);
        for (std::size_t j = 0; j < ds.width(); ++j) {
            const std::string& s = r[j + offset];
            double v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size())
                throw Error(csv_path + ": bad number '" + s + "' in row " + std::to_string(i + 1));
            ds.rows.at(i, j) = v;
        }
        ds.labels.push_back(r.back() == "1" ? 1 : 0);
    }
    ds.validate();
    return ds;
}

nlohmann::json marginals_json(const TargetTable& targets, const std::vector<CasualtyRow>& casualties) {
    auto counts = [](const FlagMap& m) {
        std::size_t ones = 0;
        for (const auto& [k, v] : m) ones += v == 1;
        return nlohmann::json{{"0", m.size() - ones}, {"1", ones}};
    };
    // Severity of the worst casualty per collision (the collision-level
    // distribution) and the raw per-casualty distribution.
    std::map<std::string, int> worst;
    std::array<std::size_t, 4> per_casualty{};
    for (const auto& c : casualties) {
        auto [it, inserted] = worst.emplace(c.collision_id, c.casualty_severity);
        if (!inserted) it->second = std::min(it->second, c.casualty_severity);
        ++per_casualty[static_cast<std::size_t>(c.casualty_severity)];
    }
    std::array<std::size_t, 4> per_collision{};
    for (const auto& [id, flag] : targets.pedestrian) {
        auto it = worst.find(id);
        if (it != worst.end()) ++per_collision[static_cast<std::size_t>(it->second)];
    }
    nlohmann::json j;
    j["collisions"] = targets.pedestrian.size();
    j["pedestrian"] = counts(targets.pedestrian);
    j["over_serious"] = counts(targets.over_serious);
    j["pedestrian_over_serious"] = counts(targets.interaction);
    j["collision_severity"] = {{"fatal", per_collision[1]}, {"serious", per_collision[2]}, {"slight", per_collision[3]}};
    j["casualty_severity"] = {{"fatal", per_casualty[1]}, {"serious", per_casualty[2]}, {"slight", per_casualty[3]}};
    j["collisions_without_casualties"] = targets.without_casualties.size();
    return j;
}

}  // namespace pedsafe::targets
