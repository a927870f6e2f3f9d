#include "pedsafe/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "pedsafe/csv.hpp"

namespace pedsafe::ingest {

namespace {

constexpr std::array<std::string_view, kFieldCount> kFieldNames = {
    "number_of_vehicles",  "number_of_casualties",    "day_of_week",
    "nearest_hour",        "road_type",               "speed_limit",
    "junction_control",    "junction_detail",         "light_conditions",
    "weather_conditions",  "road_surface_conditions", "police_attendance",
    "human_control_crossing",
};

const char* kind_label(IngestError::Kind k) {
    switch (k) {
        case IngestError::Kind::MissingColumn: return "missing column";
        case IngestError::Kind::DuplicateKey: return "duplicate key";
        case IngestError::Kind::MalformedCell: return "malformed cell";
        case IngestError::Kind::AllInvalidColumn: return "no valid value to impute from";
    }
    return "ingest error";
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::optional<int> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && p == s.data() + s.size()) return v;
    double d = 0;
    auto [pd, ecd] = std::from_chars(s.data(), s.data() + s.size(), d);
    if (ecd == std::errc{} && pd == s.data() + s.size() && std::isfinite(d) && d == std::floor(d) &&
        std::abs(d) < 1e9)
        return static_cast<int>(d);
    return std::nullopt;
}

// "HH:MM" rounds to the nearest hour, so 23:30 and later map to 24.
std::optional<int> parse_clock(std::string_view s) {
    s = trim(s);
    auto colon = s.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    auto h = parse_int(s.substr(0, colon));
    auto m = parse_int(s.substr(colon + 1, 2));
    if (!h || !m || *h < 0 || *h > 23 || *m < 0 || *m > 59) return std::nullopt;
    return *h + (*m >= 30 ? 1 : 0);
}

double parse_coordinate(std::string_view s) {
    s = trim(s);
    double v = std::numeric_limits<double>::quiet_NaN();
    if (s.empty()) return v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
        return std::numeric_limits<double>::quiet_NaN();
    return v;
}

int require_column(const csv::Table& t, const std::string& name) {
    int idx = t.column(name);
    if (idx < 0)
        throw IngestError(IngestError::Kind::MissingColumn, name, 0, "header lacks '" + name + "'");
    return idx;
}

const std::string& cell(const csv::Table& t, std::size_t r, int c, const std::string& column) {
    const auto& row = t.rows[r];
    if (static_cast<std::size_t>(c) >= row.size())
        throw IngestError(IngestError::Kind::MalformedCell, column, r + 1, "row is too short");
    return row[static_cast<std::size_t>(c)];
}

}  // namespace

std::string_view field_name(Field f) { return kFieldNames[static_cast<std::size_t>(f)]; }

std::optional<Field> field_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kFieldCount; ++i)
        if (kFieldNames[i] == name) return static_cast<Field>(i);
    return std::nullopt;
}

const std::array<Field, kFieldCount>& all_fields() {
    static const auto fields = [] {
        std::array<Field, kFieldCount> a{};
        for (std::size_t i = 0; i < kFieldCount; ++i) a[i] = static_cast<Field>(i);
        return a;
    }();
    return fields;
}

Field ColumnSchema::field() const {
    auto f = field_from_name(name);
    if (!f) throw ConfigError("unknown collision field '" + name + "'");
    return *f;
}

bool ColumnSchema::is_invalid(int value) const {
    if (invalid_codes.contains(value)) return true;
    return kind == ColumnKind::Categorical && !valid_codes.contains(value);
}

void ColumnSchema::validate() const {
    (void)field();
    for (int code : invalid_codes)
        if (valid_codes.contains(code))
            throw ConfigError("column '" + name + "': code " + std::to_string(code) +
                              " is both valid and invalid");
    if (kind == ColumnKind::Numeric && numeric_min > numeric_max)
        throw ConfigError("column '" + name + "': numeric range min > max");
    if (kind == ColumnKind::Categorical && valid_codes.empty())
        throw ConfigError("column '" + name + "': categorical column without valid codes");
}

const ColumnSchema* Schema::find(std::string_view name) const {
    for (const auto& c : columns)
        if (c.name == name) return &c;
    return nullptr;
}

void Schema::validate() const {
    if (columns.empty()) throw ConfigError("schema has no columns");
    std::set<std::string> seen;
    for (const auto& c : columns) {
        c.validate();
        if (!seen.insert(c.name).second) throw ConfigError("column '" + c.name + "' listed twice");
    }
    if (max_casualties < 1) throw ConfigError("max_casualties must be >= 1");
}

Schema default_schema() {
    auto numeric = [](std::string name, int lo, int hi) {
        ColumnSchema c;
        c.name = std::move(name);
        c.kind = ColumnKind::Numeric;
        c.numeric_min = lo;
        c.numeric_max = hi;
        return c;
    };
    auto categorical = [](std::string name, std::set<int> codes) {
        ColumnSchema c;
        c.name = std::move(name);
        c.kind = ColumnKind::Categorical;
        c.valid_codes = std::move(codes);
        return c;
    };
    Schema s;
    s.columns = {
        numeric("number_of_vehicles", 1, 999),
        numeric("number_of_casualties", 1, 999),
        numeric("day_of_week", 1, 7),
        numeric("nearest_hour", 0, 24),
        categorical("road_type", {1, 2, 3, 6, 7, 9}),
        numeric("speed_limit", 0, 70),
        categorical("junction_control", {1, 2, 3, 4}),
        categorical("junction_detail", {0, 1, 2, 3, 5, 6, 7, 8, 9}),
        categorical("light_conditions", {1, 4, 5, 6, 7}),
        categorical("weather_conditions", {1, 2, 3, 4, 5, 6, 7, 8, 9}),
        categorical("road_surface_conditions", {1, 2, 3, 4, 5}),
        categorical("police_attendance", {1, 2, 3}),
        categorical("human_control_crossing", {0, 1, 2}),
    };
    return s;
}

bool CollisionRecord::has_location() const { return std::isfinite(x) && std::isfinite(y); }

bool CollisionRecord::operator==(const CollisionRecord& other) const {
    auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
    return collision_id == other.collision_id && codes == other.codes && same(x, other.x) && same(y, other.y);
}

IngestError::IngestError(Kind kind, std::string column, std::size_t row, const std::string& detail)
    : Error(std::string(kind_label(kind)) + (column.empty() ? "" : " [column " + column + "]") +
            (row ? " [row " + std::to_string(row) + "]" : "") + ": " + detail),
      kind_(kind),
      column_(std::move(column)),
      row_(row) {}

std::vector<CollisionRecord> parse_collisions(std::istream& in, const Schema& schema) {
    const csv::Table t = csv::read(in);
    const int id_col = require_column(t, schema.id_column);
    std::vector<std::pair<const ColumnSchema*, int>> cols;
    for (const auto& c : schema.columns) cols.emplace_back(&c, require_column(t, c.header()));
    const int x_col = t.column(schema.x_column);
    const int y_col = t.column(schema.y_column);

    std::vector<CollisionRecord> out;
    out.reserve(t.rows.size());
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        CollisionRecord rec;
        rec.collision_id = std::string(trim(cell(t, r, id_col, schema.id_column)));
        if (rec.collision_id.empty())
            throw IngestError(IngestError::Kind::MalformedCell, schema.id_column, r + 1, "empty key");
        if (!seen.insert(rec.collision_id).second)
            throw IngestError(IngestError::Kind::DuplicateKey, schema.id_column, r + 1,
                              "'" + rec.collision_id + "' appears more than once");
        for (const auto& [col, idx] : cols) {
            const std::string& text = cell(t, r, idx, col->header());
            const Field f = col->field();
            std::optional<int> v = parse_int(text);
            if (!v && f == Field::NearestHour) v = parse_clock(text);
            if (!v)
                throw IngestError(IngestError::Kind::MalformedCell, col->header(), r + 1,
                                  "cannot parse '" + text + "' as an integer code");
            if (col->kind == ColumnKind::Numeric && !col->invalid_codes.contains(*v) &&
                (*v < col->numeric_min || *v > col->numeric_max))
                throw IngestError(IngestError::Kind::MalformedCell, col->header(), r + 1,
                                  "value " + std::to_string(*v) + " outside [" +
                                      std::to_string(col->numeric_min) + ", " +
                                      std::to_string(col->numeric_max) + "]");
            rec[f] = *v;
        }
        if (x_col >= 0 && y_col >= 0) {
            rec.x = parse_coordinate(cell(t, r, x_col, schema.x_column));
            rec.y = parse_coordinate(cell(t, r, y_col, schema.y_column));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<CasualtyRow> parse_casualties(std::istream& in, const Schema& schema) {
    const csv::Table t = csv::read(in);
    const int id_col = require_column(t, schema.casualty_id_column);
    const int class_col = require_column(t, schema.casualty_class_column);
    const int sev_col = require_column(t, schema.casualty_severity_column);
    std::vector<CasualtyRow> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        CasualtyRow row;
        row.collision_id = std::string(trim(cell(t, r, id_col, schema.casualty_id_column)));
        if (row.collision_id.empty())
            throw IngestError(IngestError::Kind::MalformedCell, schema.casualty_id_column, r + 1,
                              "empty key");
        auto cls = parse_int(cell(t, r, class_col, schema.casualty_class_column));
        if (!cls)
            throw IngestError(IngestError::Kind::MalformedCell, schema.casualty_class_column, r + 1,
                              "not an integer code");
        const std::string& sev_text = cell(t, r, sev_col, schema.casualty_severity_column);
        auto sev = parse_int(sev_text);
        if (!sev || *sev < 1 || *sev > 3)
            throw IngestError(IngestError::Kind::MalformedCell, schema.casualty_severity_column,
                              r + 1, "severity '" + sev_text + "' not in {1,2,3}");
        row.casualty_class = *cls;
        row.casualty_severity = *sev;
        out.push_back(std::move(row));
    }
    return out;
}

InvalidScan scan_invalid(const std::vector<CollisionRecord>& records, const Schema& schema) {
    InvalidScan scan;
    for (const auto& c : schema.columns) scan.per_column[c.name] = 0;
    for (const auto& rec : records) {
        bool affected = false;
        for (const auto& c : schema.columns) {
            if (c.is_invalid(rec[c.field()])) {
                ++scan.per_column[c.name];
                affected = true;
            }
        }
        if (affected) ++scan.affected_rows;
    }
    return scan;
}

Imputed impute_mode(std::vector<CollisionRecord> records, const Schema& schema, unsigned threads) {
    Imputed result;
    result.logs.resize(schema.columns.size());
    parallel_for(schema.columns.size(), threads, [&](std::size_t ci) {
        const ColumnSchema& col = schema.columns[ci];
        const Field f = col.field();
        std::map<int, std::size_t> freq;
        for (const auto& rec : records)
            if (!col.is_invalid(rec[f])) ++freq[rec[f]];

        ImputationLog& log = result.logs[ci];
        log.column = col.name;
        if (freq.empty()) {
            if (records.empty()) return;
            throw IngestError(IngestError::Kind::AllInvalidColumn, col.name, 0,
                              "every cell holds an invalid code");
        }
        // std::map iterates ascending, so strict '>' keeps the smallest code on ties.
        auto best = freq.begin();
        for (auto it = freq.begin(); it != freq.end(); ++it)
            if (it->second > best->second) best = it;
        log.mode_value = best->first;
        for (auto& rec : records) {
            if (col.is_invalid(rec[f])) {
                rec[f] = log.mode_value;
                log.affected_row_ids.push_back(rec.collision_id);
            }
        }
        log.replaced_count = log.affected_row_ids.size();
    });
    result.records = std::move(records);
    return result;
}

OutlierResult drop_casualty_outliers(std::vector<CollisionRecord> records, int max_casualties) {
    if (max_casualties < 1) throw ConfigError("max_casualties must be >= 1");
    OutlierResult out;
    out.records.reserve(records.size());
    for (auto& rec : records) {
        if (rec[Field::NumberOfCasualties] > max_casualties)
            out.dropped_ids.push_back(rec.collision_id);
        else
            out.records.push_back(std::move(rec));
    }
    return out;
}

void write_collisions(std::ostream& out, const std::vector<CollisionRecord>& records,
                      const Schema& schema) {
    std::vector<std::string> header{schema.id_column};
    for (const auto& c : schema.columns) header.push_back(c.header());
    header.push_back(schema.x_column);
    header.push_back(schema.y_column);
    csv::write_row(out, header);
    std::vector<std::string> fields;
    for (const auto& rec : records) {
        fields.clear();
        fields.push_back(rec.collision_id);
        for (const auto& c : schema.columns) fields.push_back(std::to_string(rec[c.field()]));
        fields.push_back(std::isfinite(rec.x) ? format_double(rec.x) : "");
        fields.push_back(std::isfinite(rec.y) ? format_double(rec.y) : "");
        csv::write_row(out, fields);
    }
}

void write_casualties(std::ostream& out, const std::vector<CasualtyRow>& rows, const Schema& schema) {
    csv::write_row(out, {schema.casualty_id_column, schema.casualty_class_column,
                         schema.casualty_severity_column});
    for (const auto& r : rows)
        csv::write_row(out, {r.collision_id, std::to_string(r.casualty_class),
                             std::to_string(r.casualty_severity)});
}

nlohmann::json to_json(const ImputationLog& log) {
    return {{"column", log.column},
            {"replaced_count", log.replaced_count},
            {"mode_value", log.mode_value},
            {"affected_row_ids", log.affected_row_ids}};
}

nlohmann::json to_json(const InvalidScan& scan) {
    nlohmann::json cols = nlohmann::json::object();
    for (const auto& [k, v] : scan.per_column) cols[k] = v;
    return {{"per_column", cols}, {"affected_rows", scan.affected_rows}};
}

}  // namespace pedsafe::ingest
