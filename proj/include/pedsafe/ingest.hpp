#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pedsafe/common.hpp"

namespace pedsafe::ingest {

enum class ColumnKind { Numeric, Categorical };

/// The collision attributes the toolkit models on.
enum class Field : std::uint8_t {
    NumberOfVehicles,
    NumberOfCasualties,
    DayOfWeek,
    NearestHour,
    RoadType,
    SpeedLimit,
    JunctionControl,
    JunctionDetail,
    LightConditions,
    WeatherConditions,
    RoadSurfaceConditions,
    PoliceAttendance,
    HumanControlCrossing,
};
inline constexpr std::size_t kFieldCount = 13;

std::string_view field_name(Field f);
std::optional<Field> field_from_name(std::string_view name);
const std::array<Field, kFieldCount>& all_fields();

struct ColumnSchema {
    std::string name;    // canonical field name, e.g. "speed_limit"
    std::string source;  // CSV header; empty means same as name
    ColumnKind kind = ColumnKind::Categorical;
    std::set<int> valid_codes;  // categorical only
    int numeric_min = 0;        // numeric only, inclusive
    int numeric_max = 0;
    std::set<int> invalid_codes{-1, 99};

    const std::string& header() const { return source.empty() ? name : source; }
    Field field() const;
    bool is_invalid(int value) const;
    /// Throws ConfigError when the invariants do not hold.
    void validate() const;
};

/// Column layout of the collision and casualty files.
struct Schema {
    std::vector<ColumnSchema> columns;
    std::string id_column = "accident_index";
    std::string x_column = "location_easting_osgr";
    std::string y_column = "location_northing_osgr";
    std::string casualty_id_column = "accident_index";
    std::string casualty_class_column = "casualty_class";
    std::string casualty_severity_column = "casualty_severity";
    int pedestrian_class = 3;
    int max_casualties = 19;

    const ColumnSchema* find(std::string_view name) const;
    void validate() const;
};

/// Table-1 column set with the published code enumerations.
Schema default_schema();

struct CollisionRecord {
    std::string collision_id;
    std::array<int, kFieldCount> codes{};
    double x = std::numeric_limits<double>::quiet_NaN();
    double y = std::numeric_limits<double>::quiet_NaN();

    int& operator[](Field f) { return codes[static_cast<std::size_t>(f)]; }
    int operator[](Field f) const { return codes[static_cast<std::size_t>(f)]; }
    bool has_location() const;

    /// Missing coordinates (NaN) compare equal to each other.
    bool operator==(const CollisionRecord& other) const;
};

struct CasualtyRow {
    std::string collision_id;
    int casualty_class = 0;
    int casualty_severity = 3;  // 1 fatal, 2 serious, 3 slight
};

class IngestError : public Error {
public:
    enum class Kind { MissingColumn, DuplicateKey, MalformedCell, AllInvalidColumn };

    IngestError(Kind kind, std::string column, std::size_t row, const std::string& detail);

    Kind kind() const { return kind_; }
    const std::string& column() const { return column_; }
    /// 1-based data row (header excluded); 0 when not row-specific.
    std::size_t row() const { return row_; }

private:
    Kind kind_;
    std::string column_;
    std::size_t row_;
};

std::vector<CollisionRecord> parse_collisions(std::istream& in, const Schema& schema);
std::vector<CasualtyRow> parse_casualties(std::istream& in, const Schema& schema);

struct InvalidScan {
    std::map<std::string, std::size_t> per_column;
    std::size_t affected_rows = 0;
};

InvalidScan scan_invalid(const std::vector<CollisionRecord>& records, const Schema& schema);

struct ImputationLog {
    std::string column;
    std::size_t replaced_count = 0;
    int mode_value = 0;
    std::vector<std::string> affected_row_ids;
};

struct Imputed {
    std::vector<CollisionRecord> records;
    std::vector<ImputationLog> logs;  // one per schema column, schema order
};

/// Replaces invalid cells by the most frequent valid code of the column
/// (ties to the smallest code). Columns are processed independently.
Imputed impute_mode(std::vector<CollisionRecord> records, const Schema& schema,
                    unsigned threads = 1);

struct OutlierResult {
    std::vector<CollisionRecord> records;
    std::vector<std::string> dropped_ids;
};

OutlierResult drop_casualty_outliers(std::vector<CollisionRecord> records, int max_casualties);

/// One additive term of a synthetic logistic model. `feature` is a schema
/// field name (scaled to [0, 1] over its code range) or one of the derived
/// indicators "darkness", "wet_surface", "night". A non-empty `times` makes
/// the term a product of two features.
struct Effect {
    std::string feature;
    double coef = 0.0;
    std::string times;
};

struct EffectSpec {
    double severity_intercept = -3.0;
    std::vector<Effect> severity;
    double pedestrian_intercept = -0.5;
    std::vector<Effect> pedestrian;
    double invalid_fraction = 0.05;
    double missing_location_fraction = 0.005;
    double outside_fraction = 0.01;
    double area_min_x = 0.0, area_min_y = 0.0, area_max_x = 100.0, area_max_y = 100.0;
};

/// Default planted effects: severity driven by speed limit and darkness,
/// pedestrian involvement more likely on low-speed roads.
EffectSpec default_effects();

double synthetic_term(const CollisionRecord& record, std::string_view feature, const Schema& schema);
double severity_probability(const CollisionRecord& record, const EffectSpec& spec, const Schema& schema);
double pedestrian_probability(const CollisionRecord& record, const EffectSpec& spec, const Schema& schema);

struct SyntheticData {
    std::vector<CollisionRecord> collisions;
    std::vector<CasualtyRow> casualties;
    /// Per-collision severity probability under the generating model, before
    /// invalid-code corruption. Used to estimate the Bayes-optimal AUC.
    std::vector<double> severity_probability;
};

SyntheticData generate_synthetic(std::size_t n, std::uint64_t seed, const EffectSpec& spec,
                                 const Schema& schema);

void write_collisions(std::ostream& out, const std::vector<CollisionRecord>& records,
                      const Schema& schema);
void write_casualties(std::ostream& out, const std::vector<CasualtyRow>& rows, const Schema& schema);

nlohmann::json to_json(const ImputationLog& log);
nlohmann::json to_json(const InvalidScan& scan);

}  // namespace pedsafe::ingest
