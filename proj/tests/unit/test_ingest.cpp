#include <doctest.h>

#include <functional>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "pedsafe/targets.hpp"
#include "support.hpp"

using namespace pedsafe;
using namespace pedsafe::ingest;
using testsupport::collisions_csv;
using testsupport::valid_record;

using namespace oracle;
namespace {

std::vector<CollisionRecord> with_days(const std::vector<int>& days, const Schema& s) {
    std::vector<CollisionRecord> out;
    for (std::size_t i = 0; i < days.size(); ++i) {
        auto r = valid_record("C" + std::to_string(i), s);
        r[Field::DayOfWeek] = days[i];
        out.push_back(r);
    }
    return out;
}

std::vector<int> days_of(const std::vector<CollisionRecord>& rs) {
    std::vector<int> out;
    for (const auto& r : rs) out.push_back(r[Field::DayOfWeek]);
    return out;
}

IngestError::Kind ingest_kind(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const IngestError& e) {
        return e.kind();
    }
    FAIL("no IngestError raised");
    return IngestError::Kind::MalformedCell;
}

}  // namespace

TEST_CASE("default schema validates and covers every field") {
    const auto s = default_schema();
    CHECK_NOTHROW(s.validate());
    CHECK(s.columns.size() == kFieldCount);
    for (auto f : all_fields()) CHECK(s.find(field_name(f)) != nullptr);
}

TEST_CASE("schema rejects overlapping valid and invalid codes") {
    auto s = default_schema();
    s.columns[4].valid_codes.insert(99);
    CHECK_THROWS(s.validate());
}

TEST_CASE("three well-formed rows parse with ids preserved") {
    const auto s = default_schema();
    std::vector<CollisionRecord> rs{valid_record("A1", s), valid_record("B2", s), valid_record("C3", s)};
    rs[1][Field::SpeedLimit] = 30;
    std::istringstream in(collisions_csv(rs, s));
    const auto parsed = parse_collisions(in, s);
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[0].collision_id == "A1");
    CHECK(parsed[2].collision_id == "C3");
    CHECK(parsed == rs);
}

TEST_CASE("repeated collision id raises DuplicateKey") {
    const auto s = default_schema();
    std::istringstream in(collisions_csv({valid_record("A", s), valid_record("A", s)}, s));
    CHECK(ingest_kind([&] { parse_collisions(in, s); }) == IngestError::Kind::DuplicateKey);
}

TEST_CASE("missing column raises MissingColumn naming it") {
    const auto s = default_schema();
    std::istringstream in("accident_index,number_of_vehicles\nA,1\n");
    try {
        parse_collisions(in, s);
        FAIL("expected an error");
    } catch (const IngestError& e) {
        CHECK(e.kind() == IngestError::Kind::MissingColumn);
        CHECK(e.column() == "number_of_casualties");
    }
}

TEST_CASE("numeric value outside its range is malformed unless it is an invalid code") {
    const auto s = default_schema();
    auto r = valid_record("A", s);
    r[Field::SpeedLimit] = 80;
    std::istringstream bad(collisions_csv({r}, s));
    CHECK(ingest_kind([&] { parse_collisions(bad, s); }) == IngestError::Kind::MalformedCell);
    r[Field::SpeedLimit] = 99;
    std::istringstream ok(collisions_csv({r}, s));
    CHECK(parse_collisions(ok, s)[0][Field::SpeedLimit] == 99);
}

TEST_CASE("clock text rounds to the nearest hour") {
    const auto s = default_schema();
    auto text = collisions_csv({valid_record("A", s), valid_record("B", s), valid_record("C", s)}, s);
    // nearest_hour is the 5th column; rewrite its cells
    std::istringstream src(text);
    std::string line, out;
    std::getline(src, line);
    out = line + "\n";
    const char* clocks[] = {"07:29", "07:30", "23:45"};
    for (int i = 0; std::getline(src, line); ++i) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        cells[4] = clocks[i];
        for (std::size_t k = 0; k < cells.size(); ++k) out += (k ? "," : "") + cells[k];
        out += "\n";
    }
    std::istringstream in(out);
    const auto rs = parse_collisions(in, s);
    CHECK(rs[0][Field::NearestHour] == 7);
    CHECK(rs[1][Field::NearestHour] == 8);
    CHECK(rs[2][Field::NearestHour] == 24);
}

TEST_CASE("unparseable coordinates become NaN and the row is kept") {
    const auto s = default_schema();
    auto r = valid_record("A", s);
    r.x = std::numeric_limits<double>::quiet_NaN();
    std::istringstream in(collisions_csv({r, valid_record("B", s)}, s));
    const auto rs = parse_collisions(in, s);
    REQUIRE(rs.size() == 2);
    CHECK_FALSE(rs[0].has_location());
    CHECK(rs[1].has_location());
}

TEST_CASE("casualty rows share a key; severity 4 is malformed") {
    const auto s = default_schema();
    std::istringstream two("accident_index,casualty_class,casualty_severity\nA,1,3\nA,3,2\n");
    const auto rows = parse_casualties(two, s);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].collision_id == rows[1].collision_id);
    std::istringstream bad("accident_index,casualty_class,casualty_severity\nA,1,4\n");
    CHECK(ingest_kind([&] { parse_casualties(bad, s); }) == IngestError::Kind::MalformedCell);
}

TEST_CASE("scan counts invalid cells") {
    const auto s = default_schema();
    const auto scan = scan_invalid(with_days({1, 2, -1, 99}, s), s);
    CHECK(scan.per_column.at("day_of_week") == 2);
    CHECK(scan.affected_rows == 2);
    const auto clean = scan_invalid(with_days({1, 2, 3}, s), s);
    for (const auto& [c, n] : clean.per_column) CHECK(n == 0);
    CHECK(clean.affected_rows == 0);
}

TEST_CASE("categorical code outside the valid set is invalid") {
    const auto s = default_schema();
    auto r = valid_record("A", s);
    r[Field::RoadType] = 4;
    CHECK(scan_invalid({r}, s).per_column.at("road_type") == 1);
}

TEST_CASE("mode imputation examples") {
    const auto s = default_schema();
    auto imp = impute_mode(with_days({1, 2, 2, -1, 99}, s), s);
    CHECK(days_of(imp.records) == std::vector<int>{1, 2, 2, 2, 2});
    const auto& log = imp.logs[2];
    CHECK(log.column == "day_of_week");
    CHECK(log.replaced_count == 2);
    CHECK(log.mode_value == 2);
    CHECK(log.affected_row_ids == std::vector<std::string>{"C3", "C4"});

    auto same = impute_mode(with_days({3, 4, 5}, s), s);
    CHECK(days_of(same.records) == std::vector<int>{3, 4, 5});
    CHECK(same.logs[2].replaced_count == 0);

    auto tie = impute_mode(with_days({5, 5, 7, 7, -1}, s), s);
    CHECK(days_of(tie.records) == std::vector<int>{5, 5, 7, 7, 5});
}

TEST_CASE("all-invalid column is an error") {
    const auto s = default_schema();
    CHECK(ingest_kind([&] { impute_mode(with_days({-1, 99}, s), s); }) == IngestError::Kind::AllInvalidColumn);
}

TEST_CASE("property: imputation leaves no invalid cell, is idempotent and matches the mode oracle") {
    const auto s = default_schema();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto spec = default_effects();
        spec.invalid_fraction = 0.05 + 0.01 * static_cast<double>(seed % 5);
        const auto data = generate_synthetic(300, seed, spec, s);
        const auto imp = impute_mode(data.collisions, s, static_cast<unsigned>(1 + seed % 4));
        const auto after = scan_invalid(imp.records, s);
        CHECK(after.affected_rows == 0);
        const auto again = impute_mode(imp.records, s);
        CHECK(again.records == imp.records);
        for (std::size_t c = 0; c < s.columns.size(); ++c) {
            const auto& col = s.columns[c];
            std::vector<int> vals;
            for (const auto& r : data.collisions) vals.push_back(r[col.field()]);
            CHECK(imp.logs[c].mode_value == mode_oracle(vals, col));
            CHECK(imp.logs[c].replaced_count == imp.logs[c].affected_row_ids.size());
            CHECK(again.logs[c].replaced_count == 0);
        }
    }
}

TEST_CASE("imputation is the same for any thread count") {
    const auto s = default_schema();
    const auto data = generate_synthetic(500, 11, default_effects(), s);
    const auto a = impute_mode(data.collisions, s, 1);
    const auto b = impute_mode(data.collisions, s, 7);
    CHECK(a.records == b.records);
}

TEST_CASE("casualty outliers") {
    const auto s = default_schema();
    std::vector<CollisionRecord> rs;
    for (int n : {1, 2, 70}) {
        auto r = valid_record("C" + std::to_string(n), s);
        r[Field::NumberOfCasualties] = n;
        rs.push_back(r);
    }
    const auto out = drop_casualty_outliers(rs, 19);
    CHECK(out.records.size() == 2);
    CHECK(out.dropped_ids == std::vector<std::string>{"C70"});
    CHECK(drop_casualty_outliers(rs, 100).records == rs);
    CHECK_THROWS_AS(drop_casualty_outliers(rs, 0), ConfigError);
}

TEST_CASE("generator is byte-identical for a fixed seed") {
    const auto s = default_schema();
    auto text = [&] {
        const auto d = generate_synthetic(1000, 7, default_effects(), s);
        std::ostringstream out;
        write_collisions(out, d.collisions, s);
        write_casualties(out, d.casualties, s);
        return out.str();
    };
    CHECK(text() == text());
}

TEST_CASE("generator output parses back and satisfies record invariants") {
    const auto s = default_schema();
    const auto d = generate_synthetic(400, 5, default_effects(), s);
    std::ostringstream c, k;
    write_collisions(c, d.collisions, s);
    write_casualties(k, d.casualties, s);
    std::istringstream ci(c.str()), ki(k.str());
    const auto rs = parse_collisions(ci, s);
    const auto cs = parse_casualties(ki, s);
    CHECK(rs.size() == 400);
    CHECK(cs.size() == d.casualties.size());
    for (const auto& r : impute_mode(rs, s).records) {
        CHECK(r[Field::NumberOfVehicles] >= 1);
        CHECK(r[Field::NumberOfCasualties] >= 1);
    }
}

TEST_CASE("zero effects give the intercept rate within a 3 sigma binomial bound") {
    const auto s = default_schema();
    EffectSpec spec;
    spec.severity_intercept = -1.0;
    spec.invalid_fraction = 0.0;
    const std::size_t n = 20000;
    const auto d = generate_synthetic(n, 3, spec, s);
    const auto t = targets::build_targets(d.collisions, d.casualties, s.pedestrian_class);
    std::size_t ones = 0;
    for (const auto& [id, v] : t.over_serious) ones += v;
    const double p = sigmoid(-1.0);
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(ones) / n - p) <= 3 * sigma);
}

TEST_CASE("strong speed effect raises the severe rate at 70 over 20") {
    const auto s = default_schema();
    EffectSpec spec;
    spec.severity_intercept = -2.0;
    spec.severity = {{"speed_limit", 4.0, ""}};
    spec.invalid_fraction = 0.0;
    const auto d = generate_synthetic(20000, 9, spec, s);
    const auto t = targets::build_targets(d.collisions, d.casualties, s.pedestrian_class);
    std::map<int, std::pair<int, int>> by_speed;
    for (const auto& r : d.collisions) {
        auto& [n, k] = by_speed[r[Field::SpeedLimit]];
        ++n;
        k += t.over_serious.at(r.collision_id);
    }
    REQUIRE(by_speed.count(20));
    REQUIRE(by_speed.count(70));
    const double lo = static_cast<double>(by_speed[20].second) / by_speed[20].first;
    const double hi = static_cast<double>(by_speed[70].second) / by_speed[70].first;
    CHECK(hi > lo);
}
