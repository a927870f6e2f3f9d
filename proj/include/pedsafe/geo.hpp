#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pedsafe/ingest.hpp"
#include "pedsafe/targets.hpp"

namespace pedsafe::geo {

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

using Ring = std::vector<Point>;

/// One polygon: rings[0] is the outer boundary, the rest are holes.
struct PolygonPart {
    std::vector<Ring> rings;
};

struct BoundingBox {
    double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
    bool contains(const Point& p) const { return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y; }
};

/// A district; MultiPolygon geometries become several parts.
struct DistrictPolygon {
    std::string district_id;
    std::string name;
    std::vector<PolygonPart> parts;
    BoundingBox bbox;

    /// Checks ring closure and size, rejects self-intersecting outer rings,
    /// and fills `bbox`. Throws InvalidRing.
    void validate();
};

class InvalidRing : public Error {
public:
    using Error::Error;
};

class UnknownDistrict : public Error {
public:
    using Error::Error;
};

/// Even-odd ray casting. Points on any edge or vertex count as inside;
/// holes subtract.
bool point_in_polygon(const Point& p, const DistrictPolygon& polygon);

/// Even-odd test of one ring, with the on-boundary rule applied.
bool point_in_ring(const Point& p, const Ring& ring);
bool point_on_ring(const Point& p, const Ring& ring);

struct BoundaryOptions {
    std::string id_property = "district_id";
    std::string name_property = "name";
};

std::vector<DistrictPolygon> read_boundaries(const nlohmann::json& feature_collection,
                                             const BoundaryOptions& options = {});
std::vector<DistrictPolygon> read_boundaries_file(const std::string& path, const BoundaryOptions& options = {});

struct JoinResult {
    std::map<std::string, std::string> assignments;  // collision id -> district id
    std::vector<std::string> unmatched;              // inside no polygon
    std::vector<std::string> without_location;       // flagged at ingest
    std::vector<std::string> overlaps;               // inside more than one polygon
    std::size_t total = 0;
    bool bbox_warning = false;  // < 50% of located points inside the union bbox

    double match_rate() const;
};

/// First match wins over polygons sorted by district_id.
JoinResult spatial_join(const std::vector<ingest::CollisionRecord>& collisions,
                        const std::vector<DistrictPolygon>& polygons, unsigned threads = 1);

struct DistrictSummary {
    std::string district_id;
    std::string name;
    std::size_t total_collisions = 0;
    std::size_t pedestrian_count = 0;
    std::size_t severe_count = 0;
    double pedestrian_share = 0.0;
    double severe_share = 0.0;
    bool empty = false;
};

struct Aggregation {
    std::vector<DistrictSummary> districts;  // sorted by district_id
    std::size_t unmatched = 0;               // unmatched + without location
};

Aggregation aggregate_districts(const JoinResult& join, const std::vector<DistrictPolygon>& polygons,
                                const targets::TargetTable& targets);

enum class Measure { PedestrianShare, SevereShare, Total };
Measure parse_measure(std::string_view s);
std::string_view to_string(Measure m);

nlohmann::json export_choropleth(const std::vector<DistrictSummary>& summaries,
                                 const std::vector<DistrictPolygon>& polygons, Measure measure);

void write_summary_csv(std::ostream& out, const Aggregation& agg);

/// nx-by-ny grid of square districts covering the box, ids D01, D02, ...
std::vector<DistrictPolygon> grid_districts(std::size_t nx, std::size_t ny, const BoundingBox& area);
nlohmann::json boundaries_json(const std::vector<DistrictPolygon>& polygons, const BoundaryOptions& options = {});

}  // namespace pedsafe::geo
