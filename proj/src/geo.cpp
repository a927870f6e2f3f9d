#include "pedsafe/geo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "pedsafe/csv.hpp"

namespace pedsafe::geo {

namespace {

double cross(const Point& a, const Point& b, const Point& c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

int orientation(const Point& a, const Point& b, const Point& c) {
    const double v = cross(a, b, c);
    return (v > 0) - (v < 0);
}

bool within_box(const Point& a, const Point& b, const Point& p) {
    return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
           p.y <= std::max(a.y, b.y);
}

bool on_segment(const Point& p, const Point& a, const Point& b) {
    if (!within_box(a, b, p)) return false;
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double scale = std::max({1.0, dx * dx + dy * dy});
    return std::abs(cross(a, b, p)) <= 1e-12 * scale;
}

bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
    const int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && within_box(p1, p2, q1)) return true;
    if (o2 == 0 && within_box(p1, p2, q2)) return true;
    if (o3 == 0 && within_box(q1, q2, p1)) return true;
    if (o4 == 0 && within_box(q1, q2, p2)) return true;
    return false;
}

// Sweep over edges sorted by min x; only x-overlapping pairs are tested.
bool self_intersects(const Ring& ring) {
    const std::size_t m = ring.size() - 1;  // edge count
    std::vector<std::size_t> edges(m);
    std::iota(edges.begin(), edges.end(), 0);
    auto min_x = [&](std::size_t e) { return std::min(ring[e].x, ring[e + 1].x); };
    auto max_x = [&](std::size_t e) { return std::max(ring[e].x, ring[e + 1].x); };
    std::sort(edges.begin(), edges.end(), [&](std::size_t a, std::size_t b) { return min_x(a) < min_x(b); });
    for (std::size_t ai = 0; ai < m; ++ai) {
        const std::size_t a = edges[ai];
        const double limit = max_x(a);
        for (std::size_t bi = ai + 1; bi < m && min_x(edges[bi]) <= limit; ++bi) {
            const std::size_t b = edges[bi];
            const std::size_t lo = std::min(a, b), hi = std::max(a, b);
            if (hi == lo + 1 || (lo == 0 && hi == m - 1)) continue;  // adjacent edges share a vertex
            if (segments_intersect(ring[a], ring[a + 1], ring[b], ring[b + 1])) return true;
        }
    }
    return false;
}

bool even_odd(const Point& p, const Ring& ring) {
    bool inside = false;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        const Point& a = ring[i];
        const Point& b = ring[i + 1];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

Ring ring_from_json(const nlohmann::json& coords) {
    Ring r;
    for (const auto& c : coords) {
        if (!c.is_array() || c.size() < 2) throw InvalidRing("coordinate is not an [x, y] pair");
        r.push_back({c[0].get<double>(), c[1].get<double>()});
    }
    return r;
}

PolygonPart part_from_json(const nlohmann::json& rings) {
    PolygonPart part;
    for (const auto& r : rings) part.rings.push_back(ring_from_json(r));
    return part;
}

nlohmann::json ring_to_json(const Ring& r) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : r) a.push_back({p.x, p.y});
    return a;
}

nlohmann::json geometry_json(const DistrictPolygon& d) {
    auto part_json = [](const PolygonPart& part) {
        nlohmann::json rings = nlohmann::json::array();
        for (const auto& r : part.rings) rings.push_back(ring_to_json(r));
        return rings;
    };
    if (d.parts.size() == 1) return {{"type", "Polygon"}, {"coordinates", part_json(d.parts[0])}};
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : d.parts) parts.push_back(part_json(p));
    return {{"type", "MultiPolygon"}, {"coordinates", parts}};
}

std::string property_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_null()) return "";
    return v.dump();
}

}  // namespace

void DistrictPolygon::validate() {
    if (parts.empty()) throw InvalidRing("district '" + district_id + "' has no geometry");
    bbox = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& part : parts) {
        if (part.rings.empty()) throw InvalidRing("district '" + district_id + "' has a polygon without rings");
        for (std::size_t r = 0; r < part.rings.size(); ++r) {
            const Ring& ring = part.rings[r];
            if (ring.size() < 4) throw InvalidRing("district '" + district_id + "': ring with fewer than 4 vertices");
            if (!(ring.front() == ring.back())) throw InvalidRing("district '" + district_id + "': ring is not closed");
            for (const auto& p : ring)
                if (!std::isfinite(p.x) || !std::isfinite(p.y))
                    throw InvalidRing("district '" + district_id + "': non-finite vertex");
            if (r == 0) {
                if (self_intersects(ring))
                    throw InvalidRing("district '" + district_id + "': outer ring self-intersects");
                for (const auto& p : ring) {
                    bbox.min_x = std::min(bbox.min_x, p.x);
                    bbox.min_y = std::min(bbox.min_y, p.y);
                    bbox.max_x = std::max(bbox.max_x, p.x);
                    bbox.max_y = std::max(bbox.max_y, p.y);
                }
            }
        }
    }
}

bool point_on_ring(const Point& p, const Ring& ring) {
    for (std::size_t i = 0; i + 1 < ring.size(); ++i)
        if (on_segment(p, ring[i], ring[i + 1])) return true;
    return false;
}

bool point_in_ring(const Point& p, const Ring& ring) { return point_on_ring(p, ring) || even_odd(p, ring); }

bool point_in_polygon(const Point& p, const DistrictPolygon& polygon) {
    for (const auto& part : polygon.parts) {
        if (part.rings.empty()) throw InvalidRing("polygon without rings");
        bool on_boundary = false;
        for (const auto& ring : part.rings)
            if (point_on_ring(p, ring)) on_boundary = true;
        if (on_boundary) return true;
        if (!even_odd(p, part.rings[0])) continue;
        bool in_hole = false;
        for (std::size_t h = 1; h < part.rings.size() && !in_hole; ++h) in_hole = even_odd(p, part.rings[h]);
        if (!in_hole) return true;
    }
    return false;
}

std::vector<DistrictPolygon> read_boundaries(const nlohmann::json& fc, const BoundaryOptions& options) {
    if (fc.value("type", "") != "FeatureCollection") throw InvalidRing("boundaries: expected a FeatureCollection");
    std::vector<DistrictPolygon> out;
    std::set<std::string> ids;
    for (const auto& feature : fc.at("features")) {
        DistrictPolygon d;
        const auto& props = feature.at("properties");
        if (!props.contains(options.id_property))
            throw InvalidRing("boundaries: feature without '" + options.id_property + "' property");
        d.district_id = property_text(props.at(options.id_property));
        d.name = props.contains(options.name_property) ? property_text(props.at(options.name_property)) : d.district_id;
        const auto& geom = feature.at("geometry");
        const std::string type = geom.at("type").get<std::string>();
        if (type == "Polygon") {
            d.parts.push_back(part_from_json(geom.at("coordinates")));
        } else if (type == "MultiPolygon") {
            for (const auto& p : geom.at("coordinates")) d.parts.push_back(part_from_json(p));
        } else {
            throw InvalidRing("boundaries: unsupported geometry type '" + type + "'");
        }
        d.validate();
        if (!ids.insert(d.district_id).second) throw InvalidRing("boundaries: duplicate district id '" + d.district_id + "'");
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<DistrictPolygon> read_boundaries_file(const std::string& path, const BoundaryOptions& options) {
    std::ifstream in(path);
    if (!in) throw InvalidRing("cannot open boundaries " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidRing(path + ": " + e.what());
    }
    return read_boundaries(j, options);
}

double JoinResult::match_rate() const {
    return total ? static_cast<double>(assignments.size()) / static_cast<double>(total) : 0.0;
}

JoinResult spatial_join(const std::vector<ingest::CollisionRecord>& collisions,
                        const std::vector<DistrictPolygon>& polygons, unsigned threads) {
    std::vector<std::size_t> order(polygons.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return polygons[a].district_id < polygons[b].district_id; });

    BoundingBox uni{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& p : polygons) {
        uni.min_x = std::min(uni.min_x, p.bbox.min_x);
        uni.min_y = std::min(uni.min_y, p.bbox.min_y);
        uni.max_x = std::max(uni.max_x, p.bbox.max_x);
        uni.max_y = std::max(uni.max_y, p.bbox.max_y);
    }

    constexpr int kNoLocation = -2, kNoMatch = -1;
    std::vector<int> match(collisions.size(), kNoMatch);
    std::vector<char> overlap(collisions.size(), 0);
    parallel_for(collisions.size(), threads, [&](std::size_t i) {
        const auto& c = collisions[i];
        if (!c.has_location()) {
            match[i] = kNoLocation;
            return;
        }
        const Point p{c.x, c.y};
        for (std::size_t k : order) {
            const auto& poly = polygons[k];
            if (!poly.bbox.contains(p) || !point_in_polygon(p, poly)) continue;
            if (match[i] == kNoMatch) {
                match[i] = static_cast<int>(k);
            } else {
                overlap[i] = 1;
                break;
            }
        }
    });

    JoinResult r;
    r.total = collisions.size();
    std::size_t located = 0, in_union = 0;
    for (std::size_t i = 0; i < collisions.size(); ++i) {
        const auto& c = collisions[i];
        if (match[i] == kNoLocation) {
            r.without_location.push_back(c.collision_id);
            continue;
        }
        ++located;
        if (uni.contains({c.x, c.y})) ++in_union;
        if (match[i] == kNoMatch) {
            r.unmatched.push_back(c.collision_id);
        } else {
            r.assignments[c.collision_id] = polygons[static_cast<std::size_t>(match[i])].district_id;
            if (overlap[i]) r.overlaps.push_back(c.collision_id);
        }
    }
    r.bbox_warning = located > 0 && 2 * in_union < located;
    return r;
}

Aggregation aggregate_districts(const JoinResult& join, const std::vector<DistrictPolygon>& polygons,
                                const targets::TargetTable& targets) {
    std::map<std::string, DistrictSummary> by_id;
    for (const auto& p : polygons) {
        auto& s = by_id[p.district_id];
        s.district_id = p.district_id;
        s.name = p.name;
    }
    auto flag = [](const targets::FlagMap& m, const std::string& id) {
        auto it = m.find(id);
        return it != m.end() && it->second == 1;
    };
    for (const auto& [collision, district] : join.assignments) {
        auto it = by_id.find(district);
        if (it == by_id.end()) throw UnknownDistrict("assignment to unknown district '" + district + "'");
        auto& s = it->second;
        ++s.total_collisions;
        s.pedestrian_count += flag(targets.pedestrian, collision);
        s.severe_count += flag(targets.over_serious, collision);
    }
    Aggregation agg;
    for (auto& [id, s] : by_id) {
        s.empty = s.total_collisions == 0;
        if (!s.empty) {
            s.pedestrian_share = static_cast<double>(s.pedestrian_count) / static_cast<double>(s.total_collisions);
            s.severe_share = static_cast<double>(s.severe_count) / static_cast<double>(s.total_collisions);
        }
        agg.districts.push_back(s);
    }
    agg.unmatched = join.unmatched.size() + join.without_location.size();
    return agg;
}

Measure parse_measure(std::string_view s) {
    if (s == "pedestrian_share") return Measure::PedestrianShare;
    if (s == "severe_share") return Measure::SevereShare;
    if (s == "total") return Measure::Total;
    throw ConfigError("unknown measure '" + std::string(s) + "'");
}

std::string_view to_string(Measure m) {
    switch (m) {
        case Measure::PedestrianShare: return "pedestrian_share";
        case Measure::SevereShare: return "severe_share";
        case Measure::Total: return "total";
    }
    return "pedestrian_share";
}

nlohmann::json export_choropleth(const std::vector<DistrictSummary>& summaries,
                                 const std::vector<DistrictPolygon>& polygons, Measure measure) {
    std::map<std::string, const DistrictPolygon*> by_id;
    for (const auto& p : polygons) by_id[p.district_id] = &p;
    nlohmann::json features = nlohmann::json::array();
    for (const auto& s : summaries) {
        auto it = by_id.find(s.district_id);
        if (it == by_id.end()) throw UnknownDistrict("no boundary for district '" + s.district_id + "'");
        double value = 0.0;
        switch (measure) {
            case Measure::PedestrianShare: value = s.pedestrian_share; break;
            case Measure::SevereShare: value = s.severe_share; break;
            case Measure::Total: value = static_cast<double>(s.total_collisions); break;
        }
        nlohmann::json props = {{"district_id", s.district_id},
                                {"name", s.name},
                                {"total", s.total_collisions},
                                {"pedestrian_count", s.pedestrian_count},
                                {"severe_count", s.severe_count},
                                {"pedestrian_share", s.pedestrian_share},
                                {"severe_share", s.severe_share},
                                {"empty", s.empty},
                                {"measure", to_string(measure)},
                                {"value", value}};
        features.push_back({{"type", "Feature"}, {"properties", props}, {"geometry", geometry_json(*it->second)}});
    }
    return {{"type", "FeatureCollection"}, {"features", features}};
}

void write_summary_csv(std::ostream& out, const Aggregation& agg) {
    csv::write_row(out, {"district_id", "name", "total_collisions", "pedestrian_count", "severe_count",
                         "pedestrian_share", "severe_share", "empty"});
    for (const auto& s : agg.districts)
        csv::write_row(out, {s.district_id, s.name, std::to_string(s.total_collisions),
                             std::to_string(s.pedestrian_count), std::to_string(s.severe_count),
                             format_double(s.pedestrian_share), format_double(s.severe_share), s.empty ? "1" : "0"});
}

std::vector<DistrictPolygon> grid_districts(std::size_t nx, std::size_t ny, const BoundingBox& area) {
    std::vector<DistrictPolygon> out;
    const double w = (area.max_x - area.min_x) / static_cast<double>(nx);
    const double h = (area.max_y - area.min_y) / static_cast<double>(ny);
    std::size_t k = 0;
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            ++k;
            char id[32];
            std::snprintf(id, sizeof id, "D%02zu", k);
            DistrictPolygon d;
            d.district_id = id;
            d.name = "District " + std::to_string(k);
            const double x0 = area.min_x + w * static_cast<double>(i), x1 = area.min_x + w * static_cast<double>(i + 1);
            const double y0 = area.min_y + h * static_cast<double>(j), y1 = area.min_y + h * static_cast<double>(j + 1);
            d.parts.push_back({{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}}});
            d.validate();
            out.push_back(std::move(d));
        }
    return out;
}

nlohmann::json boundaries_json(const std::vector<DistrictPolygon>& polygons, const BoundaryOptions& options) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& d : polygons)
        features.push_back({{"type", "Feature"},
                            {"properties", {{options.id_property, d.district_id}, {options.name_property, d.name}}},
                            {"geometry", geometry_json(d)}});
    return {{"type", "FeatureCollection"}, {"features", features}};
}

}  // namespace pedsafe::geo
