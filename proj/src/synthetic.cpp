#include <algorithm>
#include <cmath>

#include "pedsafe/ingest.hpp"

namespace pedsafe::ingest {

namespace {

struct Weighted {
    int code;
    double weight;
};

// Marginals loosely shaped like a year of police-reported collisions.
const std::vector<Weighted>& marginal(Field f) {
    static const std::vector<Weighted> vehicles{{1, .30}, {2, .58}, {3, .08}, {4, .03}, {5, .007}, {6, .003}};
    static const std::vector<Weighted> casualties{{1, .80}, {2, .13}, {3, .04}, {4, .02}, {5, .007}, {6, .003}};
    static const std::vector<Weighted> days{{1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}, {6, 1}, {7, 1}};
    static const std::vector<Weighted> hours = [] {
        const double w[25] = {1.2, 0.8, 0.6, 0.5, 0.5, 0.8, 1.8, 3.5, 5.5, 4.2, 4.0, 4.4, 4.8,
                              5.0, 5.4, 6.6, 7.2, 7.4, 6.2, 4.4, 3.2, 2.6, 2.0, 1.6, 0.7};
        std::vector<Weighted> v;
        for (int h = 0; h <= 24; ++h) v.push_back({h, w[h]});
        return v;
    }();
    static const std::vector<Weighted> road{{1, .06}, {2, .02}, {3, .15}, {6, .74}, {7, .02}, {9, .01}};
    static const std::vector<Weighted> speed{{20, .15}, {30, .55}, {40, .08}, {50, .04}, {60, .12}, {70, .06}};
    static const std::vector<Weighted> jcontrol{{1, .005}, {2, .20}, {3, .015}, {4, .78}};
    static const std::vector<Weighted> jdetail{{0, .40}, {1, .08}, {2, .02}, {3, .30}, {5, .02},
                                               {6, .10}, {7, .02}, {8, .03}, {9, .03}};
    static const std::vector<Weighted> light{{1, .70}, {4, .21}, {5, .01}, {6, .06}, {7, .02}};
    static const std::vector<Weighted> weather{{1, .80}, {2, .12}, {3, .005}, {4, .01}, {5, .015},
                                               {6, .002}, {7, .008}, {8, .02}, {9, .02}};
    static const std::vector<Weighted> surface{{1, .72}, {2, .25}, {3, .005}, {4, .02}, {5, .005}};
    static const std::vector<Weighted> police{{1, .55}, {2, .25}, {3, .20}};
    static const std::vector<Weighted> crossing{{0, .98}, {1, .01}, {2, .01}};
    switch (f) {
        case Field::NumberOfVehicles: return vehicles;
        case Field::NumberOfCasualties: return casualties;
        case Field::DayOfWeek: return days;
        case Field::NearestHour: return hours;
        case Field::RoadType: return road;
        case Field::SpeedLimit: return speed;
        case Field::JunctionControl: return jcontrol;
        case Field::JunctionDetail: return jdetail;
        case Field::LightConditions: return light;
        case Field::WeatherConditions: return weather;
        case Field::RoadSurfaceConditions: return surface;
        case Field::PoliceAttendance: return police;
        case Field::HumanControlCrossing: return crossing;
    }
    return days;
}

int draw(Rng& rng, const std::vector<Weighted>& dist) {
    double total = 0;
    for (const auto& w : dist) total += w.weight;
    double u = rng.uniform() * total;
    for (const auto& w : dist) {
        if (u < w.weight) return w.code;
        u -= w.weight;
    }
    return dist.back().code;
}

double scaled(double v, double lo, double hi) { return std::clamp((v - lo) / (hi - lo), 0.0, 1.0); }

double linear_predictor(const CollisionRecord& rec, double intercept, const std::vector<Effect>& effects,
                        const Schema& schema) {
    double z = intercept;
    for (const auto& e : effects) {
        double term = synthetic_term(rec, e.feature, schema);
        if (!e.times.empty()) term *= synthetic_term(rec, e.times, schema);
        z += e.coef * term;
    }
    return z;
}

}  // namespace

EffectSpec default_effects() {
    EffectSpec spec;
    spec.severity_intercept = -4.0;
    spec.severity = {{"speed_limit", 5.0, ""}, {"darkness", 3.0, ""}};
    spec.pedestrian_intercept = -0.6;
    spec.pedestrian = {{"speed_limit", -2.5, ""}, {"junction_detail", 0.8, ""}};
    return spec;
}

double synthetic_term(const CollisionRecord& rec, std::string_view feature, const Schema& schema) {
    if (feature == "darkness") return rec[Field::LightConditions] != 1 ? 1.0 : 0.0;
    if (feature == "wet_surface") return rec[Field::RoadSurfaceConditions] >= 2 ? 1.0 : 0.0;
    if (feature == "night") {
        int h = rec[Field::NearestHour];
        return (h >= 20 || h <= 5) ? 1.0 : 0.0;
    }
    auto f = field_from_name(feature);
    if (!f) throw ConfigError("unknown synthetic feature '" + std::string(feature) + "'");
    const double v = rec[*f];
    switch (*f) {
        case Field::NumberOfVehicles:
        case Field::NumberOfCasualties: return scaled(v, 1, 5);
        case Field::DayOfWeek: return scaled(v, 1, 7);
        case Field::NearestHour: return scaled(v, 0, 24);
        case Field::SpeedLimit: return scaled(v, 20, 70);
        default: break;
    }
    const ColumnSchema* col = schema.find(feature);
    if (col && !col->valid_codes.empty()) {
        const double lo = *col->valid_codes.begin();
        const double hi = *col->valid_codes.rbegin();
        return hi > lo ? scaled(v, lo, hi) : 0.0;
    }
    return v;
}

double severity_probability(const CollisionRecord& rec, const EffectSpec& spec, const Schema& schema) {
    return sigmoid(linear_predictor(rec, spec.severity_intercept, spec.severity, schema));
}

double pedestrian_probability(const CollisionRecord& rec, const EffectSpec& spec, const Schema& schema) {
    return sigmoid(linear_predictor(rec, spec.pedestrian_intercept, spec.pedestrian, schema));
}

SyntheticData generate_synthetic(std::size_t n, std::uint64_t seed, const EffectSpec& spec,
                                 const Schema& schema) {
    if (n == 0) throw ConfigError("synthetic size must be >= 1");
    schema.validate();
    SyntheticData data;
    data.collisions.reserve(n);
    data.severity_probability.reserve(n);
    const int width = static_cast<int>(std::to_string(n).size());

    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(seed, "synthetic-record", i);
        CollisionRecord rec;
        std::string id = std::to_string(i + 1);
        rec.collision_id = "SYN" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
        for (Field f : all_fields()) rec[f] = draw(rng, marginal(f));

        const double area_w = spec.area_max_x - spec.area_min_x;
        const double area_h = spec.area_max_y - spec.area_min_y;
        const double u = rng.uniform();
        if (u < spec.missing_location_fraction) {
            // left as NaN
        } else if (u < spec.missing_location_fraction + spec.outside_fraction) {
            rec.x = spec.area_max_x + area_w * (0.05 + 0.5 * rng.uniform());
            rec.y = spec.area_min_y + area_h * rng.uniform();
        } else {
            rec.x = spec.area_min_x + area_w * rng.uniform();
            rec.y = spec.area_min_y + area_h * rng.uniform();
        }

        const double p_severe = severity_probability(rec, spec, schema);
        const double p_ped = pedestrian_probability(rec, spec, schema);
        const bool severe = rng.bernoulli(p_severe);
        const bool pedestrian = rng.bernoulli(p_ped);
        data.severity_probability.push_back(p_severe);

        const int n_cas = rec[Field::NumberOfCasualties];
        for (int c = 0; c < n_cas; ++c) {
            CasualtyRow row;
            row.collision_id = rec.collision_id;
            row.casualty_class = (pedestrian && c == 0) ? schema.pedestrian_class : (c == 0 ? 1 : 2);
            if (severe && c == 0)
                row.casualty_severity = rng.bernoulli(0.06) ? 1 : 2;
            else
                row.casualty_severity = 3;
            data.casualties.push_back(std::move(row));
        }

        for (const auto& col : schema.columns) {
            if (!col.invalid_codes.empty() && rng.bernoulli(spec.invalid_fraction)) {
                auto it = col.invalid_codes.begin();
                std::advance(it, static_cast<long>(rng.below(col.invalid_codes.size())));
                rec[col.field()] = *it;
            }
        }
        data.collisions.push_back(std::move(rec));
    }
    return data;
}

}  // namespace pedsafe::ingest
