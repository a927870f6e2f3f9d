#pragma once
// Small builders shared by the test binaries.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "pedsafe/common.hpp"
#include "pedsafe/ingest.hpp"
#include "pedsafe/targets.hpp"

namespace testsupport {

using namespace pedsafe;

inline LabeledDataset numeric_dataset(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
    LabeledDataset d;
    const std::size_t w = rows.empty() ? 0 : rows[0].size();
    for (std::size_t j = 0; j < w; ++j) d.feature_names.push_back("f" + std::to_string(j));
    d.rows = Matrix(rows.size(), w);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < w; ++j) d.rows.at(i, j) = rows[i][j];
    d.labels = labels;
    d.column_kinds.assign(w, ingest::ColumnKind::Numeric);
    d.categorical_levels.assign(w, {});
    for (std::size_t i = 0; i < rows.size(); ++i) d.row_ids.push_back("r" + std::to_string(i));
    return d;
}

/// n rows of uniform features; label ~ Bernoulli(sigmoid(score)) where the
/// score depends on the first two features only.
inline LabeledDataset planted_dataset(std::size_t n, std::size_t width, std::uint64_t seed, double strength = 4.0) {
    Rng rng(seed, "planted");
    std::vector<std::vector<double>> rows(n, std::vector<double>(width));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : rows[i]) v = std::round(rng.uniform() * 20.0) / 20.0;
        const double z = strength * (rows[i][0] - 0.5) + strength * (rows[i][1] > 0.5 ? 0.5 : -0.5);
        labels[i] = rng.bernoulli(sigmoid(z)) ? 1 : 0;
    }
    return numeric_dataset(rows, labels);
}

/// A record whose every field holds the smallest valid code.
inline ingest::CollisionRecord valid_record(const std::string& id, const ingest::Schema& schema) {
    ingest::CollisionRecord r;
    r.collision_id = id;
    for (const auto& c : schema.columns)
        r[c.field()] = c.kind == ingest::ColumnKind::Numeric ? std::max(c.numeric_min, 1) : *c.valid_codes.begin();
    r.x = 1.0;
    r.y = 2.0;
    return r;
}

inline std::string collisions_csv(const std::vector<ingest::CollisionRecord>& records, const ingest::Schema& schema) {
    std::ostringstream out;
    ingest::write_collisions(out, records, schema);
    return out.str();
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace testsupport
