#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pedsafe/common.hpp"
#include "pedsafe/ingest.hpp"

namespace pedsafe {

enum class TargetKind { Pedestrian, OverSerious, PedestrianOverSerious };

std::string_view to_string(TargetKind t);
/// Accepts "pedestrian", "over_serious", "pedestrian_over_serious" (and the
/// short forms "severity", "interaction").
TargetKind parse_target(std::string_view text);

/// Encoded, model-ready data. Integer codes are carried through as numeric
/// values; categorical columns are tagged so resampling can snap them back to
/// observed levels.
struct LabeledDataset {
    std::vector<std::string> feature_names;
    Matrix rows;
    std::vector<int> labels;
    TargetKind target = TargetKind::Pedestrian;
    std::vector<ingest::ColumnKind> column_kinds;
    /// Sorted observed codes per column; empty for numeric columns.
    std::vector<std::vector<double>> categorical_levels;
    /// Source record keys, parallel to rows (may be empty for derived sets).
    std::vector<std::string> row_ids;

    std::size_t size() const { return labels.size(); }
    std::size_t width() const { return feature_names.size(); }
    std::size_t positives() const;

    /// Rows selected by index, metadata copied.
    LabeledDataset subset(const std::vector<std::size_t>& indices) const;
    /// Throws ModelError when the invariants do not hold.
    void validate() const;
};

}  // namespace pedsafe

namespace pedsafe::targets {

using FlagMap = std::map<std::string, int>;

struct PedestrianFlags {
    FlagMap flags;
    /// Collisions with no casualty row; flagged 0.
    std::vector<std::string> without_casualties;
};

PedestrianFlags build_pedestrian_flag(const std::vector<ingest::CollisionRecord>& collisions,
                                      const std::vector<ingest::CasualtyRow>& casualties,
                                      int pedestrian_class = 3);

/// 1 when the most severe casualty of the collision is fatal or serious.
FlagMap build_over_serious(const std::vector<ingest::CasualtyRow>& casualties);

class KeyMismatch : public Error {
public:
    using Error::Error;
};

FlagMap build_interaction(const FlagMap& pedestrian, const FlagMap& over_serious);

/// All three targets keyed by every collision id.
struct TargetTable {
    FlagMap pedestrian;
    FlagMap over_serious;
    FlagMap interaction;
    std::vector<std::string> without_casualties;

    const FlagMap& get(TargetKind kind) const;
};

TargetTable build_targets(const std::vector<ingest::CollisionRecord>& collisions,
                          const std::vector<ingest::CasualtyRow>& casualties, int pedestrian_class = 3);

class UnknownFeature : public Error {
public:
    using Error::Error;
};

LabeledDataset encode(const std::vector<ingest::CollisionRecord>& collisions, const TargetTable& targets,
                      TargetKind target, const std::vector<std::string>& feature_list,
                      const ingest::Schema& schema);

/// Every schema column in schema order.
std::vector<std::string> default_features(const ingest::Schema& schema);

/// Features + label column as CSV; metadata as a JSON sidecar.
void write_dataset(const LabeledDataset& data, const std::string& csv_path, const std::string& json_path);
LabeledDataset read_dataset(const std::string& csv_path, const std::string& json_path);

nlohmann::json marginals_json(const TargetTable& targets, const std::vector<ingest::CasualtyRow>& casualties);

}  // namespace pedsafe::targets
