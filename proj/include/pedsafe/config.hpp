#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pedsafe/ensemble.hpp"
#include "pedsafe/geo.hpp"
#include "pedsafe/ingest.hpp"
#include "pedsafe/resample.hpp"
#include "pedsafe/targets.hpp"

namespace pedsafe::config {

struct RunConfig {
    std::filesystem::path collisions;  // empty: the synth output under out_dir
    std::filesystem::path casualties;
    std::filesystem::path boundaries;
    std::filesystem::path out_dir = "pedsafe_out";

    ingest::Schema schema = ingest::default_schema();
    std::vector<std::string> features;  // empty: every schema column

    TargetKind target = TargetKind::OverSerious;
    std::uint64_t seed = 42;
    unsigned threads = 1;
    double test_fraction = 0.2;
    double threshold = 0.5;

    bool smote_enabled = true;
    resample::SmoteConfig smote;

    std::vector<ensemble::ModelKind> models{ensemble::ModelKind::Forest, ensemble::ModelKind::Boosted};
    ensemble::ForestParams forest;
    ensemble::BoostParams boosted;
    ensemble::GridSpec forest_grid = ensemble::GridSpec::default_forest();
    ensemble::GridSpec boosted_grid = ensemble::GridSpec::default_boosted();

    std::string explain_model;        // empty: the tuned model of the last configured kind
    std::size_t explain_max_rows = 0;  // 0: all test rows

    geo::BoundaryOptions boundary_options;
    geo::Measure measure = geo::Measure::PedestrianShare;

    std::size_t synth_rows = 20000;
    std::size_t synth_grid_x = 3;
    std::size_t synth_grid_y = 3;

    std::filesystem::path collisions_path() const;
    std::filesystem::path casualties_path() const;
    std::filesystem::path boundaries_path() const;
    std::vector<std::string> feature_list() const;

    /// Checks value ranges and, when `check_inputs` is set, that the input
    /// files exist. Throws ConfigError.
    void validate(bool check_inputs) const;
};

/// INI-style text: `key = value` lines grouped under `[section]` headers,
/// `#` or `;` comments. Relative paths resolve against `base_dir`.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Splits "a, b,c" into trimmed items; empty text gives an empty list.
std::vector<std::string> split_list(const std::string& text);

}  // namespace pedsafe::config
