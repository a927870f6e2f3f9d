#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "pedsafe/config.hpp"

namespace pedsafe::pipeline {

enum ExitCode : int { kOk = 0, kConfigFailure = 1, kIngestFailure = 2, kModelFailure = 3, kExplainFailure = 4, kSpatialFailure = 5 };

class ExplainError : public Error {
public:
    using Error::Error;
};

class SpatialError : public Error {
public:
    using Error::Error;
};

/// Command-line values that win over the config file.
struct Overrides {
    std::optional<std::string> target;
    std::optional<double> threshold;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    std::optional<std::string> model;
};

/// Loads the config (or defaults when `path` is empty) and applies overrides.
config::RunConfig resolve_config(const std::filesystem::path& path, const Overrides& overrides);

/// Stream seed for one pipeline stage, derived from the run seed.
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage);

void cmd_synth(const config::RunConfig& cfg, std::ostream& log);
void cmd_prep(const config::RunConfig& cfg, std::ostream& log);
void cmd_describe(const config::RunConfig& cfg, std::ostream& log);
void cmd_train(const config::RunConfig& cfg, std::ostream& log);
void cmd_explain(const config::RunConfig& cfg, std::ostream& log);
void cmd_spatial(const config::RunConfig& cfg, std::ostream& log);

/// Runs one subcommand by name and maps failures onto exit codes; the error
/// text goes to `err`.
int run_command(const std::string& command, const std::filesystem::path& config_path, const Overrides& overrides,
                std::ostream& log, std::ostream& err);

}  // namespace pedsafe::pipeline
