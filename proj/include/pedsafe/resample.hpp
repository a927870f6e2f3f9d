#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pedsafe/targets.hpp"

namespace pedsafe::resample {

class DegenerateClass : public Error {
public:
    using Error::Error;
};

struct SplitResult {
    LabeledDataset train;
    LabeledDataset test;
    std::vector<std::size_t> train_indices;  // ascending, into the input
    std::vector<std::size_t> test_indices;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;
};

/// Holds out ceil(test_fraction * n) rows. Each class receives the floor of
/// its proportional share; leftover slots go to the classes with the largest
/// fractional remainders (ties to class 0). Rows inside a class are chosen by
/// a seeded shuffle.
SplitResult stratified_split(const LabeledDataset& data, double test_fraction, std::uint64_t seed);

/// Per-class test counts used by stratified_split.
std::array<std::size_t, 2> stratified_test_counts(std::size_t negatives, std::size_t positives,
                                                  double test_fraction);

/// k stratified folds; fold f is the validation set of round f.
std::vector<std::vector<std::size_t>> stratified_folds(const LabeledDataset& data, std::size_t k,
                                                       std::uint64_t seed);

enum class Distance { Euclidean, Manhattan };

struct SmoteConfig {
    std::size_t k_neighbors = 5;
    double target_ratio = 1.0;  // minority / majority after oversampling
    std::uint64_t seed = 0;
    Distance distance = Distance::Euclidean;
    bool snap_categoricals = true;

    void validate() const;
};

struct SyntheticOrigin {
    std::size_t base = 0;      // row index of the minority sample
    std::size_t neighbor = 0;  // row index of the chosen neighbour
    double lambda = 0.0;
};

struct SmoteResult {
    LabeledDataset data;  // originals first, synthetics appended
    int minority_label = 1;
    std::size_t effective_k = 0;
    bool k_clamped = false;
    std::vector<SyntheticOrigin> provenance;
};

/// SMOTE over the minority class of a training partition. Synthetic sample s
/// interpolates between minority row order[s % m] and one of its k nearest
/// minority neighbours (ties by row index); categorical columns are snapped
/// to the nearest level observed among minority rows (ties to the lower code).
SmoteResult smote(const LabeledDataset& train, const SmoteConfig& cfg, unsigned threads = 1);

nlohmann::json provenance_json(const SmoteResult& result);

}  // namespace pedsafe::resample
