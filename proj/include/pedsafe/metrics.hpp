#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pedsafe/common.hpp"
#include "pedsafe/targets.hpp"

namespace pedsafe::metrics {

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class SingleClassLabels : public Error {
public:
    using Error::Error;
};

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    bool operator==(const Confusion&) const = default;
};

/// Predicted positive iff probability >= threshold.
Confusion confusion(std::span<const int> labels, std::span<const double> probabilities, double threshold);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct EvalReport {
    std::array<ClassMetrics, 2> per_class{};
    double accuracy = 0.0;
    double roc_auc = 0.0;
    double threshold = 0.5;
    TargetKind target = TargetKind::Pedestrian;
    std::string model_tag;
    Confusion counts;
    /// Metrics that hit a zero denominator and were reported as 0,
    /// e.g. "precision(1)".
    std::vector<std::string> zero_division;
};

/// Mann-Whitney U with midranks for tied scores.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

EvalReport report(std::span<const int> labels, std::span<const double> probabilities, double threshold = 0.5,
                  TargetKind target = TargetKind::Pedestrian, std::string model_tag = {});

/// F1 from precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

nlohmann::json to_json(const EvalReport& r);

/// Side-by-side plain-text table: Class(0)/Class(1) blocks of
/// precision/recall/F1/support, then accuracy (percent) and ROC_AUC.
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& columns);

}  // namespace pedsafe::metrics
