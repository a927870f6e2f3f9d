#include "pedsafe/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

namespace pedsafe::metrics {

namespace {

void check_lengths(std::span<const int> labels, std::span<const double> probs) {
    if (labels.size() != probs.size())
        throw LengthMismatch("labels (" + std::to_string(labels.size()) + ") and scores (" +
                             std::to_string(probs.size()) + ") differ in length");
}

double ratio(std::size_t num, std::size_t den, const std::string& name, std::vector<std::string>& flags) {
    if (den == 0) {
        flags.push_back(name);
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

}  // namespace

Confusion confusion(std::span<const int> labels, std::span<const double> probs, double threshold) {
    check_lengths(labels, probs);
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
    Confusion c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = probs[i] >= threshold;
        if (labels[i] == 1)
            predicted ? ++c.tp : ++c.fn;
        else
            predicted ? ++c.fp : ++c.tn;
    }
    return c;
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
    check_lengths(labels, scores);
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // ranks i+1 .. j share their mean
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) {
                positive_rank_sum += midrank;
                ++positives;
            }
        i = j;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) throw SingleClassLabels("roc_auc needs both classes");
    const double np = static_cast<double>(positives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

double f1_score(double precision, double recall) {
    const double s = precision + recall;
    return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

EvalReport report(std::span<const int> labels, std::span<const double> probs, double threshold, TargetKind target,
                  std::string model_tag) {
    check_lengths(labels, probs);
    EvalReport r;
    r.threshold = threshold;
    r.target = target;
    r.model_tag = std::move(model_tag);
    r.roc_auc = roc_auc(labels, probs);
    r.counts = confusion(labels, probs, threshold);
    const auto& c = r.counts;

    auto& one = r.per_class[1];
    one.precision = ratio(c.tp, c.tp + c.fp, "precision(1)", r.zero_division);
    one.recall = ratio(c.tp, c.tp + c.fn, "recall(1)", r.zero_division);
    one.f1 = f1_score(one.precision, one.recall);
    one.support = c.tp + c.fn;

    auto& zero = r.per_class[0];
    zero.precision = ratio(c.tn, c.tn + c.fn, "precision(0)", r.zero_division);
    zero.recall = ratio(c.tn, c.tn + c.fp, "recall(0)", r.zero_division);
    zero.f1 = f1_score(zero.precision, zero.recall);
    zero.support = c.tn + c.fp;

    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(labels.size());
    return r;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json classes = nlohmann::json::object();
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& m = r.per_class[k];
        classes[std::to_string(k)] = {
            {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
    }
    return {{"model_tag", r.model_tag},
            {"target", to_string(r.target)},
            {"threshold", r.threshold},
            {"per_class", classes},
            {"accuracy", r.accuracy},
            {"roc_auc", r.roc_auc},
            {"confusion", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
            {"zero_division", r.zero_division}};
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& columns) {
    constexpr int label_width = 10;
    std::vector<int> widths;
    for (const auto& [name, rep] : columns) widths.push_back(std::max<int>(static_cast<int>(name.size()), 8));

    std::string out;
    auto line = [&](const std::string& label, const std::vector<std::string>& cells) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-*s", label_width, label.c_str());
        out += buf;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            std::snprintf(buf, sizeof buf, "  %*s", widths[i], cells[i].c_str());
            out += buf;
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += '\n';
    };
    auto rule = [&] {
        std::size_t w = label_width;
        for (int cw : widths) w += 2 + static_cast<std::size_t>(cw);
        out += std::string(w, '-') + '\n';
    };
    auto row = [&](const std::string& label, auto&& cell) {
        std::vector<std::string> cells;
        for (const auto& [name, rep] : columns) cells.push_back(cell(rep));
        line(label, cells);
    };

    std::vector<std::string> headers;
    for (const auto& [name, rep] : columns) headers.push_back(name);
    line("Metric", headers);
    rule();
    for (std::size_t k = 0; k < 2; ++k) {
        line("Class(" + std::to_string(k) + ")", {});
        row("Precision", [&](const EvalReport& r) { return fmt("%.2f", r.per_class[k].precision); });
        row("Recall", [&](const EvalReport& r) { return fmt("%.2f", r.per_class[k].recall); });
        row("F1-Score", [&](const EvalReport& r) { return fmt("%.2f", r.per_class[k].f1); });
        row("Support", [&](const EvalReport& r) { return std::to_string(r.per_class[k].support); });
        rule();
    }
    row("Accuracy", [](const EvalReport& r) { return fmt("%.2f%%", r.accuracy * 100.0); });
    row("ROC_AUC", [](const EvalReport& r) { return fmt("%.3f", r.roc_auc); });
    return out;
}

}  // namespace pedsafe::metrics
