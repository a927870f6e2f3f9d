#include "pedsafe/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace pedsafe::resample {

namespace {

std::array<std::vector<std::size_t>, 2> indices_by_class(const LabeledDataset& data) {
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    return by_class;
}

}  // namespace

std::array<std::size_t, 2> stratified_test_counts(std::size_t negatives, std::size_t positives,
                                                  double test_fraction) {
    const std::size_t n = negatives + positives;
    const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
    const std::array<std::size_t, 2> sizes{negatives, positives};
    std::array<std::size_t, 2> counts{};
    std::array<double, 2> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        const double exact = static_cast<double>(n_test) * static_cast<double>(sizes[c]) / static_cast<double>(n);
        counts[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[c] = exact - static_cast<double>(counts[c]);
        assigned += counts[c];
    }
    std::size_t left = n_test - assigned;
    std::array<std::size_t, 2> order{0, 1};
    if (remainder[1] > remainder[0]) std::swap(order[0], order[1]);
    for (std::size_t c : order) {
        if (left == 0) break;
        if (counts[c] < sizes[c]) {
            ++counts[c];
            --left;
        }
    }
    return counts;
}

SplitResult stratified_split(const LabeledDataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test_fraction must lie in (0, 1)");
    auto by_class = indices_by_class(data);
    for (std::size_t c = 0; c < 2; ++c)
        if (by_class[c].size() < 2)
            throw DegenerateClass("class " + std::to_string(c) + " has fewer than 2 rows");

    const auto counts = stratified_test_counts(by_class[0].size(), by_class[1].size(), test_fraction);
    SplitResult out;
    out.seed = seed;
    out.test_fraction = test_fraction;
    for (std::size_t c = 0; c < 2; ++c) {
        Rng rng(seed, "stratified-split", c);
        auto idx = by_class[c];
        rng.shuffle(idx);
        out.test_indices.insert(out.test_indices.end(), idx.begin(), idx.begin() + static_cast<long>(counts[c]));
        out.train_indices.insert(out.train_indices.end(), idx.begin() + static_cast<long>(counts[c]), idx.end());
    }
    std::sort(out.test_indices.begin(), out.test_indices.end());
    std::sort(out.train_indices.begin(), out.train_indices.end());
    out.train = data.subset(out.train_indices);
    out.test = data.subset(out.test_indices);
    return out;
}

std::vector<std::vector<std::size_t>> stratified_folds(const LabeledDataset& data, std::size_t k,
                                                       std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    auto by_class = indices_by_class(data);
    for (std::size_t c = 0; c < 2; ++c)
        if (by_class[c].size() < k)
            throw DegenerateClass("class " + std::to_string(c) + " has fewer rows than folds");
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t slot = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        Rng rng(seed, "stratified-folds", c);
        auto idx = by_class[c];
        rng.shuffle(idx);
        for (std::size_t i : idx) folds[slot++ % k].push_back(i);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

void SmoteConfig::validate() const {
    if (k_neighbors < 1) throw ConfigError("smote: k_neighbors must be >= 1");
    if (!(target_ratio > 0.0 && target_ratio <= 1.0)) throw ConfigError("smote: target_ratio must lie in (0, 1]");
}

SmoteResult smote(const LabeledDataset& train, const SmoteConfig& cfg, unsigned threads) {
    cfg.validate();
    train.validate();
    const auto by_class = indices_by_class(train);
    const int minority = by_class[1].size() <= by_class[0].size() ? 1 : 0;
    const auto& minority_rows = by_class[static_cast<std::size_t>(minority)];
    const std::size_t majority_count = by_class[static_cast<std::size_t>(1 - minority)].size();
    const std::size_t m = minority_rows.size();
    if (m < 2) throw DegenerateClass("smote: minority class has fewer than 2 rows");

    SmoteResult result;
    result.minority_label = minority;
    result.effective_k = std::min(cfg.k_neighbors, m - 1);
    result.k_clamped = result.effective_k != cfg.k_neighbors;
    const std::size_t k = result.effective_k;

    const double wanted = std::floor(cfg.target_ratio * static_cast<double>(majority_count) + 1e-9);
    const std::size_t n_synthetic =
        wanted > static_cast<double>(m) ? static_cast<std::size_t>(wanted) - m : 0;

    result.data = train;
    if (n_synthetic == 0) return result;

    const std::size_t d = train.width();
    auto distance = [&](std::size_t a, std::size_t b) {
        auto ra = train.rows.row(a);
        auto rb = train.rows.row(b);
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = ra[j] - rb[j];
            s += cfg.distance == Distance::Euclidean ? diff * diff : std::abs(diff);
        }
        return s;
    };

    // neighbours[i] holds positions into minority_rows.
    std::vector<std::vector<std::size_t>> neighbours(m);
    parallel_for(m, threads, [&](std::size_t i) {
        std::vector<std::pair<double, std::size_t>> cand;
        cand.reserve(m - 1);
        for (std::size_t j = 0; j < m; ++j)
            if (j != i) cand.emplace_back(distance(minority_rows[i], minority_rows[j]), j);
        std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(k), cand.end());
        for (std::size_t q = 0; q < k; ++q) neighbours[i].push_back(cand[q].second);
    });

    std::vector<std::vector<double>> minority_levels(d);
    for (std::size_t j = 0; j < d; ++j) {
        if (train.column_kinds[j] != ingest::ColumnKind::Categorical) continue;
        for (std::size_t r : minority_rows) minority_levels[j].push_back(train.rows.at(r, j));
        std::sort(minority_levels[j].begin(), minority_levels[j].end());
        minority_levels[j].erase(std::unique(minority_levels[j].begin(), minority_levels[j].end()),
                                 minority_levels[j].end());
    }
    auto snap = [&](std::size_t j, double v) {
        const auto& lv = minority_levels[j];
        auto it = std::lower_bound(lv.begin(), lv.end(), v);
        if (it == lv.end()) return lv.back();
        if (it == lv.begin()) return *it;
        const double hi = *it;
        const double lo = *(it - 1);
        return (v - lo) <= (hi - v) ? lo : hi;
    };

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(cfg.seed, "smote-order");
    order_rng.shuffle(order);

    Matrix synth(n_synthetic, d);
    result.provenance.resize(n_synthetic);
    parallel_for(n_synthetic, threads, [&](std::size_t s) {
        Rng rng(cfg.seed, "smote-sample", s);
        const std::size_t base_pos = order[s % m];
        const std::size_t nb_pos = neighbours[base_pos][rng.below(k)];
        const double lambda = rng.uniform();
        const std::size_t base = minority_rows[base_pos];
        const std::size_t nb = minority_rows[nb_pos];
        auto out = synth.row(s);
        auto x = train.rows.row(base);
        auto z = train.rows.row(nb);
        for (std::size_t j = 0; j < d; ++j) {
            double v = x[j] + lambda * (z[j] - x[j]);
            if (cfg.snap_categoricals && train.column_kinds[j] == ingest::ColumnKind::Categorical) v = snap(j, v);
            out[j] = v;
        }
        result.provenance[s] = {base, nb, lambda};
    });

    for (std::size_t s = 0; s < n_synthetic; ++s) {
        result.data.rows.append_row(synth.row(s));
        result.data.labels.push_back(minority);
        if (!result.data.row_ids.empty()) result.data.row_ids.push_back("smote-" + std::to_string(s));
    }
    return result;
}

nlohmann::json provenance_json(const SmoteResult& result) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& p : result.provenance)
        samples.push_back({{"base", p.base}, {"neighbor", p.neighbor}, {"lambda", p.lambda}});
    return {{"minority_label", result.minority_label},
            {"effective_k", result.effective_k},
            {"k_clamped", result.k_clamped},
            {"synthetic", samples}};
}

}  // namespace pedsafe::resample
