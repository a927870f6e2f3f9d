#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "pedsafe/ensemble.hpp"
#include "pedsafe/geo.hpp"
#include "pedsafe/metrics.hpp"
#include "pedsafe/pipeline.hpp"
#include "pedsafe/resample.hpp"
#include "pedsafe/shap.hpp"

namespace py = pybind11;
using namespace pedsafe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& x) {
    if (x.ndim() != 2) throw py::value_error("expected a 2-D array");
    Matrix m(static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)));
    auto r = x.unchecked<2>();
    for (py::ssize_t i = 0; i < x.shape(0); ++i)
        for (py::ssize_t j = 0; j < x.shape(1); ++j) m.at(i, j) = r(i, j);
    return m;
}

std::vector<int> to_labels(const Labels& y) {
    if (y.ndim() != 1) throw py::value_error("expected a 1-D label array");
    return {y.data(), y.data() + y.size()};
}

LabeledDataset dataset(const Array& x, const Labels& y, std::vector<std::string> names) {
    LabeledDataset d;
    d.rows = to_matrix(x);
    d.labels = to_labels(y);
    if (names.empty())
        for (std::size_t j = 0; j < d.rows.cols(); ++j) names.push_back("f" + std::to_string(j));
    d.feature_names = std::move(names);
    d.column_kinds.assign(d.width(), ingest::ColumnKind::Numeric);
    d.categorical_levels.assign(d.width(), {});
    d.validate();
    return d;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

// Thin wrapper so Python sees one model type for both kinds.
struct PyModel {
    ensemble::Model model;

    std::string kind() const { return std::holds_alternative<ensemble::ForestModel>(model) ? "forest" : "boosted"; }

    py::array_t<double> predict(const Array& x) const {
        const auto p = ensemble::predict(model, to_matrix(x));
        return py::array_t<double>(static_cast<py::ssize_t>(p.size()), p.data());
    }

    py::tuple shap_values(const Array& x, unsigned threads) const {
        const auto m = to_matrix(x);
        const auto ex = shap::explain_rows(model, m, threads);
        py::array_t<double> contrib({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
        py::array_t<double> base(static_cast<py::ssize_t>(m.rows()));
        auto c = contrib.mutable_unchecked<2>();
        auto b = base.mutable_unchecked<1>();
        for (std::size_t i = 0; i < ex.size(); ++i) {
            b(i) = ex[i].base_value;
            for (std::size_t j = 0; j < m.cols(); ++j) c(i, j) = ex[i].contributions[j];
        }
        return py::make_tuple(base, contrib);
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Pedestrian collision risk toolkit: ingest, models, explanations and spatial joins.";

    py::register_exception<Error>(m, "PedsafeError", PyExc_ValueError);

    m.def(
        "run_command",
        [](const std::string& command, const std::filesystem::path& config, std::optional<std::string> target,
           std::optional<double> threshold, std::optional<unsigned> threads, std::optional<std::uint64_t> seed,
           std::optional<std::filesystem::path> out, std::optional<std::string> model) {
            pipeline::Overrides o{target, threshold, threads, seed, out, model};
            std::ostringstream log, err;
            const int code = pipeline::run_command(command, config, o, log, err);
            return py::make_tuple(code, log.str(), err.str());
        },
        py::arg("command"), py::arg("config") = std::filesystem::path{}, py::arg("target") = py::none(),
        py::arg("threshold") = py::none(), py::arg("threads") = py::none(), py::arg("seed") = py::none(),
        py::arg("out") = py::none(), py::arg("model") = py::none(),
        "Run one CLI subcommand in-process. Returns (exit_code, log, error_text).");

    m.def(
        "roc_auc", [](const Labels& y, const Array& p) {
            const auto labels = to_labels(y);
            return metrics::roc_auc(labels, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
        },
        py::arg("labels"), py::arg("scores"));

    m.def(
        "report",
        [](const Labels& y, const Array& p, double threshold) {
            const auto labels = to_labels(y);
            return json_to_py(metrics::to_json(metrics::report(
                labels, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), threshold)));
        },
        py::arg("labels"), py::arg("probabilities"), py::arg("threshold") = 0.5,
        "Per-class precision/recall/F1/support, accuracy and ROC-AUC as a dict.");

    m.def(
        "stratified_split",
        [](const Array& x, const Labels& y, double test_fraction, std::uint64_t seed) {
            const auto s = resample::stratified_split(dataset(x, y, {}), test_fraction, seed);
            return py::make_tuple(s.train_indices, s.test_indices);
        },
        py::arg("x"), py::arg("y"), py::arg("test_fraction") = 0.2, py::arg("seed") = 42,
        "Returns (train_indices, test_indices).");

    m.def(
        "smote",
        [](const Array& x, const Labels& y, std::size_t k_neighbors, double target_ratio, std::uint64_t seed,
           unsigned threads) {
            resample::SmoteConfig cfg;
            cfg.k_neighbors = k_neighbors;
            cfg.target_ratio = target_ratio;
            cfg.seed = seed;
            const auto r = resample::smote(dataset(x, y, {}), cfg, threads);
            py::array_t<double> rows({static_cast<py::ssize_t>(r.data.size()), static_cast<py::ssize_t>(r.data.width())});
            std::copy(r.data.rows.data().begin(), r.data.rows.data().end(), rows.mutable_data());
            return py::make_tuple(rows, py::array_t<int>(static_cast<py::ssize_t>(r.data.labels.size()), r.data.labels.data()));
        },
        py::arg("x"), py::arg("y"), py::arg("k_neighbors") = 5, py::arg("target_ratio") = 1.0, py::arg("seed") = 42,
        py::arg("threads") = 1, "Oversample the minority class. Returns (x, y) with synthetic rows appended.");

    py::class_<PyModel>(m, "Model")
        .def_property_readonly("kind", &PyModel::kind)
        .def_property_readonly("feature_names", [](const PyModel& p) { return ensemble::feature_names(p.model); })
        .def("predict", &PyModel::predict, py::arg("x"), "Positive-class probabilities.")
        .def("shap_values", &PyModel::shap_values, py::arg("x"), py::arg("threads") = 1,
             "Returns (base_values, contributions). Forest: probability scale; boosted: log-odds.")
        .def("save", [](const PyModel& p, const std::string& path) { ensemble::save_model(p.model, path); })
        .def("to_json", [](const PyModel& p) { return json_to_py(ensemble::to_json(p.model)); });

    m.def(
        "fit_forest",
        [](const Array& x, const Labels& y, std::size_t n_trees, std::optional<std::size_t> max_depth,
           std::size_t min_samples_leaf, bool bootstrap, std::uint64_t seed, unsigned threads,
           std::vector<std::string> feature_names) {
            ensemble::ForestParams p;
            p.n_trees = n_trees;
            p.tree.max_depth = max_depth.value_or(tree::kUnlimitedDepth);
            p.tree.min_samples_leaf = min_samples_leaf;
            p.bootstrap = bootstrap;
            return PyModel{ensemble::fit_forest(dataset(x, y, std::move(feature_names)), p, seed, threads)};
        },
        py::arg("x"), py::arg("y"), py::arg("n_trees") = 100, py::arg("max_depth") = py::none(),
        py::arg("min_samples_leaf") = 1, py::arg("bootstrap") = true, py::arg("seed") = 42, py::arg("threads") = 1,
        py::arg("feature_names") = std::vector<std::string>{});

    m.def(
        "fit_boosted",
        [](const Array& x, const Labels& y, std::size_t rounds, std::size_t max_depth, double learning_rate,
           double l2_lambda, std::optional<double> positive_weight, std::uint64_t seed,
           std::vector<std::string> feature_names) {
            ensemble::BoostParams p;
            p.rounds = rounds;
            p.tree.max_depth = max_depth;
            p.learning_rate = learning_rate;
            p.l2_lambda = l2_lambda;
            p.positive_weight = positive_weight.value_or(ensemble::kBalancedWeight);
            return PyModel{ensemble::fit_boosted(dataset(x, y, std::move(feature_names)), p, seed)};
        },
        py::arg("x"), py::arg("y"), py::arg("rounds") = 100, py::arg("max_depth") = 6, py::arg("learning_rate") = 0.3,
        py::arg("l2_lambda") = 1.0, py::arg("positive_weight") = 1.0, py::arg("seed") = 42,
        py::arg("feature_names") = std::vector<std::string>{},
        "positive_weight=None balances the classes (negatives / positives).");

    m.def("load_model", [](const std::string& path) { return PyModel{ensemble::load_model(path)}; }, py::arg("path"));

    m.def(
        "point_in_polygon",
        [](double x, double y, const std::vector<std::vector<std::pair<double, double>>>& rings) {
            geo::DistrictPolygon d;
            d.district_id = "p";
            geo::PolygonPart part;
            for (const auto& r : rings) {
                geo::Ring ring;
                for (const auto& [px, py_] : r) ring.push_back({px, py_});
                part.rings.push_back(std::move(ring));
            }
            d.parts.push_back(std::move(part));
            d.validate();
            return geo::point_in_polygon({x, y}, d);
        },
        py::arg("x"), py::arg("y"), py::arg("rings"),
        "Rings are closed coordinate lists; the first is the outer boundary, the rest holes. Boundary counts as inside.");
}
