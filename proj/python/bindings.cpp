#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "augsens/augment.hpp"
#include "augsens/classsense.hpp"
#include "augsens/config.hpp"
#include "augsens/convnet.hpp"
#include "augsens/error.hpp"
#include "augsens/estimators.hpp"
#include "augsens/exact.hpp"
#include "augsens/inputspace.hpp"
#include "augsens/maskeval.hpp"
#include "augsens/pipeline.hpp"
#include "augsens/statan.hpp"

namespace py = pybind11;
using namespace augsens;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F32Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_numpy(const Tensor& t) {
    py::array_t<float> out(t.shape());
    std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
    return out;
}

py::array_t<double> matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    py::array_t<double> out({rows, cols});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const F64Array& a) { return {a.data(), a.data() + a.size()}; }

// Variables from a list of specs: float pairs are continuous ranges, ints are categorical cardinalities.
InputSpaceModel space_from(const py::list& specs) {
    std::vector<VariableSpec> vars;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const py::handle s = specs[i];
        const std::string name = "x" + std::to_string(i);
        if (py::isinstance<py::int_>(s)) {
            vars.push_back({name, Categorical{s.cast<std::size_t>()}});
        } else {
            const auto range = s.cast<std::pair<double, double>>();
            vars.push_back({name, ContinuousUniform{range.first, range.second}});
        }
    }
    return InputSpaceModel::generic(std::move(vars));
}

// Evaluates f on every decoded plan row; f returns a scalar or a 1-d array of units.
std::pair<std::vector<double>, std::size_t> evaluate(const SamplePlan& plan, const InputSpaceModel& space,
                                                     const py::function& f) {
    std::vector<double> out;
    std::size_t units = 0;
    py::array_t<double> x(plan.dim);
    for (std::size_t r = 0; r < plan.budget; ++r) {
        const auto row = plan.row(r);
        auto xm = x.mutable_unchecked<1>();
        for (std::size_t k = 0; k < plan.dim; ++k) xm(k) = decode_variable(space.variables()[k], row[k]);
        const F64Array y = F64Array::ensure(f(x));
        if (!y) throw DomainError("model must return numbers");
        if (r == 0) {
            units = static_cast<std::size_t>(y.size());
            out.reserve(plan.budget * units);
        } else if (static_cast<std::size_t>(y.size()) != units) {
            throw ShapeError("model returned a different number of units");
        }
        out.insert(out.end(), y.data(), y.data() + y.size());
    }
    return {out, units};
}

TabulatedFunction table_from(const F64Array& values) {
    std::vector<std::size_t> cards(values.shape(), values.shape() + values.ndim());
    TabulatedFunction t;
    t.cardinalities = cards;
    t.values = to_vector(values);
    return t;
}

TransformSpec spec_from(const std::string& kind, const ParamMap& params) {
    TransformSpec s{transform_kind_from_string(kind), identity_params(transform_kind_from_string(kind))};
    for (const auto& [k, v] : params) s.params[k] = v;
    return s;
}

}  // namespace

PYBIND11_MODULE(_augsens, m) {
    m.doc() = "Variance-based sensitivity of network activations to input augmentations";

    py::register_exception<Error>(m, "Error");
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<RefusalError>(m, "RefusalError");
    py::register_exception<StageDependencyError>(m, "StageDependencyError");
    py::register_exception<FormatError>(m, "FormatError");

    // ---- input space ------------------------------------------------------------------
    m.def(
        "sobol_sequence",
        [](std::size_t dim, std::size_t n, std::size_t skip) { return matrix(sobol_sequence(dim, n, skip), n, dim); },
        py::arg("dim"), py::arg("n"), py::arg("skip") = 0);
    m.def(
        "saltelli_budget", [](std::size_t n, std::size_t d) { return budget(SaltelliBudget{n, d}); }, py::arg("n_base"),
        py::arg("d"));
    m.def(
        "shapley_budget",
        [](std::size_t n_perm, std::size_t d, std::size_t n_outer, std::size_t n_inner) {
            return budget(ShapleyBudget{n_perm, d, n_outer, n_inner});
        },
        py::arg("n_perm"), py::arg("d"), py::arg("n_outer"), py::arg("n_inner"));

    // ---- estimators -------------------------------------------------------------------
    m.def(
        "sobol_indices",
        [](const py::function& f, const py::list& variables, std::size_t n_base, std::uint64_t seed) {
            const auto space = space_from(variables);
            const auto plan = saltelli_plan(space, n_base, seed);
            const auto [out, units] = evaluate(plan, space, f);
            const auto est = sobol_estimate(plan, out, units);
            py::dict d;
            d["first"] = matrix(est.first, est.groups, units);
            d["total"] = matrix(est.total, est.groups, units);
            d["variance"] = est.variance;
            d["dead"] = std::vector<bool>(est.dead.begin(), est.dead.end());
            return d;
        },
        py::arg("f"), py::arg("variables"), py::arg("n_base") = 1024, py::arg("seed") = 1,
        "Saltelli estimates for f over independent variables; returns groups x units arrays.");
    m.def(
        "shapley_effects",
        [](const py::function& f, const py::list& variables, std::size_t n_perm, std::size_t n_outer, std::size_t n_inner,
           std::uint64_t seed) {
            const auto space = space_from(variables);
            const auto plan = shapley_plan(space, n_perm, n_outer, n_inner, seed);
            const auto [out, units] = evaluate(plan, space, f);
            const auto est = shapley_estimate(plan, out, units);
            py::dict d;
            d["values"] = matrix(est.values, est.groups, units);
            d["total_variance"] = est.total_variance;
            d["pooled"] = est.pooled;
            return d;
        },
        py::arg("f"), py::arg("variables"), py::arg("n_perm"), py::arg("n_outer"), py::arg("n_inner"),
        py::arg("seed") = 1);
    m.def(
        "exact_indices",
        [](const F64Array& table) {
            const auto dec = exact_oracle(table_from(table));
            std::vector<double> first, total;
            for (std::size_t i = 0; i < dec.d; ++i) {
                first.push_back(dec.first_order(i));
                total.push_back(dec.total(i));
            }
            py::dict d;
            d["variance"] = dec.variance;
            d["first"] = first;
            d["total"] = total;
            d["partial_variance"] = dec.partial_variance;
            return d;
        },
        py::arg("table"), "Exact Hoeffding decomposition of f tabulated on a uniform grid (array axes = variables).");
    m.def(
        "exact_shapley",
        [](const F64Array& table, bool by_permutation) {
            const auto t = table_from(table);
            return by_permutation ? permutation_shapley_exact(t) : subset_shapley_exact(t);
        },
        py::arg("table"), py::arg("by_permutation") = false);

    // ---- augmentation -----------------------------------------------------------------
    m.def("transform_names", [] {
        std::vector<std::string> names;
        for (auto k : all_transform_kinds()) names.push_back(to_string(k));
        return names;
    });
    m.def(
        "apply_transform",
        [](const F32Array& image, const std::string& kind, const ParamMap& params) {
            return to_numpy(apply_transform(Image(to_tensor(image)), spec_from(kind, params)).pixels);
        },
        py::arg("image"), py::arg("kind"), py::arg("params") = ParamMap{},
        "Applies one transform to a C x H x W float image; missing parameters take their identity value.");
    m.def("rgb_to_hsv", [](const F32Array& image) { return to_numpy(rgb_to_hsv(Image(to_tensor(image))).pixels); });
    m.def("hsv_to_rgb", [](const F32Array& image) { return to_numpy(hsv_to_rgb(Image(to_tensor(image))).pixels); });

    // ---- network ----------------------------------------------------------------------
    py::class_<Network>(m, "Network")
        .def_property_readonly("checkpoints", &Network::checkpoint_names)
        .def("checkpoint_shape", &Network::checkpoint_shape)
        .def(
            "forward",
            [](const Network& net, const F32Array& x, const std::map<std::string, F32Array>& masks) {
                MaskSet ms;
                for (const auto& [k, v] : masks) ms[k] = to_tensor(v);
                const auto res = forward_with_checkpoints(net, to_tensor(x), masks.empty() ? nullptr : &ms);
                py::dict d;
                for (const auto& r : res.records) d[py::str(r.checkpoint)] = to_numpy(r.tensor);
                d["logits"] = to_numpy(res.logits);
                return d;
            },
            py::arg("x"), py::arg("masks") = std::map<std::string, F32Array>{},
            "Activations at every checkpoint plus the logits, with optional multiplicative masks.");
    m.def("tinynet_a", &tinynet_a, py::arg("classes") = 10, py::arg("seed") = 0, py::arg("height") = 32,
          py::arg("width") = 32);

    // ---- masks ------------------------------------------------------------------------
    m.def("study_grid", [] {
        std::vector<std::string> labels;
        for (const auto& v : study_grid()) labels.push_back(v.label());
        return labels;
    });
    m.def(
        "threshold_mask",
        [](const F32Array& values, double alpha, double q) {
            return to_numpy(build_mask(to_tensor(values), {MaskMode::Threshold, alpha, q}));
        },
        py::arg("values"), py::arg("alpha"), py::arg("q"));

    // ---- single-class statistics ------------------------------------------------------
    m.def(
        "jaccard", [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) { return jaccard(a, b); });
    m.def("null_mean_jaccard", &null_mean_jaccard, py::arg("N"), py::arg("n"));
    m.def(
        "mc_threshold",
        [](std::size_t N, std::size_t n, std::size_t s, std::size_t trials, std::uint64_t seed, std::size_t jobs) {
            py::gil_scoped_release release;
            const auto r = mc_threshold(N, n, s, trials, seed, jobs);
            return std::make_tuple(r.q1, r.q3, r.tau);
        },
        py::arg("N"), py::arg("n"), py::arg("s"), py::arg("trials") = 1000000, py::arg("seed") = 1,
        py::arg("jobs") = 1, "Returns (q1, q3, tau) of the null distribution of the mean Jaccard index.");

    // ---- statistics -------------------------------------------------------------------
    m.def("spearman", [](const F64Array& x, const F64Array& y) { return spearman(to_vector(x), to_vector(y)); });
    m.def(
        "average_linkage",
        [](const F64Array& d) {
            if (d.ndim() != 2 || d.shape(0) != d.shape(1)) throw ShapeError("distance matrix must be square");
            const auto n = static_cast<std::size_t>(d.shape(0));
            DistanceMatrix dm{std::vector<std::string>(n), to_vector(d), std::vector<std::uint8_t>(n * n, 0)};
            std::vector<std::tuple<std::size_t, std::size_t, double, std::size_t>> merges;
            for (const auto& mg : average_linkage(dm).merges) merges.emplace_back(mg.a, mg.b, mg.height, mg.size);
            return merges;
        },
        "Merges (a, b, height, size) in scipy's linkage convention.");
    m.def(
        "lda_accuracy",
        [](const F64Array& x, const std::vector<std::size_t>& labels, std::size_t folds, std::size_t repeats,
           std::uint64_t seed) {
            if (x.ndim() != 2) throw ShapeError("features must be samples x dims");
            std::size_t classes = 0;
            for (auto l : labels) classes = std::max(classes, l + 1);
            std::vector<std::string> names(classes);
            for (std::size_t k = 0; k < classes; ++k) names[k] = std::to_string(k);
            return lda_confusion(to_vector(x), static_cast<std::size_t>(x.shape(1)), labels, names,
                                 {folds, repeats, seed, 1e-3, 1})
                .accuracy();
        },
        py::arg("x"), py::arg("labels"), py::arg("folds") = 5, py::arg("repeats") = 100, py::arg("seed") = 0);

    // ---- pipeline ---------------------------------------------------------------------
    m.def("default_config", &default_config_json);
    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init([](const std::string& config_json, const std::filesystem::path& base_dir, std::size_t jobs) {
                 return std::make_unique<Pipeline>(parse_config(config_json, base_dir), jobs);
             }),
             py::arg("config_json"), py::arg("base_dir") = std::filesystem::path("."), py::arg("jobs") = 1)
        .def("run", [](Pipeline& p, const std::string& stage) {
            const std::map<std::string, std::function<StageResult()>> stages{
                {"plan", [&] { return p.plan(); }},
                {"sample", [&] { return p.sample(); }},
                {"infer", [&] { return p.infer(); }},
                {"estimate", [&] { return p.estimate(); }},
                {"mask-eval", [&] { return p.mask_eval(); }},
                {"class-sense", [&] { return p.class_sense(); }},
                {"segment", [&] { return p.segment(); }},
                {"report", [&] { return p.report(); }},
            };
            const auto it = stages.find(stage);
            if (it == stages.end()) throw DomainError("unknown stage '" + stage + "'");
            StageResult r;
            {
                py::gil_scoped_release release;
                r = it->second();
            }
            return std::make_tuple(r.dir, r.reused);
        },
             py::arg("stage"), "Runs one stage; returns (directory, reused).");
}
