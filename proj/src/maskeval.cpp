#include "augsens/maskeval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "augsens/error.hpp"
#include "augsens/parallel.hpp"
#include "augsens/rng.hpp"
#include "augsens/statan.hpp"

namespace augsens {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool parameterized(const AugmentationSet& set, std::size_t t) {
    for (const auto& v : set.space.variables()) {
        if (v.transform == static_cast<int>(t) && v.role == VariableRole::Parameter) return true;
    }
    return false;
}

std::size_t top1(const Tensor& logits) {
    return predict_topk(logits.data(), 1).front();
}

}  // namespace

std::string MaskVariant::label() const {
    switch (mode) {
        case MaskMode::Raw: return "raw";
        case MaskMode::Inverted: return "inverted";
        case MaskMode::Threshold:
            return std::string(invert_base ? "inv-thr(" : "thr(") + num(alpha) + "," + num(q) + ")";
    }
    return "?";
}

std::vector<MaskVariant> study_grid() {
    std::vector<MaskVariant> grid{{MaskMode::Raw}, {MaskMode::Inverted}};
    for (double alpha : {0.0, 0.5, 1.5}) {
        for (double q : {0.5, 0.6, 0.7, 0.8, 0.9}) grid.push_back({MaskMode::Threshold, alpha, q, false});
    }
    return grid;
}

Tensor normalize_map(const SensitivityMap& map) {
    Tensor out(map.values.shape());
    const bool shapley = map.kind == SensitivityKind::Shapley;
    for (std::size_t u = 0; u < out.size(); ++u) {
        if (!map.dead.empty() && map.dead[u]) continue;
        double v = map.values.data()[u];
        if (shapley) {
            const double tv = map.total_variance.at(u);
            v = tv > 0.0 ? v / tv : 0.0;
        }
        out.data()[u] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

double nearest_rank_quantile(std::span<const float> values, double q) {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
    if (values.empty()) throw DomainError("quantile of an empty map");
    std::vector<float> v(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    const std::size_t k = std::max<std::size_t>(rank, 1) - 1;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

Tensor build_mask(const Tensor& normalized, const MaskVariant& variant) {
    Tensor mask = normalized;
    float* m = mask.data().data();
    const std::size_t n = mask.size();
    switch (variant.mode) {
        case MaskMode::Raw:
            return mask;
        case MaskMode::Inverted:
            for (std::size_t i = 0; i < n; ++i) m[i] = 1.0f - m[i];
            return mask;
        case MaskMode::Threshold: {
            if (!(variant.alpha >= 0.0)) throw DomainError("threshold gain must be non-negative");
            if (variant.invert_base) {
                for (std::size_t i = 0; i < n; ++i) m[i] = 1.0f - m[i];
            }
            const double cut = nearest_rank_quantile({m, n}, variant.q);
            if (variant.alpha == 1.0) return mask;
            for (std::size_t i = 0; i < n; ++i) {
                if (m[i] > cut) m[i] = static_cast<float>(variant.alpha * m[i]);
            }
            return mask;
        }
    }
    throw DomainError("unknown mask mode");
}

MaskSet build_masks(const Network& net, const std::map<std::string, Tensor>& normalized, const MaskVariant& variant) {
    MaskSet masks;
    for (const auto& [name, values] : normalized) {
        if (!net.find_checkpoint(name).convolutional) continue;
        if (values.shape() != net.checkpoint_shape(name)) {
            throw ShapeError("map for checkpoint '" + name + "' has shape " + shape_to_string(values.shape()));
        }
        masks.emplace(name, build_mask(values, variant));
    }
    return masks;
}

Tensor masked_forward(const Network& net, const Tensor& input, const MaskSet& masks) {
    for (const auto& [name, mask] : masks) {
        if (mask.shape() != net.checkpoint_shape(name)) {
            throw ShapeError("mask for checkpoint '" + name + "' has shape " + shape_to_string(mask.shape()) +
                             ", expected " + shape_to_string(net.checkpoint_shape(name)));
        }
    }
    return forward(net, input, &masks);
}

std::vector<InputCondition> input_conditions(const AugmentationSet& set, std::size_t repeats) {
    if (repeats < 1) throw DomainError("condition repeats must be positive");
    std::vector<InputCondition> out{{"none", std::nullopt, 1}};
    for (std::size_t t = 0; t < set.transforms.size(); ++t) {
        out.push_back({to_string(set.transforms[t]), t, parameterized(set, t) ? repeats : 1});
    }
    return out;
}

Image condition_image(const AugmentationSet& set, const InputCondition& condition, const Image& img,
                      std::uint64_t seed, std::size_t image_index, std::size_t repeat) {
    if (!condition.transform || set.inert) return img;
    const std::size_t t = *condition.transform;
    if (t >= set.transforms.size()) throw DomainError("condition names a transform outside the set");
    TransformSpec spec = identity_spec(set.transforms[t]);
    const Philox philox(seed);
    const auto stream = stream_id(0xc0d, t, image_index, repeat);
    const auto& vars = set.space.variables();
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const auto& v = vars[i];
        if (v.transform != static_cast<int>(t) || v.role != VariableRole::Parameter) continue;
        spec.params[v.param] = decode_variable(v, philox.uniform(stream, i));
    }
    if (spec.params.count("apply")) spec.params["apply"] = 1.0;
    if (spec.kind == TransformKind::Sharpness) spec.params["factor"] = kSharpnessFactor;
    return apply_transform(img, spec);
}

std::vector<MaskedRunReport> accuracy_features(const Network& net, const std::vector<Image>& images,
                                               const std::vector<std::size_t>& labels, const AugmentationSet& set,
                                               const std::vector<InputCondition>& conditions, const VariableMaps& maps,
                                               const std::vector<MaskVariant>& grid, const AccuracyOptions& o) {
    if (images.empty()) throw DomainError("accuracy features need a non-empty dataset");
    if (labels.size() != images.size()) throw ArityError("one label per image is required");
    if (grid.empty()) throw DomainError("empty mask grid");

    // mask sets per (variable, grid cell)
    std::vector<std::string> variables;
    std::vector<MaskSet> masks;
    for (const auto& [var, per_ckpt] : maps) {
        variables.push_back(var);
        for (const auto& cell : grid) masks.push_back(build_masks(net, per_ckpt, cell));
    }

    std::vector<MaskedRunReport> reports;
    for (const auto& cond : conditions) {
        std::vector<Tensor> inputs;
        std::vector<std::size_t> truth;
        for (std::size_t i = 0; i < images.size(); ++i) {
            for (std::size_t r = 0; r < cond.repeats; ++r) {
                inputs.push_back(condition_image(set, cond, images[i], o.seed, i, r).pixels);
                truth.push_back(labels[i]);
            }
        }
        std::vector<std::uint8_t> unmasked(inputs.size());
        parallel_for(inputs.size(), o.jobs,
                     [&](std::size_t i) { unmasked[i] = top1(forward(net, inputs[i])) == truth[i]; });
        const double base = static_cast<double>(std::count(unmasked.begin(), unmasked.end(), 1)) /
                            static_cast<double>(inputs.size());

        // correct-prediction flags per (mask, sample); integer counts keep the result job-independent
        std::vector<std::uint8_t> hit(masks.size() * inputs.size());
        parallel_for(hit.size(), o.jobs, [&](std::size_t k) {
            const std::size_t m = k / inputs.size(), i = k % inputs.size();
            hit[k] = top1(forward(net, inputs[i], &masks[m])) == truth[i];
        });
        for (std::size_t v = 0; v < variables.size(); ++v) {
            MaskedRunReport rep{cond.name, variables[v], grid, std::vector<double>(grid.size()), base, inputs.size()};
            for (std::size_t c = 0; c < grid.size(); ++c) {
                const std::size_t m = v * grid.size() + c;
                const auto first = hit.begin() + static_cast<std::ptrdiff_t>(m * inputs.size());
                const auto correct = std::count(first, first + static_cast<std::ptrdiff_t>(inputs.size()), 1);
                rep.accuracy[c] = static_cast<double>(correct) / static_cast<double>(inputs.size());
            }
            reports.push_back(std::move(rep));
        }
    }
    return reports;
}

MatchMatrix match_correlation(const std::vector<MaskedRunReport>& reports) {
    MatchMatrix m;
    std::map<std::pair<std::string, std::string>, const MaskedRunReport*> index;
    for (const auto& r : reports) {
        if (r.accuracy.size() != r.grid.size()) throw ShapeError("incomplete report grid");
        index[{r.input_condition, r.mask_variable}] = &r;
        if (r.input_condition != "none" && std::find(m.rows.begin(), m.rows.end(), r.input_condition) == m.rows.end()) {
            m.rows.push_back(r.input_condition);
        }
        if (std::find(m.columns.begin(), m.columns.end(), r.mask_variable) == m.columns.end()) {
            m.columns.push_back(r.mask_variable);
        }
    }
    m.values.assign(m.rows.size() * m.columns.size(), 0.0);
    m.undefined.assign(m.values.size(), 1);
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
        const auto base = index.find({"none", m.columns[c]});
        if (base == index.end()) throw DomainError("no 'none' report for variable '" + m.columns[c] + "'");
        for (std::size_t r = 0; r < m.rows.size(); ++r) {
            const auto aug = index.find({m.rows[r], m.columns[c]});
            if (aug == index.end()) {
                throw DomainError("missing report for (" + m.rows[r] + ", " + m.columns[c] + ")");
            }
            if (aug->second->grid != base->second->grid) throw DomainError("reports use different grids");
            const auto rho = spearman(base->second->accuracy, aug->second->accuracy);
            if (rho) {
                m.values[r * m.columns.size() + c] = *rho;
                m.undefined[r * m.columns.size() + c] = 0;
            }
        }
    }
    return m;
}

std::string reports_csv(const std::vector<MaskedRunReport>& reports) {
    std::ostringstream os;
    os << "condition,variable,samples,unmasked";
    if (!reports.empty()) {
        for (const auto& cell : reports.front().grid) os << ",\"" << cell.label() << "\"";
    }
    os << "\n";
    for (const auto& r : reports) {
        os << r.input_condition << "," << r.mask_variable << "," << r.samples << "," << csv_num(r.unmasked_accuracy);
        for (double a : r.accuracy) os << "," << csv_num(a);
        os << "\n";
    }
    return os.str();
}

std::string match_csv(const MatchMatrix& m) {
    std::ostringstream os;
    os << "augmentation";
    for (const auto& c : m.columns) os << "," << c;
    os << "\n";
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
        os << m.rows[r];
        for (std::size_t c = 0; c < m.columns.size(); ++c) {
            os << "," << (m.is_defined(r, c) ? csv_num(m.at(r, c)) : std::string("NA"));
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace augsens
