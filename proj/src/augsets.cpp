#include "augsens/augsets.hpp"

#include "augsens/error.hpp"

namespace augsens {

namespace {

bool has_apply_flag(TransformKind k) {
    return k == TransformKind::Sharpness || k == TransformKind::Grayscale || k == TransformKind::HFlip;
}

VariableSpec param_var(const std::string& t, const std::string& p, VariableKind kind, double def, int transform) {
    return {t + "." + p, kind, def, VariableRole::Parameter, transform, p};
}

// Slab supports of the inner parameters.
std::vector<VariableSpec> transform_variables(TransformKind k, int t, const AugmentationOptions& o) {
    const std::string n = to_string(k);
    const auto H = static_cast<long>(o.height), W = static_cast<long>(o.width);
    switch (k) {
        case TransformKind::Erase:
            return {param_var(n, "cx", ContinuousUniform{0.0, 1.0}, 0.5, t),
                    param_var(n, "cy", ContinuousUniform{0.0, 1.0}, 0.5, t),
                    param_var(n, "w", ContinuousUniform{0.1, 0.4}, 0.0, t),
                    param_var(n, "h", ContinuousUniform{0.1, 0.4}, 0.0, t)};
        case TransformKind::Rolling:
            return {param_var(n, "dy", DiscreteUniform{0, H - 1}, 0.0, t),
                    param_var(n, "dx", DiscreteUniform{0, W - 1}, 0.0, t)};
        case TransformKind::GaussianBlur:
            return {param_var(n, "sigma", ContinuousUniform{0.5, 3.0}, 0.0, t)};
        case TransformKind::Brightness:
        case TransformKind::Contrast:
        case TransformKind::Saturation:
            return {param_var(n, "factor", ContinuousUniform{0.5, 1.5}, 1.0, t)};
        case TransformKind::Hue:
            return {param_var(n, "shift", ContinuousUniform{-0.1, 0.1}, 0.0, t)};
        case TransformKind::RotateCrop:
            return {param_var(n, "angle", ContinuousUniform{-30.0, 30.0}, 0.0, t)};
        case TransformKind::EllipticBlur:
            return {param_var(n, "cx", ContinuousUniform{0.2, 0.8}, 0.5, t),
                    param_var(n, "cy", ContinuousUniform{0.2, 0.8}, 0.5, t),
                    param_var(n, "a", ContinuousUniform{0.1, 0.3}, 0.0, t),
                    param_var(n, "b", ContinuousUniform{0.1, 0.3}, 0.0, t),
                    param_var(n, "sigma", ContinuousUniform{0.5, 3.0}, 0.0, t)};
        case TransformKind::Sharpness:
        case TransformKind::Grayscale:
        case TransformKind::HFlip:
            if (o.scheme == Scheme::SpikeSlab) return {};  // the gate is the apply flag
            return {{n + ".apply", Categorical{2}, 0.0, VariableRole::Apply, t, "apply"}};
    }
    throw DomainError("unknown transform kind");
}

}  // namespace

std::vector<TransformKind> augmentation_set_kinds(const std::string& id) {
    using K = TransformKind;
    if (id == "A0" || id == "A1") return {K::Erase, K::Sharpness, K::Rolling, K::Grayscale, K::GaussianBlur};
    if (id == "A2") return {K::Brightness, K::Contrast, K::Saturation, K::Hue, K::HFlip, K::RotateCrop, K::EllipticBlur};
    throw DomainError("unknown augmentation set '" + id + "' (expected A0, A1 or A2)");
}

AugmentationSet make_custom_set(const std::vector<TransformKind>& kinds, const AugmentationOptions& o) {
    if (kinds.empty()) throw DomainError("an augmentation set needs at least one transform");
    if (o.class_count < 2) throw DomainError("an augmentation set needs at least two classes");
    std::vector<VariableSpec> vars;
    std::vector<VariableGroup> groups;
    const std::size_t d = kinds.size();

    vars.push_back({"class", Categorical{o.class_count}, 0.0, VariableRole::Class, -1, ""});
    groups.push_back({"class", {0}});
    vars.push_back({"partition", Categorical{2}, 0.0, VariableRole::Partition, -1, ""});
    groups.push_back({"partition", {1}});
    vars.push_back({"permutation", Categorical{static_cast<std::size_t>(factorial(d))}, 0.0, VariableRole::Permutation, -1, ""});
    groups.push_back({"permutation", {2}});

    for (std::size_t t = 0; t < d; ++t) {
        VariableGroup g{to_string(kinds[t]), {}};
        if (o.scheme == Scheme::SpikeSlab) {
            g.members.push_back(vars.size());
            vars.push_back({to_string(kinds[t]) + ".gate", Switch{o.switch_threshold}, 0.0, VariableRole::Switch,
                            static_cast<int>(t), ""});
        }
        for (auto& v : transform_variables(kinds[t], static_cast<int>(t), o)) {
            g.members.push_back(vars.size());
            vars.push_back(std::move(v));
        }
        groups.push_back(std::move(g));
    }
    return AugmentationSet{"custom", kinds, InputSpaceModel(std::move(vars), std::move(groups), d, o.class_count, o.scheme),
                           false};
}

AugmentationSet make_augmentation_set(const std::string& id, const AugmentationOptions& options) {
    AugmentationSet set = make_custom_set(augmentation_set_kinds(id), options);
    set.id = id;
    set.inert = id == "A0";
    return set;
}

std::vector<TransformSpec> AugmentationSet::specs(const Realization& r) const {
    std::vector<TransformSpec> out;
    out.reserve(transforms.size());
    for (TransformKind k : transforms) out.push_back(identity_spec(k));
    if (inert) return out;
    const auto& vars = space.variables();
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const auto& v = vars[i];
        if (v.transform < 0) continue;
        auto& spec = out[static_cast<std::size_t>(v.transform)];
        if (v.role == VariableRole::Parameter || v.role == VariableRole::Apply) {
            spec.params[v.param] = r.values[i];
        } else if (v.role == VariableRole::Switch && has_apply_flag(spec.kind)) {
            spec.params["apply"] = r.values[i];
        }
    }
    for (auto& spec : out) {
        if (spec.kind == TransformKind::Sharpness) spec.params["factor"] = kSharpnessFactor;
    }
    return out;
}

Image AugmentationSet::apply(const Image& img, const Realization& r) const {
    const auto s = specs(r);
    return compose_ordered(img, s, r.order);
}

}  // namespace augsens
