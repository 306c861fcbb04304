#include "augsens/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "augsens/augsets.hpp"
#include "augsens/error.hpp"
#include "augsens/estimators.hpp"
#include "json.hpp"

namespace augsens {

using nlohmann::json;

namespace {

const std::set<std::string> kKeys{
    "schema",     "name",         "seed",       "network",          "network_seed",   "dataset",
    "dataset_seed", "classes",    "per_class",  "height",           "width",          "augmentation",
    "scheme",     "switch_threshold", "design", "n_base",           "n_perm",         "n_outer",
    "n_inner",    "checkpoints",  "persist_activations", "mask_kind", "mask_images_per_class",
    "condition_repeats", "conditions", "mask_variables", "top_k",   "mc_trials",      "segments",
    "lda_folds",  "lda_repeats",  "lda_shrinkage", "output"};

template <class T>
void get(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("config field '") + key + "': " + e.what());
    }
}

json to_json(const ExperimentConfig& c) {
    return json{{"schema", kConfigSchema},
                {"name", c.name},
                {"seed", c.seed},
                {"network", c.network},
                {"network_seed", c.network_seed},
                {"dataset", c.dataset},
                {"dataset_seed", c.dataset_seed},
                {"classes", c.classes},
                {"per_class", c.per_class},
                {"height", c.height},
                {"width", c.width},
                {"augmentation", c.augmentation},
                {"scheme", to_string(c.scheme)},
                {"switch_threshold", c.switch_threshold},
                {"design", c.design},
                {"n_base", c.n_base},
                {"n_perm", c.n_perm},
                {"n_outer", c.n_outer},
                {"n_inner", c.n_inner},
                {"checkpoints", c.checkpoints},
                {"persist_activations", c.persist_activations},
                {"mask_kind", c.mask_kind},
                {"mask_images_per_class", c.mask_images_per_class},
                {"condition_repeats", c.condition_repeats},
                {"conditions", c.conditions},
                {"mask_variables", c.mask_variables},
                {"top_k", c.top_k},
                {"mc_trials", c.mc_trials},
                {"segments", c.segments},
                {"lda_folds", c.lda_folds},
                {"lda_repeats", c.lda_repeats},
                {"lda_shrinkage", c.lda_shrinkage}};
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw FormatError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!kKeys.count(key)) throw FormatError("unknown config field '" + key + "'");
    }
    int schema = kConfigSchema;
    get(j, "schema", schema);
    if (schema != kConfigSchema) throw FormatError("unsupported config schema " + std::to_string(schema));

    ExperimentConfig c;
    c.base_dir = base_dir;
    get(j, "name", c.name);
    get(j, "seed", c.seed);
    get(j, "network", c.network);
    get(j, "network_seed", c.network_seed);
    get(j, "dataset", c.dataset);
    get(j, "dataset_seed", c.dataset_seed);
    get(j, "classes", c.classes);
    get(j, "per_class", c.per_class);
    get(j, "height", c.height);
    get(j, "width", c.width);
    get(j, "augmentation", c.augmentation);
    std::string scheme = to_string(c.scheme);
    get(j, "scheme", scheme);
    c.scheme = scheme_from_string(scheme);
    get(j, "switch_threshold", c.switch_threshold);
    get(j, "design", c.design);
    get(j, "n_base", c.n_base);
    get(j, "n_perm", c.n_perm);
    get(j, "n_outer", c.n_outer);
    get(j, "n_inner", c.n_inner);
    get(j, "checkpoints", c.checkpoints);
    get(j, "persist_activations", c.persist_activations);
    get(j, "mask_kind", c.mask_kind);
    get(j, "mask_images_per_class", c.mask_images_per_class);
    get(j, "condition_repeats", c.condition_repeats);
    get(j, "conditions", c.conditions);
    get(j, "mask_variables", c.mask_variables);
    get(j, "top_k", c.top_k);
    get(j, "mc_trials", c.mc_trials);
    get(j, "segments", c.segments);
    get(j, "lda_folds", c.lda_folds);
    get(j, "lda_repeats", c.lda_repeats);
    get(j, "lda_shrinkage", c.lda_shrinkage);
    std::string output = c.output.string();
    get(j, "output", output);
    c.output = output;
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    ExperimentConfig c = parse_config(ss.str(), base);
    if (c.output.is_relative()) c.output = base / c.output;
    return c;
}

void ExperimentConfig::validate() const {
    if (network != "tinynet-a" && !std::filesystem::is_regular_file(resolve(network))) {
        throw FormatError("network weights not found: " + resolve(network).string());
    }
    if (dataset != "desk" && !std::filesystem::is_directory(resolve(dataset))) {
        throw FormatError("dataset directory not found: " + resolve(dataset).string());
    }
    augmentation_set_kinds(augmentation);
    if (design == "saltelli") {
        if (n_base == 0 || (n_base & (n_base - 1)) != 0) throw InvalidBudgetError("n_base must be a power of two");
        if (scheme != Scheme::Independent) throw DomainError("the Saltelli design needs the independent scheme");
    } else if (design == "shapley") {
        if (n_perm == 0 || n_outer == 0) throw InvalidBudgetError("n_perm and n_outer must be positive");
        if (n_inner < 2) throw VarianceUndefinedError("n_inner must be at least 2");
    } else {
        throw DomainError("design must be 'saltelli' or 'shapley'");
    }
    if (!(switch_threshold >= 0.0 && switch_threshold <= 1.0)) throw DomainError("switch_threshold must lie in [0, 1]");
    const auto kind = sensitivity_kind_from_string(resolved_mask_kind());
    if ((design == "shapley") != (kind == SensitivityKind::Shapley)) {
        throw DomainError("mask_kind '" + mask_kind + "' is not produced by the '" + design + "' design");
    }
    if (condition_repeats == 0 || mask_images_per_class == 0) throw DomainError("mask series counts must be positive");
    if (top_k == 0) throw DomainError("top_k must be positive");
    if (mc_trials < 2) throw DomainError("mc_trials must be at least 2");
    if (lda_folds < 2 || lda_repeats == 0) throw DomainError("LDA needs at least 2 folds and 1 repeat");
}

std::string ExperimentConfig::resolved_mask_kind() const {
    if (mask_kind != "auto") return mask_kind;
    return design == "shapley" ? "shapley" : "sobol-first";
}

std::string config_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(); }

std::string default_config_json() {
    ExperimentConfig c;
    c.name = "desk-a1";
    json j = to_json(c);
    j["output"] = "augsens-out";
    return j.dump(2) + "\n";
}

}  // namespace augsens
