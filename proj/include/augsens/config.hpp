#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "augsens/inputspace.hpp"

namespace augsens {

inline constexpr int kConfigSchema = 1;

/// One experiment. Loaded from a single JSON document; see README for the schema.
struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 1;

    // network: "tinynet-a" or a path to an ASWT weight archive for that architecture
    std::string network = "tinynet-a";
    std::uint64_t network_seed = 7;

    // dataset: "desk" or an image folder
    std::string dataset = "desk";
    std::uint64_t dataset_seed = 11;
    std::size_t classes = 10;
    std::size_t per_class = 200;
    std::size_t height = 32;
    std::size_t width = 32;

    std::string augmentation = "A1";
    Scheme scheme = Scheme::Independent;
    double switch_threshold = 0.5;

    // plan: "saltelli" (n_base) or "shapley" (n_perm, n_outer, n_inner)
    std::string design = "saltelli";
    std::size_t n_base = 256;
    std::size_t n_perm = 0;
    std::size_t n_outer = 0;
    std::size_t n_inner = 0;

    /// Checkpoints to analyse; empty selects all.
    std::vector<std::string> checkpoints;
    bool persist_activations = false;

    // masking series
    /// "auto" resolves to sobol-first for Saltelli and shapley for Shapley designs.
    std::string mask_kind = "auto";
    std::size_t mask_images_per_class = 20;
    std::size_t condition_repeats = 3;
    /// Input conditions ("none" and transform names); empty selects all.
    std::vector<std::string> conditions;
    /// SA variables whose maps become masks; empty selects all.
    std::vector<std::string> mask_variables;

    // single-class series
    std::size_t top_k = 5;
    std::size_t mc_trials = 1000000;

    // segment series: segment end checkpoints; empty selects every convolutional checkpoint
    std::vector<std::string> segments;

    // statistics
    std::size_t lda_folds = 5;
    std::size_t lda_repeats = 100;
    double lda_shrinkage = 1e-3;

    std::filesystem::path output = "augsens-out";
    /// Directory of the config file; relative paths resolve against it.
    std::filesystem::path base_dir = ".";

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : base_dir / p;
    }
    /// Referenced files exist and values are in range.
    void validate() const;
    std::string resolved_mask_kind() const;
};

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON (sorted keys, no whitespace) without run-local fields.
std::string config_json(const ExperimentConfig& cfg);
/// Default config document written by `augsens init`.
std::string default_config_json();

}  // namespace augsens
