#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "augsens/augsets.hpp"
#include "augsens/convnet.hpp"
#include "augsens/estimators.hpp"

namespace augsens {

enum class MaskMode { Raw, Inverted, Threshold };

/// One cell of a mask grid. Threshold variants scale the entries above the
/// q-quantile by alpha; with invert_base they act on 1 - values.
struct MaskVariant {
    MaskMode mode = MaskMode::Raw;
    double alpha = 1.0;
    double q = 0.5;
    bool invert_base = false;

    std::string label() const;
    bool operator==(const MaskVariant&) const = default;
};

/// raw, inverted, then alpha in {0, 0.5, 1.5} x q in {0.5 .. 0.9}.
std::vector<MaskVariant> study_grid();

/// Map values scaled into [0, 1]: Sobol indices are clipped, Shapley values
/// are divided by the unit's total variance first. Dead units map to 0.
Tensor normalize_map(const SensitivityMap& map);

/// Smallest value with at least ceil(q n) values at or below it.
double nearest_rank_quantile(std::span<const float> values, double q);

/// Mask tensor from normalized values.
Tensor build_mask(const Tensor& normalized, const MaskVariant& variant);

/// Masks for every convolutional checkpoint present in `normalized`
/// (checkpoint name -> normalized map). Dense checkpoints are skipped.
MaskSet build_masks(const Network& net, const std::map<std::string, Tensor>& normalized, const MaskVariant& variant);

/// Logits with masks applied; every mask must match its checkpoint shape.
Tensor masked_forward(const Network& net, const Tensor& input, const MaskSet& masks);

// ---- accuracy features ------------------------------------------------------------------

struct InputCondition {
    std::string name;                      // "none" or a transform name
    std::optional<std::size_t> transform;  // index into the set's transforms
    std::size_t repeats = 1;
};

/// "none" plus every single transform of the set. Transforms with inner
/// parameters get `repeats` draws per image.
std::vector<InputCondition> input_conditions(const AugmentationSet& set, std::size_t repeats = 3);

/// The image under one condition: the condition's transform forced on, its
/// parameters drawn from their marginals, every other transform off.
Image condition_image(const AugmentationSet& set, const InputCondition& condition, const Image& img,
                      std::uint64_t seed, std::size_t image_index, std::size_t repeat);

struct MaskedRunReport {
    std::string input_condition;
    std::string mask_variable;
    std::vector<MaskVariant> grid;
    std::vector<double> accuracy;  // per grid cell, top-1
    double unmasked_accuracy = 0.0;
    std::size_t samples = 0;
};

struct AccuracyOptions {
    std::uint64_t seed = 0;
    std::size_t repeats = 3;
    std::size_t jobs = 1;
};

/// variable name -> (checkpoint name -> normalized map)
using VariableMaps = std::map<std::string, std::map<std::string, Tensor>>;

/// One report per (condition, variable), condition-major, variables in map order.
std::vector<MaskedRunReport> accuracy_features(const Network& net, const std::vector<Image>& images,
                                               const std::vector<std::size_t>& labels, const AugmentationSet& set,
                                               const std::vector<InputCondition>& conditions, const VariableMaps& maps,
                                               const std::vector<MaskVariant>& grid, const AccuracyOptions& options = {});

struct MatchMatrix {
    std::vector<std::string> rows;     // input augmentations
    std::vector<std::string> columns;  // mask variables
    std::vector<double> values;
    std::vector<std::uint8_t> undefined;

    double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
    bool is_defined(std::size_t r, std::size_t c) const { return !undefined[r * columns.size() + c]; }
};

/// Spearman correlation, per (augmentation, variable), between the accuracy
/// vectors of the "none" condition and of the augmented condition.
MatchMatrix match_correlation(const std::vector<MaskedRunReport>& reports);

std::string reports_csv(const std::vector<MaskedRunReport>& reports);
std::string match_csv(const MatchMatrix& m);

}  // namespace augsens
