#pragma once

#include <string>
#include <vector>

#include "augsens/augment.hpp"
#include "augsens/inputspace.hpp"

namespace augsens {

/// Fixed factor of the sharpness transform when it is applied.
inline constexpr double kSharpnessFactor = 1.5;

struct AugmentationSet {
    std::string id;  // "A0", "A1", "A2" or "custom"
    std::vector<TransformKind> transforms;
    InputSpaceModel space;
    /// Transforms never act (the non-augmented set); variables are kept so plans
    /// have the same shape as the augmented set they mirror.
    bool inert = false;

    /// Transform specs in declaration order for one realization.
    std::vector<TransformSpec> specs(const Realization& r) const;
    /// Augment one image according to a realization (order taken from r.order).
    Image apply(const Image& img, const Realization& r) const;
};

struct AugmentationOptions {
    Scheme scheme = Scheme::Independent;
    std::size_t class_count = 10;
    std::size_t height = 32;
    std::size_t width = 32;
    /// Switch thresholds of the spike-and-slab scheme, one for all transforms.
    double switch_threshold = 0.5;
};

std::vector<TransformKind> augmentation_set_kinds(const std::string& id);

/// "A0" mirrors "A1" with inert transforms.
AugmentationSet make_augmentation_set(const std::string& id, const AugmentationOptions& options);
AugmentationSet make_custom_set(const std::vector<TransformKind>& kinds, const AugmentationOptions& options);

}  // namespace augsens
