"""Variance-based sensitivity of network activations to input augmentations."""

from ._augsens import (
    DomainError,
    Error,
    FormatError,
    Network,
    Pipeline,
    RefusalError,
    ShapeError,
    StageDependencyError,
    apply_transform,
    average_linkage,
    default_config,
    exact_indices,
    exact_shapley,
    hsv_to_rgb,
    jaccard,
    lda_accuracy,
    mc_threshold,
    null_mean_jaccard,
    rgb_to_hsv,
    saltelli_budget,
    shapley_budget,
    shapley_effects,
    sobol_indices,
    sobol_sequence,
    spearman,
    study_grid,
    threshold_mask,
    tinynet_a,
    transform_names,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
