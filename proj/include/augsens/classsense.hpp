#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "augsens/augment.hpp"
#include "augsens/convnet.hpp"
#include "augsens/estimators.hpp"
#include "augsens/maskeval.hpp"

namespace augsens {

/// k largest values, descending, ties to the lower index.
std::vector<std::size_t> topk_sensitive(std::span<const double> values, std::size_t k);
std::vector<std::size_t> topk_sensitive(const SensitivityMap& logits_map, std::size_t k);

/// |A n B| / |A u B| of two index sets (duplicates ignored).
double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Probability that two n-subsets of N items share exactly k items.
double hypergeometric_pmf(std::size_t N, std::size_t n, std::size_t k);
/// Expected Jaccard index of two independent random n-subsets of N items.
double null_mean_jaccard(std::size_t N, std::size_t n);
double null_jaccard_variance(std::size_t N, std::size_t n);

struct ThresholdResult {
    std::size_t N = 0, n = 0, s = 0, trials = 0;
    double q1 = 0.0;
    double q3 = 0.0;
    double tau = 0.0;
    /// Mean over trials of the simulated mean Jaccard.
    double simulated_mean = 0.0;
};

/// Outlier fence q3 + 1.5 IQR of the null distribution of the mean Jaccard
/// index over s*N prediction/sensitivity pairs.
ThresholdResult mc_threshold(std::size_t N, std::size_t n, std::size_t s, std::size_t trials, std::uint64_t seed,
                             std::size_t jobs = 1);

/// Amplified grid for bias analysis: alpha = 1.5 on raw and inverted maps, q in {0.5 .. 0.9}.
std::vector<MaskVariant> bias_grid();

struct JaccardCell {
    MaskVariant variant;
    double mean_jaccard = 0.0;
    bool flagged = false;
};

struct JaccardReport {
    std::string augmentation;
    SensitivityKind kind = SensitivityKind::SobolFirst;
    std::vector<std::size_t> sensitive;
    ThresholdResult threshold;
    std::vector<JaccardCell> cells;
};

/// Mean Jaccard index between each image's top-k masked prediction and the
/// sensitive classes, one cell per mask. Cells above tau are flagged.
JaccardReport bias_report(const Network& net, const std::vector<Image>& images, const std::string& augmentation,
                          SensitivityKind kind, const std::vector<std::size_t>& sensitive,
                          const std::vector<std::pair<MaskVariant, MaskSet>>& masks, const ThresholdResult& threshold,
                          std::size_t jobs = 1);

std::string jaccard_csv(const std::vector<JaccardReport>& reports);

}  // namespace augsens
