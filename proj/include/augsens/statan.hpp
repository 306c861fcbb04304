#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "augsens/tensor.hpp"

namespace augsens {

/// Ranks starting at 1, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rank correlation; empty when either argument is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct CorrelationMatrix {
    std::vector<std::string> labels;
    std::vector<double> values;          // n x n, 0 where undefined
    std::vector<std::uint8_t> undefined;  // n x n

    std::size_t size() const { return labels.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
    bool is_defined(std::size_t i, std::size_t j) const { return !undefined[i * size() + j]; }
};

/// Column-wise Spearman matrix of a units x variables feature table (row-major).
CorrelationMatrix spearman_matrix(std::span<const double> features, std::size_t units,
                                  const std::vector<std::string>& labels);

/// Per pixel, Spearman correlation across channels of two C x H x W maps.
/// Result is H x W; empty entries mark degenerate locations.
std::vector<std::optional<double>> spatial_corr_map(const Tensor& sensitivity, const Tensor& cov);

struct DistanceMatrix {
    std::vector<std::string> labels;
    std::vector<double> values;
    std::vector<std::uint8_t> undefined;

    std::size_t size() const { return labels.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
    bool is_defined(std::size_t i, std::size_t j) const { return !undefined[i * size() + j]; }
};

/// d = sqrt(1 - |rho|).
double corr_distance(double rho);
DistanceMatrix corr_to_distance(const CorrelationMatrix& rho);

struct Merge {
    std::size_t a;  // cluster ids: leaves 0..n-1, merge k creates id n+k
    std::size_t b;
    double height;
    std::size_t size;
};

struct Dendrogram {
    std::vector<std::string> labels;
    std::vector<Merge> merges;
    /// False when clusters without any defined distance between them remained.
    bool complete = true;
};

/// Average-linkage agglomeration. Undefined leaf pairs are left out of the
/// averages. Ties pick the lowest (a, b) pair.
Dendrogram average_linkage(const DistanceMatrix& d);

struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<double> counts;  // true x predicted, averaged over repeats
    std::size_t folds = 0;
    std::size_t repeats = 0;

    std::size_t size() const { return labels.size(); }
    double count(std::size_t t, std::size_t p) const { return counts[t * size() + p]; }
    /// Row-normalized rates.
    std::vector<double> rates() const;
    double accuracy() const;
};

struct LdaOptions {
    std::size_t folds = 5;
    std::size_t repeats = 100;
    std::uint64_t seed = 0;
    /// Shrinkage toward the scaled identity.
    double shrinkage = 1e-3;
    std::size_t jobs = 1;
};

/// Repeated stratified K-fold evaluation of a shrinkage linear discriminant.
/// features: samples x dims row-major; labels in [0, class_names.size()).
ConfusionMatrix lda_confusion(std::span<const double> features, std::size_t dims, std::span<const std::size_t> labels,
                              const std::vector<std::string>& class_names, const LdaOptions& options = {});

/// Fitted discriminant, exposed for testing.
class ShrinkageLda {
public:
    ShrinkageLda(std::span<const double> features, std::size_t dims, std::span<const std::size_t> labels,
                 std::size_t classes, double shrinkage);
    std::size_t predict(std::span<const double> x) const;

private:
    std::size_t dims_, classes_;
    std::vector<double> coef_;       // classes x dims
    std::vector<double> intercept_;  // classes
};

}  // namespace augsens
