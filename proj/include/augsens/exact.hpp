#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace augsens {

/// A function of independent, uniformly weighted discrete variables, tabulated
/// on the full grid (last variable fastest).
struct TabulatedFunction {
    std::vector<std::size_t> cardinalities;
    std::vector<double> values;

    std::size_t dimension() const { return cardinalities.size(); }
    std::size_t grid_size() const;
    /// Grid position of a multi-index.
    std::size_t flat_index(std::span<const std::size_t> index) const;
    std::vector<std::size_t> multi_index(std::size_t flat) const;

    static TabulatedFunction from(std::vector<std::size_t> cardinalities,
                                  const std::function<double(std::span<const std::size_t>)>& f);
};

/// Complete Hoeffding decomposition of a tabulated function.
struct Decomposition {
    std::size_t d = 0;
    double mean = 0.0;
    double variance = 0.0;
    /// True when the variance is zero (all indices are reported as 0).
    bool degenerate = false;
    /// Component f_alpha evaluated on the full grid, indexed by subset bitmask.
    std::vector<std::vector<double>> components;
    /// Partial variance V_alpha by subset bitmask (V_empty = 0).
    std::vector<double> partial_variance;

    /// Sum of V_beta over nonempty beta within the set, over V.
    double closed_index(std::uint64_t set) const;
    /// Sum of V_beta over beta meeting the set, over V.
    double total_index(std::uint64_t set) const;
    double first_order(std::size_t i) const { return closed_index(std::uint64_t{1} << i); }
    double total(std::size_t i) const { return total_index(std::uint64_t{1} << i); }
};

/// Guard: d <= 8 and at most 2^20 grid points, else RefusalError.
Decomposition exact_oracle(const TabulatedFunction& f);

enum class ShapleyCost {
    Closed,  // c(J) = Var(E[f | x_J])
    Total,   // c(J) = E[Var(f | x outside J)]
};

/// Exact cost of a variable subset by enumeration.
double exact_cost(const TabulatedFunction& f, std::uint64_t set, ShapleyCost cost);

/// |S|! (d - |S| - 1)! / d!
double shapley_weight(std::size_t d, std::size_t subset_size);

/// Shapley values by the weighted subset sum. Guard: d <= 10 and 2^20 grid points.
std::vector<double> subset_shapley_exact(const TabulatedFunction& f, ShapleyCost cost = ShapleyCost::Total);
/// Shapley values by averaging over all d! orderings. Guard: d <= 8 and 2^20 grid points.
std::vector<double> permutation_shapley_exact(const TabulatedFunction& f, ShapleyCost cost = ShapleyCost::Total);

}  // namespace augsens
