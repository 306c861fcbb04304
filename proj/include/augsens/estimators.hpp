#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "augsens/inputspace.hpp"
#include "augsens/tensor.hpp"

namespace augsens {

enum class SensitivityKind { SobolFirst, SobolTotal, Shapley };

std::string to_string(SensitivityKind kind);
SensitivityKind sensitivity_kind_from_string(const std::string& s);

/// Units whose variance is at or below this (absolute, plus a float-resolution
/// term relative to the mean) are dead.
struct DeadUnitRule {
    double absolute = 1e-20;
    double relative = 1e-7;
    bool is_dead(double variance, double mean) const;
};

/// Compensated extended-precision running sum.
struct CompensatedSum {
    long double sum = 0.0L;
    long double carry = 0.0L;
    void add(long double v) {
        const long double t = sum + v;
        if ((sum >= 0 ? sum : -sum) >= (v >= 0 ? v : -v)) {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    long double value() const { return sum + carry; }
};

// ---- Sobol indices ------------------------------------------------------------------

struct SobolEstimate {
    std::size_t units = 0;
    std::size_t groups = 0;
    std::vector<double> first;     // groups x units
    std::vector<double> total;     // groups x units
    std::vector<double> mean;      // over A and B rows
    std::vector<double> variance;  // population variance over A and B rows
    std::vector<std::uint8_t> dead;
    /// Group whose cross rows never changed any unit (exactly zero effect).
    std::vector<std::uint8_t> group_inert;

    double first_at(std::size_t g, std::size_t u) const { return first[g * units + u]; }
    double total_at(std::size_t g, std::size_t u) const { return total[g * units + u]; }
};

/// Streaming Saltelli estimator. Blocks must be added in plan order.
///
/// First order: mean[(f_B - m)(f_ABg - f_A)] / V, total: mean[(f_A - f_ABg)^2] / 2V,
/// with m and V the mean and variance over A and B. Each is averaged with its
/// mirror built from the BA rows (roles of A and B swapped).
class SaltelliAccumulator {
public:
    SaltelliAccumulator(const SamplePlan& plan, std::size_t units, std::size_t jobs = 1);

    /// Outputs of the 2g+2 rows of one block, row-major (rows x units).
    void add_block(std::span<const double> block);
    std::size_t blocks_added() const { return blocks_; }

    SobolEstimate finish(const DeadUnitRule& rule = {}) const;

private:
    std::size_t units_, groups_, n_base_, jobs_;
    std::size_t blocks_ = 0;
    std::vector<double> shift_;  // per-unit reference value (first A row)
    std::vector<CompensatedSum> sum_, sum_sq_;
    std::vector<CompensatedSum> cross_first_;  // groups x units: (yB)(yABg - yA) + (yA)(yBAg - yB)
    std::vector<CompensatedSum> delta_;        // groups x units: (yABg - yA) + (yBAg - yB)
    std::vector<CompensatedSum> sq_total_;     // groups x units: (yA - yABg)^2 + (yB - yBAg)^2
    std::vector<std::uint8_t> moved_;          // groups: any cross row differed
};

/// Whole-matrix convenience: outputs are budget x units in plan row order.
SobolEstimate sobol_estimate(const SamplePlan& plan, std::span<const double> outputs, std::size_t units,
                             const DeadUnitRule& rule = {}, std::size_t jobs = 1);

// ---- Shapley effects ---------------------------------------------------------------

struct ShapleyEstimate {
    std::size_t units = 0;
    std::size_t groups = 0;
    std::vector<double> values;          // groups x units, unnormalized (variance units)
    std::vector<double> total_variance;  // per unit; equals the sum of values
    std::vector<double> mean;
    std::vector<std::uint8_t> dead;
    /// Prefix costs were pooled over every permutation sharing the prefix set.
    bool pooled = false;

    double value_at(std::size_t g, std::size_t u) const { return values[g * units + u]; }
};

/// Streaming permutation estimator with cost c(J) = E[Var(f | x outside J)].
///
/// The cost of the full set is the sample variance of the full-prefix rows,
/// which are independent joint draws; per permutation the increments
/// telescope, so the values sum to it exactly. When the plan enumerates every
/// permutation the cost of each prefix set is pooled over all permutations
/// that contain it as a prefix.
class ShapleyAccumulator {
public:
    ShapleyAccumulator(const SamplePlan& plan, std::size_t units, std::size_t jobs = 1);

    /// Outputs of the n_inner rows of one (permutation, prefix, outer) cell, in plan order.
    void add_cell(std::span<const double> inner_rows);
    std::size_t cells_added() const { return cells_; }

    ShapleyEstimate finish(const DeadUnitRule& rule = {}) const;

private:
    void close_permutation();

    std::vector<std::vector<std::size_t>> perms_;
    std::size_t n_outer_, n_inner_;
    std::size_t units_, groups_, jobs_;
    std::size_t cells_ = 0;
    bool pooled_;
    std::vector<double> shift_;
    // full-prefix moments
    std::vector<CompensatedSum> full_sum_, full_sq_;
    std::size_t full_count_ = 0;
    // current permutation: summed inner variances per prefix
    std::vector<CompensatedSum> prefix_cost_;  // groups x units
    // direct mode: increments of prefixes 0..g-2 already closed
    std::vector<CompensatedSum> value_sum_;  // groups x units
    std::vector<std::size_t> last_count_;    // groups: permutations ending with the group
    // pooled mode: cost sums per prefix set
    std::vector<CompensatedSum> set_cost_;  // 2^groups x units
    std::vector<std::size_t> set_count_;
};

ShapleyEstimate shapley_estimate(const SamplePlan& plan, std::span<const double> outputs, std::size_t units,
                                 const DeadUnitRule& rule = {}, std::size_t jobs = 1);

// ---- variance statistics -------------------------------------------------------------

struct VarianceStats {
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    /// std / |mean|; empty when the mean is zero.
    std::optional<double> cov;
};

/// Per-unit statistics of samples x units values.
std::vector<VarianceStats> variance_cov(std::span<const double> samples, std::size_t n_samples, std::size_t units);

/// Welford moments per unit, fed one sample at a time.
class MomentAccumulator {
public:
    explicit MomentAccumulator(std::size_t units) : mean_(units, 0.0L), m2_(units, 0.0L) {}
    void add(std::span<const double> sample);
    std::size_t count() const { return n_; }
    std::vector<VarianceStats> finish() const;

private:
    std::size_t n_ = 0;
    std::vector<long double> mean_, m2_;
};

// ---- maps ----------------------------------------------------------------------------------

/// Sensitivity values of one group over the units of one checkpoint.
struct SensitivityMap {
    std::string checkpoint;
    SensitivityKind kind = SensitivityKind::SobolFirst;
    std::string group;
    Tensor values;                      // checkpoint shape
    std::vector<double> total_variance;  // per unit
    std::vector<std::uint8_t> dead;      // per unit
};

struct UnitLayout {
    std::string checkpoint;
    Shape shape;
};

/// Total unit count of a layout.
std::size_t layout_units(const std::vector<UnitLayout>& layout);

std::vector<SensitivityMap> split_sobol(const SobolEstimate& est, const std::vector<UnitLayout>& layout,
                                        const std::vector<std::string>& group_names);
std::vector<SensitivityMap> split_shapley(const ShapleyEstimate& est, const std::vector<UnitLayout>& layout,
                                          const std::vector<std::string>& group_names);

}  // namespace augsens
