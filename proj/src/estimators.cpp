#include "augsens/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "augsens/error.hpp"
#include "augsens/parallel.hpp"

namespace augsens {

std::string to_string(SensitivityKind kind) {
    switch (kind) {
        case SensitivityKind::SobolFirst: return "sobol-first";
        case SensitivityKind::SobolTotal: return "sobol-total";
        case SensitivityKind::Shapley: return "shapley";
    }
    return "?";
}

SensitivityKind sensitivity_kind_from_string(const std::string& s) {
    if (s == "sobol-first") return SensitivityKind::SobolFirst;
    if (s == "sobol-total") return SensitivityKind::SobolTotal;
    if (s == "shapley") return SensitivityKind::Shapley;
    throw DomainError("unknown sensitivity kind '" + s + "'");
}

bool DeadUnitRule::is_dead(double variance, double mean) const {
    const double floor = relative * mean;
    return !(variance > absolute + floor * floor);
}

namespace {

// Units are split in fixed chunks; every chunk touches only its own slots.
template <typename Body>
void for_units(std::size_t units, std::size_t jobs, Body&& body) {
    constexpr std::size_t kChunk = 1024;
    const std::size_t chunks = (units + kChunk - 1) / kChunk;
    parallel_for(chunks, jobs, [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(units, begin + kChunk);
        for (std::size_t u = begin; u < end; ++u) body(u);
    });
}

}  // namespace

// ---- Saltelli ---------------------------------------------------------------------------------

SaltelliAccumulator::SaltelliAccumulator(const SamplePlan& plan, std::size_t units, std::size_t jobs)
    : units_(units), groups_(plan.groups), n_base_(plan.n_base), jobs_(jobs) {
    if (plan.design != Design::Saltelli) throw DomainError("sobol estimation needs a Saltelli plan");
    if (units == 0) throw ShapeError("no output units");
    shift_.assign(units, 0.0);
    sum_.resize(units);
    sum_sq_.resize(units);
    cross_first_.resize(groups_ * units);
    delta_.resize(groups_ * units);
    sq_total_.resize(groups_ * units);
    moved_.assign(groups_, 0);
}

void SaltelliAccumulator::add_block(std::span<const double> block) {
    const std::size_t rows = 2 * groups_ + 2;
    if (block.size() != rows * units_) {
        throw ShapeError("Saltelli block needs " + std::to_string(rows) + " x " + std::to_string(units_) + " values");
    }
    if (blocks_ >= n_base_) throw InvalidBudgetError("more Saltelli blocks than the plan holds");
    const double* A = block.data();
    const double* B = block.data() + (rows - 1) * units_;
    if (blocks_ == 0) std::copy(A, A + units_, shift_.begin());
    for (std::size_t g = 0; g < groups_; ++g) {
        if (moved_[g]) continue;
        const double* AB = block.data() + (1 + g) * units_;
        const double* BA = block.data() + (1 + groups_ + g) * units_;
        for (std::size_t u = 0; u < units_ && !moved_[g]; ++u) {
            if (AB[u] != A[u] || BA[u] != B[u]) moved_[g] = 1;
        }
    }
    for_units(units_, jobs_, [&](std::size_t u) {
        const long double ya = A[u] - shift_[u];
        const long double yb = B[u] - shift_[u];
        sum_[u].add(ya);
        sum_[u].add(yb);
        sum_sq_[u].add(ya * ya);
        sum_sq_[u].add(yb * yb);
        for (std::size_t g = 0; g < groups_; ++g) {
            const long double yab = block[(1 + g) * units_ + u] - shift_[u];
            const long double yba = block[(1 + groups_ + g) * units_ + u] - shift_[u];
            const std::size_t k = g * units_ + u;
            cross_first_[k].add(yb * (yab - ya) + ya * (yba - yb));
            delta_[k].add((yab - ya) + (yba - yb));
            sq_total_[k].add((ya - yab) * (ya - yab) + (yb - yba) * (yb - yba));
        }
    });
    ++blocks_;
}

SobolEstimate SaltelliAccumulator::finish(const DeadUnitRule& rule) const {
    if (blocks_ != n_base_) {
        throw InvalidBudgetError("Saltelli plan incomplete: " + std::to_string(blocks_) + " of " +
                                 std::to_string(n_base_) + " blocks");
    }
    SobolEstimate est;
    est.units = units_;
    est.groups = groups_;
    est.first.assign(groups_ * units_, 0.0);
    est.total.assign(groups_ * units_, 0.0);
    est.mean.assign(units_, 0.0);
    est.variance.assign(units_, 0.0);
    est.dead.assign(units_, 0);
    est.group_inert.resize(groups_);
    for (std::size_t g = 0; g < groups_; ++g) est.group_inert[g] = moved_[g] ? 0 : 1;
    const auto n = static_cast<long double>(blocks_);
    for_units(units_, jobs_, [&](std::size_t u) {
        const long double m = sum_[u].value() / (2 * n);
        const long double var = std::max(0.0L, sum_sq_[u].value() / (2 * n) - m * m);
        est.mean[u] = static_cast<double>(m + shift_[u]);
        est.variance[u] = static_cast<double>(var);
        if (rule.is_dead(est.variance[u], est.mean[u])) {
            est.dead[u] = 1;
            return;
        }
        for (std::size_t g = 0; g < groups_; ++g) {
            const std::size_t k = g * units_ + u;
            const long double first = (cross_first_[k].value() - m * delta_[k].value()) / (2 * n) / var;
            const long double total = sq_total_[k].value() / (2 * n) / (2 * var);
            est.first[k] = static_cast<double>(first);
            est.total[k] = static_cast<double>(total);
        }
    });
    return est;
}

SobolEstimate sobol_estimate(const SamplePlan& plan, std::span<const double> outputs, std::size_t units,
                             const DeadUnitRule& rule, std::size_t jobs) {
    if (outputs.size() != plan.budget * units) {
        throw ShapeError("evaluated plan needs " + std::to_string(plan.budget) + " rows of " + std::to_string(units) +
                         " units");
    }
    SaltelliAccumulator acc(plan, units, jobs);
    const std::size_t block = plan.block_size() * units;
    for (std::size_t j = 0; j < plan.n_base; ++j) acc.add_block(outputs.subspan(j * block, block));
    return acc.finish(rule);
}

// ---- Shapley -------------------------------------------------------------------------------------

namespace {

constexpr std::size_t kPooledLimit = std::size_t{1} << 23;  // set x unit slots

std::uint64_t prefix_mask(const std::vector<std::size_t>& perm, std::size_t len) {
    std::uint64_t m = 0;
    for (std::size_t i = 0; i < len; ++i) m |= std::uint64_t{1} << perm[i];
    return m;
}

}  // namespace

ShapleyAccumulator::ShapleyAccumulator(const SamplePlan& plan, std::size_t units, std::size_t jobs)
    : perms_(plan.permutations),
      n_outer_(plan.n_outer),
      n_inner_(plan.n_inner),
      units_(units),
      groups_(plan.groups),
      jobs_(jobs) {
    if (plan.design != Design::Shapley) throw DomainError("Shapley estimation needs a Shapley plan");
    if (n_inner_ < 2) throw VarianceUndefinedError("conditional variance needs at least 2 inner draws");
    if (units == 0) throw ShapeError("no output units");
    const bool enumerated = groups_ <= 20 && perms_.size() == factorial(groups_);
    pooled_ = enumerated && groups_ < 32 && (std::size_t{1} << groups_) * units <= kPooledLimit;
    shift_.assign(units, 0.0);
    full_sum_.resize(units);
    full_sq_.resize(units);
    prefix_cost_.resize(groups_ * units);
    if (pooled_) {
        set_cost_.resize((std::size_t{1} << groups_) * units);
        set_count_.assign(std::size_t{1} << groups_, 0);
    } else {
        value_sum_.resize(groups_ * units);
        last_count_.assign(groups_, 0);
    }
}

void ShapleyAccumulator::add_cell(std::span<const double> rows) {
    if (rows.size() != n_inner_ * units_) {
        throw ShapeError("Shapley cell needs " + std::to_string(n_inner_) + " x " + std::to_string(units_) + " values");
    }
    const std::size_t per_perm = groups_ * n_outer_;
    if (cells_ >= perms_.size() * per_perm) throw InvalidBudgetError("more Shapley cells than the plan holds");
    if (cells_ == 0) std::copy(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(units_), shift_.begin());
    const std::size_t prefix = (cells_ % per_perm) / n_outer_;
    const bool full = prefix + 1 == groups_;
    const auto n = static_cast<long double>(n_inner_);
    for_units(units_, jobs_, [&](std::size_t u) {
        long double s = 0, ss = 0;
        for (std::size_t i = 0; i < n_inner_; ++i) {
            const long double y = rows[i * units_ + u] - shift_[u];
            s += y;
            ss += y * y;
            if (full) {
                full_sum_[u].add(y);
                full_sq_[u].add(y * y);
            }
        }
        if (!full) {
            const long double m = s / n;
            long double dev = 0;
            for (std::size_t i = 0; i < n_inner_; ++i) {
                const long double d = rows[i * units_ + u] - shift_[u] - m;
                dev += d * d;
            }
            prefix_cost_[prefix * units_ + u].add(dev / (n - 1));
        }
    });
    if (full) full_count_ += n_inner_;
    ++cells_;
    if (cells_ % per_perm == 0) close_permutation();
}

void ShapleyAccumulator::close_permutation() {
    const auto& perm = perms_[cells_ / (groups_ * n_outer_) - 1];
    const auto outer = static_cast<long double>(n_outer_);
    if (pooled_) {
        for (std::size_t j = 0; j + 1 < groups_; ++j) ++set_count_[prefix_mask(perm, j + 1)];
    } else {
        ++last_count_[perm[groups_ - 1]];
    }
    for_units(units_, jobs_, [&](std::size_t u) {
        long double previous = 0;
        for (std::size_t j = 0; j + 1 < groups_; ++j) {
            const long double c = prefix_cost_[j * units_ + u].value() / outer;
            if (pooled_) {
                set_cost_[prefix_mask(perm, j + 1) * units_ + u].add(c);
            } else {
                value_sum_[perm[j] * units_ + u].add(c - previous);
            }
            previous = c;
        }
        // the last increment needs the full-set cost, known only at the end
        if (!pooled_) value_sum_[perm[groups_ - 1] * units_ + u].add(-previous);
        for (std::size_t j = 0; j < groups_; ++j) prefix_cost_[j * units_ + u] = CompensatedSum{};
    });
}

ShapleyEstimate ShapleyAccumulator::finish(const DeadUnitRule& rule) const {
    const std::size_t expected = perms_.size() * groups_ * n_outer_;
    if (cells_ != expected) {
        throw InvalidBudgetError("Shapley plan incomplete: " + std::to_string(cells_) + " of " +
                                 std::to_string(expected) + " cells");
    }
    ShapleyEstimate est;
    est.units = units_;
    est.groups = groups_;
    est.pooled = pooled_;
    est.values.assign(groups_ * units_, 0.0);
    est.total_variance.assign(units_, 0.0);
    est.mean.assign(units_, 0.0);
    est.dead.assign(units_, 0);
    const auto nf = static_cast<long double>(full_count_);
    const auto n_perm = static_cast<long double>(perms_.size());

    // subset weights |S|! (g - |S| - 1)! / g! by subset size
    std::vector<long double> weight(groups_, 0.0L);
    if (pooled_) {
        for (std::size_t k = 0; k < groups_; ++k) {
            weight[k] = static_cast<long double>(factorial(k)) * static_cast<long double>(factorial(groups_ - k - 1)) /
                        static_cast<long double>(factorial(groups_));
        }
    }
    const std::uint64_t all = groups_ >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << groups_) - 1;

    for_units(units_, jobs_, [&](std::size_t u) {
        const long double m = full_sum_[u].value() / nf;
        const long double var = std::max(0.0L, (full_sq_[u].value() - nf * m * m) / (nf - 1));
        est.mean[u] = static_cast<double>(m + shift_[u]);
        est.total_variance[u] = static_cast<double>(var);
        if (rule.is_dead(est.total_variance[u], est.mean[u])) {
            est.dead[u] = 1;
            return;
        }
        if (pooled_) {
            auto cost = [&](std::uint64_t set) -> long double {
                if (set == 0) return 0.0L;
                if (set == all) return var;
                return set_cost_[set * units_ + u].value() / static_cast<long double>(set_count_[set]);
            };
            for (std::size_t i = 0; i < groups_; ++i) {
                const std::uint64_t bit = std::uint64_t{1} << i;
                long double v = 0;
                for (std::uint64_t s = 0; s <= all; ++s) {
                    if (s & bit) continue;
                    v += weight[static_cast<std::size_t>(std::popcount(s))] * (cost(s | bit) - cost(s));
                }
                est.values[i * units_ + u] = static_cast<double>(v);
            }
        } else {
            for (std::size_t i = 0; i < groups_; ++i) {
                const long double v =
                    (value_sum_[i * units_ + u].value() + static_cast<long double>(last_count_[i]) * var) / n_perm;
                est.values[i * units_ + u] = static_cast<double>(v);
            }
        }
    });
    return est;
}

ShapleyEstimate shapley_estimate(const SamplePlan& plan, std::span<const double> outputs, std::size_t units,
                                 const DeadUnitRule& rule, std::size_t jobs) {
    if (outputs.size() != plan.budget * units) {
        throw ShapeError("evaluated plan needs " + std::to_string(plan.budget) + " rows of " + std::to_string(units) +
                         " units");
    }
    ShapleyAccumulator acc(plan, units, jobs);
    const std::size_t cell = plan.n_inner * units;
    for (std::size_t c = 0; c < plan.budget / plan.n_inner; ++c) acc.add_cell(outputs.subspan(c * cell, cell));
    return acc.finish(rule);
}

// ---- variance statistics ------------------------------------------------------------------------------

namespace {

VarianceStats make_stats(long double mean, long double m2, std::size_t n) {
    VarianceStats s;
    s.mean = static_cast<double>(mean);
    s.variance = static_cast<double>(m2 / static_cast<long double>(n - 1));
    if (s.mean != 0.0) s.cov = std::sqrt(s.variance) / std::abs(s.mean);
    return s;
}

}  // namespace

std::vector<VarianceStats> variance_cov(std::span<const double> samples, std::size_t n_samples, std::size_t units) {
    if (n_samples < 2) throw VarianceUndefinedError("variance needs at least 2 samples");
    if (samples.size() != n_samples * units) throw ShapeError("variance_cov: samples do not match n_samples x units");
    std::vector<VarianceStats> out(units);
    for (std::size_t u = 0; u < units; ++u) {
        long double mean = 0;
        for (std::size_t i = 0; i < n_samples; ++i) mean += samples[i * units + u];
        mean /= static_cast<long double>(n_samples);
        long double m2 = 0;
        for (std::size_t i = 0; i < n_samples; ++i) {
            const long double d = samples[i * units + u] - mean;
            m2 += d * d;
        }
        out[u] = make_stats(mean, m2, n_samples);
    }
    return out;
}

void MomentAccumulator::add(std::span<const double> sample) {
    if (sample.size() != mean_.size()) throw ShapeError("moment sample has the wrong unit count");
    ++n_;
    const auto n = static_cast<long double>(n_);
    for (std::size_t u = 0; u < sample.size(); ++u) {
        const long double d = sample[u] - mean_[u];
        mean_[u] += d / n;
        m2_[u] += d * (sample[u] - mean_[u]);
    }
}

std::vector<VarianceStats> MomentAccumulator::finish() const {
    if (n_ < 2) throw VarianceUndefinedError("variance needs at least 2 samples");
    std::vector<VarianceStats> out(mean_.size());
    for (std::size_t u = 0; u < mean_.size(); ++u) out[u] = make_stats(mean_[u], m2_[u], n_);
    return out;
}

// ---- maps ------------------------------------------------------------------------------------------

std::size_t layout_units(const std::vector<UnitLayout>& layout) {
    std::size_t n = 0;
    for (const auto& l : layout) n += shape_numel(l.shape);
    return n;
}

namespace {

std::vector<SensitivityMap> split(std::size_t units, std::size_t groups, const std::vector<UnitLayout>& layout,
                                  const std::vector<std::string>& names, SensitivityKind kind,
                                  const std::vector<double>& values, const std::vector<double>& total_variance,
                                  const std::vector<std::uint8_t>& dead) {
    if (layout_units(layout) != units) throw ShapeError("unit layout does not cover the estimate");
    if (names.size() != groups) throw ShapeError("group names do not match the estimate");
    std::vector<SensitivityMap> out;
    std::size_t offset = 0;
    for (const auto& l : layout) {
        const std::size_t n = shape_numel(l.shape);
        for (std::size_t g = 0; g < groups; ++g) {
            SensitivityMap m;
            m.checkpoint = l.checkpoint;
            m.kind = kind;
            m.group = names[g];
            std::vector<float> v(n);
            for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>(values[g * units + offset + i]);
            m.values = Tensor(l.shape, std::move(v));
            m.total_variance.assign(total_variance.begin() + static_cast<std::ptrdiff_t>(offset),
                                    total_variance.begin() + static_cast<std::ptrdiff_t>(offset + n));
            m.dead.assign(dead.begin() + static_cast<std::ptrdiff_t>(offset),
                          dead.begin() + static_cast<std::ptrdiff_t>(offset + n));
            out.push_back(std::move(m));
        }
        offset += n;
    }
    return out;
}

}  // namespace

std::vector<SensitivityMap> split_sobol(const SobolEstimate& est, const std::vector<UnitLayout>& layout,
                                        const std::vector<std::string>& group_names) {
    auto first = split(est.units, est.groups, layout, group_names, SensitivityKind::SobolFirst, est.first,
                       est.variance, est.dead);
    auto total = split(est.units, est.groups, layout, group_names, SensitivityKind::SobolTotal, est.total,
                       est.variance, est.dead);
    first.insert(first.end(), std::make_move_iterator(total.begin()), std::make_move_iterator(total.end()));
    return first;
}

std::vector<SensitivityMap> split_shapley(const ShapleyEstimate& est, const std::vector<UnitLayout>& layout,
                                          const std::vector<std::string>& group_names) {
    return split(est.units, est.groups, layout, group_names, SensitivityKind::Shapley, est.values,
                 est.total_variance, est.dead);
}

}  // namespace augsens
