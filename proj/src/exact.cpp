#include "augsens/exact.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include "augsens/error.hpp"
#include "augsens/inputspace.hpp"

namespace augsens {

std::size_t TabulatedFunction::grid_size() const {
    return std::accumulate(cardinalities.begin(), cardinalities.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t TabulatedFunction::flat_index(std::span<const std::size_t> index) const {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < cardinalities.size(); ++i) flat = flat * cardinalities[i] + index[i];
    return flat;
}

std::vector<std::size_t> TabulatedFunction::multi_index(std::size_t flat) const {
    std::vector<std::size_t> idx(cardinalities.size());
    for (std::size_t i = cardinalities.size(); i-- > 0;) {
        idx[i] = flat % cardinalities[i];
        flat /= cardinalities[i];
    }
    return idx;
}

TabulatedFunction TabulatedFunction::from(std::vector<std::size_t> cardinalities,
                                          const std::function<double(std::span<const std::size_t>)>& f) {
    TabulatedFunction t{std::move(cardinalities), {}};
    t.values.resize(t.grid_size());
    for (std::size_t k = 0; k < t.values.size(); ++k) t.values[k] = f(t.multi_index(k));
    return t;
}

namespace {

void check(const TabulatedFunction& f, std::size_t max_d) {
    if (f.dimension() == 0) throw DomainError("tabulated function has no variables");
    if (f.dimension() > max_d) {
        throw RefusalError("exact enumeration refused for d = " + std::to_string(f.dimension()) + " (limit " +
                           std::to_string(max_d) + ")");
    }
    for (std::size_t k : f.cardinalities) {
        if (k == 0) throw DomainError("empty variable support");
    }
    if (f.grid_size() > (std::size_t{1} << 20)) throw RefusalError("exact enumeration refused: grid too large");
    if (f.values.size() != f.grid_size()) throw ShapeError("tabulated values do not cover the grid");
}

// E[f | x_set] on the full grid.
std::vector<double> conditional_mean(const TabulatedFunction& f, std::uint64_t set) {
    const std::size_t n = f.grid_size();
    std::vector<std::size_t> key(n);
    std::size_t keys = 1;
    for (std::size_t i = 0; i < f.dimension(); ++i) {
        if (set >> i & 1) keys *= f.cardinalities[i];
    }
    for (std::size_t k = 0; k < n; ++k) {
        const auto idx = f.multi_index(k);
        std::size_t key_k = 0;
        for (std::size_t i = 0; i < f.dimension(); ++i) {
            if (set >> i & 1) key_k = key_k * f.cardinalities[i] + idx[i];
        }
        key[k] = key_k;
    }
    std::vector<long double> sum(keys, 0.0L);
    std::vector<std::size_t> count(keys, 0);
    for (std::size_t k = 0; k < n; ++k) {
        sum[key[k]] += f.values[k];
        ++count[key[k]];
    }
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = static_cast<double>(sum[key[k]] / static_cast<long double>(count[key[k]]));
    return out;
}

long double mean_of_squares(const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += static_cast<long double>(x) * x;
    return s / static_cast<long double>(v.size());
}

std::vector<double> all_costs(const TabulatedFunction& f, ShapleyCost cost) {
    const std::size_t sets = std::size_t{1} << f.dimension();
    std::vector<double> c(sets);
    for (std::uint64_t s = 0; s < sets; ++s) c[s] = exact_cost(f, s, cost);
    return c;
}

}  // namespace

double Decomposition::closed_index(std::uint64_t set) const {
    if (degenerate) return 0.0;
    long double acc = 0;
    for (std::uint64_t b = 1; b < partial_variance.size(); ++b) {
        if ((b & ~set) == 0) acc += partial_variance[b];
    }
    return static_cast<double>(acc / variance);
}

double Decomposition::total_index(std::uint64_t set) const {
    if (degenerate) return 0.0;
    long double acc = 0;
    for (std::uint64_t b = 1; b < partial_variance.size(); ++b) {
        if (b & set) acc += partial_variance[b];
    }
    return static_cast<double>(acc / variance);
}

Decomposition exact_oracle(const TabulatedFunction& f) {
    check(f, 8);
    const std::size_t d = f.dimension();
    const std::size_t n = f.grid_size();
    const std::size_t sets = std::size_t{1} << d;
    Decomposition dec;
    dec.d = d;
    long double mean = 0;
    for (double v : f.values) mean += v;
    mean /= static_cast<long double>(n);
    dec.mean = static_cast<double>(mean);
    long double var = 0;
    for (double v : f.values) var += (v - mean) * (v - mean);
    dec.variance = static_cast<double>(var / static_cast<long double>(n));

    dec.components.assign(sets, std::vector<double>(n, 0.0));
    dec.partial_variance.assign(sets, 0.0);
    std::fill(dec.components[0].begin(), dec.components[0].end(), dec.mean);
    // subsets of a set are numerically smaller, so increasing order is a valid recursion order
    for (std::uint64_t a = 1; a < sets; ++a) {
        auto comp = conditional_mean(f, a);
        for (std::uint64_t b = (a - 1) & a;; b = (b - 1) & a) {
            const auto& fb = dec.components[b];
            for (std::size_t k = 0; k < n; ++k) comp[k] -= fb[k];
            if (b == 0) break;
        }
        dec.partial_variance[a] = static_cast<double>(mean_of_squares(comp));
        dec.components[a] = std::move(comp);
    }
    dec.degenerate = !(dec.variance > 0.0);
    return dec;
}

double exact_cost(const TabulatedFunction& f, std::uint64_t set, ShapleyCost cost) {
    check(f, 20);
    const std::uint64_t all = (std::uint64_t{1} << f.dimension()) - 1;
    set &= all;
    if (set == 0) return 0.0;
    long double mean = 0;
    for (double v : f.values) mean += v;
    mean /= static_cast<long double>(f.values.size());
    if (cost == ShapleyCost::Closed) {
        const auto cm = conditional_mean(f, set);
        return static_cast<double>(std::max(0.0L, mean_of_squares(cm) - mean * mean));
    }
    // E[Var(f | x_rest)] = E[f^2] - E[E[f | x_rest]^2]
    const auto cm = conditional_mean(f, all & ~set);
    return static_cast<double>(std::max(0.0L, mean_of_squares(f.values) - mean_of_squares(cm)));
}

double shapley_weight(std::size_t d, std::size_t subset_size) {
    if (subset_size >= d) throw DomainError("subset size must be below d");
    return static_cast<double>(static_cast<long double>(factorial(subset_size)) *
                               static_cast<long double>(factorial(d - subset_size - 1)) /
                               static_cast<long double>(factorial(d)));
}

std::vector<double> subset_shapley_exact(const TabulatedFunction& f, ShapleyCost cost) {
    check(f, 10);
    const std::size_t d = f.dimension();
    const auto c = all_costs(f, cost);
    std::vector<double> v(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        long double acc = 0;
        for (std::uint64_t s = 0; s < c.size(); ++s) {
            if (s & bit) continue;
            acc += shapley_weight(d, static_cast<std::size_t>(std::popcount(s))) * (static_cast<long double>(c[s | bit]) - c[s]);
        }
        v[i] = static_cast<double>(acc);
    }
    return v;
}

std::vector<double> permutation_shapley_exact(const TabulatedFunction& f, ShapleyCost cost) {
    check(f, 8);
    const std::size_t d = f.dimension();
    const auto c = all_costs(f, cost);
    std::vector<long double> acc(d, 0.0L);
    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t count = 0;
    do {
        std::uint64_t prefix = 0;
        for (std::size_t i : perm) {
            const std::uint64_t next = prefix | (std::uint64_t{1} << i);
            acc[i] += static_cast<long double>(c[next]) - c[prefix];
            prefix = next;
        }
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = static_cast<double>(acc[i] / static_cast<long double>(count));
    return v;
}

}  // namespace augsens
