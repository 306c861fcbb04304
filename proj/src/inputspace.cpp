#include "augsens/inputspace.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "augsens/error.hpp"

namespace augsens {

std::string to_string(Scheme scheme) {
    return scheme == Scheme::Independent ? "scheme1" : "scheme2";
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "scheme1" || s == "scheme1-independent" || s == "independent") return Scheme::Independent;
    if (s == "scheme2" || s == "scheme2-spike-slab" || s == "spike-slab") return Scheme::SpikeSlab;
    throw DomainError("unknown sampling scheme '" + s + "'");
}

// ---- model ------------------------------------------------------------------

InputSpaceModel::InputSpaceModel(std::vector<VariableSpec> variables, std::vector<VariableGroup> groups,
                                 std::size_t n_transforms, std::size_t class_count, Scheme scheme)
    : variables_(std::move(variables)),
      groups_(std::move(groups)),
      n_transforms_(n_transforms),
      class_count_(class_count),
      scheme_(scheme) {
    validate();
}

InputSpaceModel InputSpaceModel::generic(std::vector<VariableSpec> variables, std::vector<VariableGroup> groups) {
    if (groups.empty()) {
        for (std::size_t i = 0; i < variables.size(); ++i) groups.push_back({variables[i].name, {i}});
    }
    InputSpaceModel m;
    m.variables_ = std::move(variables);
    m.groups_ = std::move(groups);
    m.generic_ = true;
    m.validate();
    return m;
}

namespace {

std::size_t categorical_cardinality(const VariableSpec& v) {
    if (const auto* c = std::get_if<Categorical>(&v.kind)) return c->cardinality;
    return 0;
}

bool in_support(const VariableSpec& v, double x) {
    return std::visit(
        [&](const auto& k) -> bool {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ContinuousUniform>) {
                return x >= k.lo && x <= k.hi;
            } else if constexpr (std::is_same_v<K, DiscreteUniform>) {
                return x >= static_cast<double>(k.lo) && x <= static_cast<double>(k.hi) && x == std::floor(x);
            } else if constexpr (std::is_same_v<K, Categorical>) {
                return x >= 0 && x < static_cast<double>(k.cardinality) && x == std::floor(x);
            } else {
                return x == 0.0 || x == 1.0;
            }
        },
        v.kind);
}

}  // namespace

void InputSpaceModel::validate() {
    if (variables_.empty()) throw DomainError("input space has no variables");
    for (const auto& v : variables_) {
        std::visit(
            [&](const auto& k) {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, ContinuousUniform>) {
                    if (!(k.lo < k.hi)) throw DomainError("variable " + v.name + ": continuous bounds need lo < hi");
                } else if constexpr (std::is_same_v<K, DiscreteUniform>) {
                    if (!(k.lo <= k.hi)) throw DomainError("variable " + v.name + ": discrete bounds need lo <= hi");
                } else if constexpr (std::is_same_v<K, Categorical>) {
                    const std::size_t min_k = v.role == VariableRole::Permutation ? 1 : 2;
                    if (k.cardinality < min_k) throw DomainError("variable " + v.name + ": categorical needs K >= 2");
                } else {
                    if (!(k.threshold > 0.0 && k.threshold < 1.0)) {
                        throw DomainError("variable " + v.name + ": switch threshold must lie in (0, 1)");
                    }
                }
            },
            v.kind);
        // Parameters may default to a point mass outside the slab (e.g. an empty erase rectangle).
        if (v.role != VariableRole::Parameter && !in_support(v, v.default_value)) {
            throw DomainError("variable " + v.name + ": default value outside support");
        }
        if (!generic_ && v.transform >= static_cast<int>(n_transforms_)) {
            throw DomainError("variable " + v.name + ": transform index out of range");
        }
    }

    // groups partition the variables
    std::vector<int> owner(variables_.size(), -1);
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (groups_[g].members.empty()) throw DomainError("group " + groups_[g].name + " is empty");
        for (std::size_t m : groups_[g].members) {
            if (m >= variables_.size()) throw DomainError("group " + groups_[g].name + " references unknown variable");
            if (owner[m] != -1) throw DomainError("variable " + variables_[m].name + " belongs to two groups");
            owner[m] = static_cast<int>(g);
        }
    }
    for (std::size_t i = 0; i < owner.size(); ++i) {
        if (owner[i] == -1) throw DomainError("variable " + variables_[i].name + " belongs to no group");
    }
    group_of_.assign(owner.begin(), owner.end());

    if (generic_) return;

    auto count_role = [&](VariableRole role) {
        return std::count_if(variables_.begin(), variables_.end(), [&](const VariableSpec& v) { return v.role == role; });
    };
    const auto expect_aux = [&](VariableRole role, std::size_t cardinality, const char* label) {
        if (count_role(role) != 1) throw DomainError(std::string("input space needs exactly one ") + label + " variable");
        const auto& v = variables_[static_cast<std::size_t>(role_index(role))];
        if (categorical_cardinality(v) != cardinality) {
            throw DomainError(std::string(label) + " variable must be categorical of cardinality " +
                              std::to_string(cardinality));
        }
        if (groups_[group_of_[static_cast<std::size_t>(role_index(role))]].members.size() != 1) {
            throw DomainError(std::string(label) + " variable must form a singleton group");
        }
    };
    expect_aux(VariableRole::Class, class_count_, "class");
    expect_aux(VariableRole::Partition, 2, "partition");
    expect_aux(VariableRole::Permutation, static_cast<std::size_t>(factorial(n_transforms_)), "permutation");

    std::vector<int> switches(n_transforms_, 0);
    for (const auto& v : variables_) {
        if (v.role == VariableRole::Switch) {
            if (v.transform < 0) throw DomainError("switch " + v.name + " has no transform");
            ++switches[static_cast<std::size_t>(v.transform)];
        }
        if (v.role == VariableRole::Parameter || v.role == VariableRole::Apply || v.role == VariableRole::Switch) {
            if (v.transform < 0) throw DomainError("variable " + v.name + " must belong to a transform");
        }
    }
    for (std::size_t t = 0; t < n_transforms_; ++t) {
        if (scheme_ == Scheme::Independent && switches[t] != 0) {
            throw DomainError("independent scheme may not contain switch variables");
        }
        if (scheme_ == Scheme::SpikeSlab && switches[t] != 1) {
            throw DomainError("spike-and-slab scheme needs exactly one switch per transform");
        }
    }
    // transform variables are grouped by transform
    for (const auto& g : groups_) {
        std::set<int> owners;
        for (std::size_t m : g.members) owners.insert(variables_[m].transform);
        if (owners.size() != 1) throw DomainError("group " + g.name + " mixes variables of different transforms");
    }
}

int InputSpaceModel::role_index(VariableRole role) const {
    for (std::size_t i = 0; i < variables_.size(); ++i) {
        if (variables_[i].role == role) return static_cast<int>(i);
    }
    return -1;
}

std::size_t InputSpaceModel::group_index(const std::string& name) const {
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (groups_[g].name == name) return g;
    }
    throw DomainError("no group named '" + name + "'");
}

std::vector<std::string> InputSpaceModel::group_names() const {
    std::vector<std::string> out;
    for (const auto& g : groups_) out.push_back(g.name);
    return out;
}

// ---- permutations -----------------------------------------------------------

std::uint64_t factorial(std::size_t d) {
    if (d > 20) throw DomainError("factorial overflows 64 bits for d = " + std::to_string(d));
    std::uint64_t f = 1;
    for (std::size_t i = 2; i <= d; ++i) f *= i;
    return f;
}

std::vector<std::size_t> permutation_from_index(std::uint64_t index, std::size_t d) {
    if (index >= factorial(d)) throw DomainError("permutation index out of range");
    std::vector<std::size_t> pool(d);
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<std::size_t> perm;
    perm.reserve(d);
    for (std::size_t i = d; i > 0; --i) {
        const std::uint64_t f = factorial(i - 1);
        const auto digit = static_cast<std::size_t>(index / f);
        index %= f;
        perm.push_back(pool[digit]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(digit));
    }
    return perm;
}

std::uint64_t permutation_index(std::span<const std::size_t> perm) {
    const std::size_t d = perm.size();
    std::uint64_t index = 0;
    for (std::size_t i = 0; i < d; ++i) {
        std::size_t smaller = 0;
        for (std::size_t j = i + 1; j < d; ++j) {
            if (perm[j] < perm[i]) ++smaller;
        }
        index += smaller * factorial(d - 1 - i);
    }
    return index;
}

// ---- Sobol sequence ----------------------------------------------------------

namespace {

struct DirectionRow {
    std::uint32_t poly;
    std::array<std::uint32_t, 13> m;
};

constexpr DirectionRow kDirections[] = {
#include "sobol_directions.inc"
};
static_assert(std::size(kDirections) == kSobolMaxDimension);

constexpr int kBits = 32;

const std::vector<std::array<std::uint32_t, kBits>>& direction_table() {
    static const auto table = [] {
        std::vector<std::array<std::uint32_t, kBits>> v(kSobolMaxDimension);
        for (int k = 0; k < kBits; ++k) v[0][k] = 1u << (kBits - 1 - k);
        for (std::size_t d = 1; d < kSobolMaxDimension; ++d) {
            const std::uint32_t poly = kDirections[d].poly;
            const int s = static_cast<int>(std::bit_width(poly)) - 1;
            const std::uint32_t a = (poly >> 1) & ((1u << (s - 1)) - 1u);
            auto& dir = v[d];
            for (int k = 0; k < s && k < kBits; ++k) dir[k] = kDirections[d].m[k] << (kBits - 1 - k);
            for (int k = s; k < kBits; ++k) {
                std::uint32_t value = dir[k - s] ^ (dir[k - s] >> s);
                for (int j = 1; j < s; ++j) {
                    if ((a >> (s - 1 - j)) & 1u) value ^= dir[k - j];
                }
                dir[k] = value;
            }
        }
        return v;
    }();
    return table;
}

}  // namespace

std::vector<double> sobol_sequence(std::size_t dim, std::size_t n, std::size_t skip, std::uint64_t shift_seed) {
    if (dim < 1 || n < 1) throw DomainError("sobol_sequence needs dim >= 1 and n >= 1");
    if (dim > kSobolMaxDimension) {
        throw UnsupportedDimensionError("Sobol direction numbers cover at most " + std::to_string(kSobolMaxDimension) +
                                        " dimensions, requested " + std::to_string(dim));
    }
    if (static_cast<std::uint64_t>(skip) + n > (std::uint64_t{1} << kBits)) {
        throw DomainError("sobol_sequence exhausted: at most 2^32 points");
    }
    const auto& dir = direction_table();

    std::vector<std::uint32_t> shift(dim, 0);
    if (shift_seed != 0) {
        const Philox philox(shift_seed);
        for (std::size_t d = 0; d < dim; ++d) shift[d] = philox(stream_id(0x5eed, d), 0)[0];
    }

    // state for point `skip`: XOR of directions over the set bits of gray(skip)
    std::vector<std::uint32_t> x(dim, 0);
    const std::uint64_t gray = skip ^ (skip >> 1);
    for (int k = 0; k < kBits; ++k) {
        if ((gray >> k) & 1u) {
            for (std::size_t d = 0; d < dim; ++d) x[d] ^= dir[d][k];
        }
    }

    std::vector<double> out(n * dim);
    constexpr double scale = 1.0 / 4294967296.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) out[i * dim + d] = static_cast<double>(x[d] ^ shift[d]) * scale;
        const std::uint64_t idx = skip + i;
        const int c = std::countr_one(idx);  // position of the lowest zero bit
        if (c < kBits) {
            for (std::size_t d = 0; d < dim; ++d) x[d] ^= dir[d][c];
        }
    }
    return out;
}

// ---- decoding ----------------------------------------------------------------

double decode_variable(const VariableSpec& spec, double u) {
    return std::visit(
        [&](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ContinuousUniform>) {
                return k.lo + u * (k.hi - k.lo);
            } else if constexpr (std::is_same_v<K, DiscreteUniform>) {
                const double span = static_cast<double>(k.hi - k.lo + 1);
                const double step = std::min(std::floor(u * span), span - 1.0);
                return static_cast<double>(k.lo) + step;
            } else if constexpr (std::is_same_v<K, Categorical>) {
                const double kk = static_cast<double>(k.cardinality);
                return std::min(std::floor(u * kk), kk - 1.0);
            } else {
                return u > k.threshold ? 1.0 : 0.0;
            }
        },
        spec.kind);
}

namespace {

void fill_auxiliary(const InputSpaceModel& space, std::span<const double> u, Realization& r) {
    if (space.is_generic()) return;
    const auto ci = static_cast<std::size_t>(space.role_index(VariableRole::Class));
    r.class_index = static_cast<std::size_t>(r.values[ci]);
    const double scaled = u[ci] * static_cast<double>(space.class_count());
    r.class_position = std::clamp(scaled - static_cast<double>(r.class_index), 0.0, std::nextafter(1.0, 0.0));
    r.partition = static_cast<std::size_t>(r.values[static_cast<std::size_t>(space.role_index(VariableRole::Partition))]);
    const auto pi = static_cast<std::size_t>(space.role_index(VariableRole::Permutation));
    r.order = permutation_from_index(static_cast<std::uint64_t>(r.values[pi]), space.n_transforms());
}

void check_row(const InputSpaceModel& space, std::span<const double> u) {
    if (u.size() != space.dimension()) {
        throw ShapeError("hypercube row has " + std::to_string(u.size()) + " coordinates, space has " +
                         std::to_string(space.dimension()) + " variables");
    }
}

}  // namespace

Realization scheme1_draw(const InputSpaceModel& space, std::span<const double> u) {
    check_row(space, u);
    Realization r;
    r.values.resize(space.dimension());
    for (std::size_t i = 0; i < space.dimension(); ++i) r.values[i] = decode_variable(space.variables()[i], u[i]);
    r.gates.assign(space.n_transforms(), 1);
    fill_auxiliary(space, u, r);
    return r;
}

Realization scheme2_decode(const InputSpaceModel& space, std::span<const double> u) {
    check_row(space, u);
    const auto& vars = space.variables();
    Realization r;
    r.values.resize(space.dimension());
    r.gates.assign(space.n_transforms(), 1);
    // gates first
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (vars[i].role == VariableRole::Switch) {
            r.values[i] = decode_variable(vars[i], u[i]);
            r.gates[static_cast<std::size_t>(vars[i].transform)] = static_cast<int>(r.values[i]);
        }
    }
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const auto& v = vars[i];
        if (v.role == VariableRole::Switch) continue;
        if (v.transform >= 0 && r.gates[static_cast<std::size_t>(v.transform)] == 0) {
            r.values[i] = v.default_value;
        } else {
            r.values[i] = decode_variable(v, u[i]);
        }
    }
    fill_auxiliary(space, u, r);
    return r;
}

Realization scheme2_draw(const InputSpaceModel& space, StreamEngine& stream) {
    const auto& vars = space.variables();
    std::vector<double> u(vars.size());
    // nominal switches are drawn first, then the remaining coordinates
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (vars[i].role == VariableRole::Switch) u[i] = stream.uniform();
    }
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (vars[i].role != VariableRole::Switch) u[i] = stream.uniform();
    }
    return scheme2_decode(space, u);
}

Realization decode(const InputSpaceModel& space, std::span<const double> u) {
    return space.scheme() == Scheme::Independent ? scheme1_draw(space, u) : scheme2_decode(space, u);
}

// ---- plans ----------------------------------------------------------------------

SamplePlan saltelli_plan(const InputSpaceModel& space, std::size_t n_base, std::uint64_t seed) {
    if (n_base == 0 || !std::has_single_bit(n_base)) {
        throw InvalidBudgetError("Saltelli base sample count must be a power of 2, got " + std::to_string(n_base));
    }
    if (space.scheme() != Scheme::Independent) {
        throw DomainError("Saltelli designs need the independent input-space scheme");
    }
    const std::size_t k = space.dimension();
    const std::size_t g = space.group_count();

    SamplePlan plan;
    plan.design = Design::Saltelli;
    plan.seed = seed;
    plan.dim = k;
    plan.groups = g;
    plan.n_base = n_base;
    plan.budget = budget(SaltelliBudget{n_base, g});
    plan.rows.resize(plan.budget * k);

    const auto base = sobol_sequence(2 * k, n_base, n_base, seed);
    std::vector<char> in_group(k);
    for (std::size_t j = 0; j < n_base; ++j) {
        const double* a = base.data() + j * 2 * k;
        const double* b = a + k;
        auto put = [&](std::size_t row, const double* src) { std::copy(src, src + k, plan.rows.begin() + row * k); };
        put(plan.row_a(j), a);
        put(plan.row_b(j), b);
        for (std::size_t gi = 0; gi < g; ++gi) {
            std::fill(in_group.begin(), in_group.end(), 0);
            for (std::size_t m : space.groups()[gi].members) in_group[m] = 1;
            double* ab = plan.rows.data() + plan.row_ab(j, gi) * k;
            double* ba = plan.rows.data() + plan.row_ba(j, gi) * k;
            for (std::size_t c = 0; c < k; ++c) {
                ab[c] = in_group[c] ? b[c] : a[c];
                ba[c] = in_group[c] ? a[c] : b[c];
            }
        }
    }
    return plan;
}

SamplePlan shapley_plan(const InputSpaceModel& space, std::size_t n_perm, std::size_t n_outer, std::size_t n_inner,
                        std::uint64_t seed) {
    if (n_inner < 2) throw VarianceUndefinedError("conditional variance needs at least 2 inner draws");
    if (n_perm < 1 || n_outer < 1) throw InvalidBudgetError("Shapley design needs n_perm >= 1 and n_outer >= 1");
    const std::size_t g = space.group_count();
    const std::size_t k = space.dimension();

    SamplePlan plan;
    plan.design = Design::Shapley;
    plan.seed = seed;
    plan.dim = k;
    plan.groups = g;
    plan.n_outer = n_outer;
    plan.n_inner = n_inner;

    const bool enumerate = g <= 20 && n_perm >= factorial(g);
    if (enumerate) {
        const std::uint64_t total = factorial(g);
        for (std::uint64_t i = 0; i < total; ++i) plan.permutations.push_back(permutation_from_index(i, g));
    } else {
        for (std::size_t p = 0; p < n_perm; ++p) {
            StreamEngine rng(seed, stream_id(0x9e7, p));
            std::vector<std::size_t> perm(g);
            std::iota(perm.begin(), perm.end(), 0);
            for (std::size_t i = g; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
            plan.permutations.push_back(std::move(perm));
        }
    }
    const std::size_t perms = plan.permutations.size();
    plan.budget = budget(ShapleyBudget{perms, g, n_outer, n_inner});
    plan.rows.resize(plan.budget * k);

    const Philox philox(seed);
    std::vector<char> in_prefix(k);
    for (std::size_t p = 0; p < perms; ++p) {
        std::fill(in_prefix.begin(), in_prefix.end(), 0);
        for (std::size_t j = 0; j < g; ++j) {
            for (std::size_t m : space.groups()[plan.permutations[p][j]].members) in_prefix[m] = 1;
            for (std::size_t l = 0; l < n_outer; ++l) {
                const std::uint64_t outer_stream = stream_id(0x0c7e, p, j, l);
                for (std::size_t i = 0; i < n_inner; ++i) {
                    const std::uint64_t inner_stream = stream_id(0x1a7e, p, j, l * n_inner + i);
                    double* row = plan.rows.data() + plan.row_shapley(p, j, l, i) * k;
                    for (std::size_t c = 0; c < k; ++c) {
                        row[c] = in_prefix[c] ? philox.uniform(inner_stream, c) : philox.uniform(outer_stream, c);
                    }
                }
            }
        }
    }
    return plan;
}

// ---- budgets ---------------------------------------------------------------------

std::size_t budget(const BudgetParams& params) {
    return std::visit(
        [](const auto& p) -> std::size_t {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, SaltelliBudget>) {
                return p.n_base * (2 * p.groups + 2);
            } else if constexpr (std::is_same_v<P, ShapleyBudget>) {
                return p.n_perm * p.groups * p.n_outer * p.n_inner;
            } else {
                return (1 + p.n_aug + p.m_inner * p.n_aug_theta) * p.per_class * p.n_classes;
            }
        },
        params);
}

}  // namespace augsens
