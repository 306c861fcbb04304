#include <gtest/gtest.h>

#include <algorithm>
#include <boost/random/sobol.hpp>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "augsens/augsets.hpp"
#include "augsens/error.hpp"
#include "augsens/inputspace.hpp"
#include "augsens/rng.hpp"

using namespace augsens;

namespace {

InputSpaceModel uniform_space(std::size_t d) {
    std::vector<VariableSpec> vars;
    for (std::size_t i = 0; i < d; ++i) vars.push_back({"x" + std::to_string(i), ContinuousUniform{0.0, 1.0}});
    return InputSpaceModel::generic(vars);
}

// Warnock's closed form of the L2-star discrepancy.
double l2_star(const std::vector<double>& pts, std::size_t dim) {
    const std::size_t n = pts.size() / dim;
    double a = 0, b = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double p = 1;
        for (std::size_t k = 0; k < dim; ++k) p *= 1 - pts[i * dim + k] * pts[i * dim + k];
        a += p;
        for (std::size_t j = 0; j < n; ++j) {
            double q = 1;
            for (std::size_t k = 0; k < dim; ++k) q *= 1 - std::max(pts[i * dim + k], pts[j * dim + k]);
            b += q;
        }
    }
    const double nn = static_cast<double>(n);
    return std::sqrt(std::pow(3.0, -static_cast<double>(dim)) - std::pow(2.0, 1.0 - static_cast<double>(dim)) * a / nn +
                     b / (nn * nn));
}

AugmentationSet a1(Scheme scheme = Scheme::Independent, double tau = 0.5) {
    AugmentationOptions o;
    o.scheme = scheme;
    o.switch_threshold = tau;
    return make_augmentation_set("A1", o);
}

}  // namespace

TEST(Sobol, PublishedPrefix) {
    const auto v = sobol_sequence(1, 3, 1);
    EXPECT_EQ(v, (std::vector<double>{0.5, 0.75, 0.25}));
    EXPECT_EQ(sobol_sequence(2, 1, 0), (std::vector<double>{0.0, 0.0}));
}

TEST(Sobol, MatchesBoostReference) {
    // Boost's generator starts after the origin and returns 64-bit integers.
    constexpr std::size_t dim = 64, n = 2048;
    boost::random::sobol ref(dim);
    const auto mine = sobol_sequence(dim, n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
            const double r = std::ldexp(static_cast<double>(ref()), -64);
            ASSERT_EQ(mine[i * dim + d], r) << "point " << i << " dim " << d;
        }
    }
}

TEST(Sobol, SkipIsConsistent) {
    const auto all = sobol_sequence(5, 300);
    const auto tail = sobol_sequence(5, 100, 200);
    EXPECT_TRUE(std::equal(tail.begin(), tail.end(), all.begin() + 200 * 5));
}

TEST(Sobol, BeatsPseudoRandomDiscrepancy) {
    const auto qmc = sobol_sequence(4, 256);
    StreamEngine rng(1, stream_id(1));
    std::vector<double> mc(qmc.size());
    for (double& u : mc) u = rng.uniform();
    EXPECT_LT(l2_star(qmc, 4), l2_star(mc, 4));
}

TEST(Sobol, DimensionGuard) {
    EXPECT_THROW(sobol_sequence(kSobolMaxDimension + 1, 4), UnsupportedDimensionError);
    EXPECT_THROW(sobol_sequence(0, 4), DomainError);
}

TEST(Permutation, LehmerBijectionExhaustive) {
    for (std::size_t d = 1; d <= 6; ++d) {
        std::set<std::vector<std::size_t>> seen;
        for (std::uint64_t i = 0; i < factorial(d); ++i) {
            const auto p = permutation_from_index(i, d);
            ASSERT_EQ(permutation_index(p), i);
            seen.insert(p);
        }
        EXPECT_EQ(seen.size(), factorial(d));
    }
}

TEST(Budget, ClosedForms) {
    EXPECT_EQ(budget(SaltelliBudget{1024, 8}), 18432u);
    EXPECT_EQ(budget(SaltelliBudget{2, 1}), 8u);
    EXPECT_EQ(budget(ShapleyBudget{100, 10, 10, 3}), 30000u);
    EXPECT_EQ(budget(ShapleyBudget{1, 7, 1, 1}), 7u);
    EXPECT_EQ(budget(ScreeningBudget{5, 3, 3, 2, 10}), 300u);
}

TEST(Saltelli, CrossMatricesMatchConstruction) {
    std::vector<VariableSpec> vars;
    for (int i = 0; i < 5; ++i) vars.push_back({"x" + std::to_string(i), ContinuousUniform{}});
    const auto space = InputSpaceModel::generic(vars, {{"a", {0, 1}}, {"b", {2}}, {"c", {3, 4}}});
    const auto plan = saltelli_plan(space, 8, 3);
    ASSERT_EQ(plan.budget, 8u * 8u);
    for (std::size_t j = 0; j < 8; ++j) {
        const auto a = plan.row(plan.row_a(j));
        const auto b = plan.row(plan.row_b(j));
        for (std::size_t g = 0; g < 3; ++g) {
            const auto ab = plan.row(plan.row_ab(j, g));
            const auto ba = plan.row(plan.row_ba(j, g));
            for (std::size_t c = 0; c < 5; ++c) {
                const bool in = space.group_of(c) == g;
                EXPECT_EQ(ab[c], in ? b[c] : a[c]);
                EXPECT_EQ(ba[c], in ? a[c] : b[c]);
            }
        }
    }
}

TEST(Saltelli, SingleGroupCrossIsB) {
    const auto plan = saltelli_plan(uniform_space(1), 2, 0);
    EXPECT_EQ(plan.budget, 8u);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(plan.row(plan.row_ab(j, 0))[0], plan.row(plan.row_b(j))[0]);
}

TEST(Saltelli, RejectsBadBudgets) {
    EXPECT_THROW(saltelli_plan(uniform_space(2), 12, 0), InvalidBudgetError);
    EXPECT_THROW(saltelli_plan(a1(Scheme::SpikeSlab).space, 8, 0), DomainError);
}

TEST(Saltelli, Reproducible) {
    EXPECT_EQ(saltelli_plan(a1().space, 16, 9).rows, saltelli_plan(a1().space, 16, 9).rows);
    EXPECT_NE(saltelli_plan(a1().space, 16, 9).rows, saltelli_plan(a1().space, 16, 10).rows);
}

TEST(Shapley, EnumeratesAllPermutations) {
    const auto plan = shapley_plan(uniform_space(3), 6, 2, 2, 0);
    std::set<std::vector<std::size_t>> perms(plan.permutations.begin(), plan.permutations.end());
    EXPECT_EQ(plan.permutations.size(), 6u);
    EXPECT_EQ(perms.size(), 6u);
    EXPECT_EQ(plan.budget, 6u * 3 * 2 * 2);
}

TEST(Shapley, PrefixColumnsVaryOnlyInsideCell) {
    const auto space = uniform_space(4);
    const auto plan = shapley_plan(space, 3, 2, 3, 5);
    for (std::size_t p = 0; p < plan.permutations.size(); ++p) {
        for (std::size_t j = 0; j < 4; ++j) {
            std::set<std::size_t> prefix(plan.permutations[p].begin(), plan.permutations[p].begin() + j + 1);
            for (std::size_t l = 0; l < 2; ++l) {
                const auto r0 = plan.row(plan.row_shapley(p, j, l, 0));
                const auto r1 = plan.row(plan.row_shapley(p, j, l, 1));
                for (std::size_t c = 0; c < 4; ++c) {
                    if (prefix.count(c)) {
                        EXPECT_NE(r0[c], r1[c]);
                    } else {
                        EXPECT_EQ(r0[c], r1[c]);
                    }
                }
            }
        }
    }
}

TEST(Shapley, Guards) {
    EXPECT_THROW(shapley_plan(uniform_space(2), 2, 2, 1, 0), VarianceUndefinedError);
    EXPECT_THROW(shapley_plan(uniform_space(2), 0, 2, 2, 0), InvalidBudgetError);
}

TEST(Decode, OriginAndUpperBoundary) {
    const auto set = a1();
    const std::vector<double> zero(set.space.dimension(), 0.0);
    const auto r = scheme1_draw(set.space, zero);
    for (std::size_t i = 0; i < set.space.dimension(); ++i) {
        const auto& v = set.space.variables()[i];
        if (const auto* c = std::get_if<ContinuousUniform>(&v.kind)) EXPECT_EQ(r.values[i], c->lo);
        if (const auto* k = std::get_if<DiscreteUniform>(&v.kind)) EXPECT_EQ(r.values[i], static_cast<double>(k->lo));
        if (std::holds_alternative<Categorical>(v.kind)) EXPECT_EQ(r.values[i], 0.0);
    }
    EXPECT_EQ(decode_variable({"k", Categorical{4}}, 1.0), 3.0);
    EXPECT_EQ(decode_variable({"k", Categorical{4}}, 0.9999), 3.0);
    EXPECT_THROW(scheme1_draw(set.space, std::vector<double>(2, 0.0)), ShapeError);
}

TEST(Decode, PermutationUniformity) {
    std::vector<VariableSpec> vars{{"sigma", Categorical{6}, 0.0, VariableRole::Permutation}};
    std::map<std::vector<std::size_t>, int> counts;
    const std::size_t n = 60000;
    StreamEngine rng(4, stream_id(2));
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        counts[permutation_from_index(static_cast<std::uint64_t>(decode_variable(vars[0], u)), 3)]++;
    }
    ASSERT_EQ(counts.size(), 6u);
    const double p = 1.0 / 6, sd = std::sqrt(n * p * (1 - p));
    for (const auto& [perm, c] : counts) EXPECT_NEAR(c, n * p, 3 * sd);
}

TEST(Decode, CategoricalMarginalsUniform) {
    const auto set = a1();
    const std::size_t n = 100000, dim = set.space.dimension();
    StreamEngine rng(8, stream_id(3));
    std::vector<std::map<int, int>> counts(dim);
    std::size_t train = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> u(dim);
        for (double& x : u) x = rng.uniform();
        const auto r = scheme1_draw(set.space, u);
        train += r.partition == 0;
        for (std::size_t v = 0; v < dim; ++v) {
            if (std::holds_alternative<Categorical>(set.space.variables()[v].kind)) counts[v][static_cast<int>(r.values[v])]++;
        }
    }
    EXPECT_NEAR(static_cast<double>(train) / n, 0.5, 0.01);
    for (std::size_t v = 0; v < dim; ++v) {
        const auto* cat = std::get_if<Categorical>(&set.space.variables()[v].kind);
        if (!cat) continue;
        const double p = 1.0 / static_cast<double>(cat->cardinality);
        const double sd = std::sqrt(n * p * (1 - p));
        for (std::size_t k = 0; k < cat->cardinality; ++k) EXPECT_NEAR(counts[v][static_cast<int>(k)], n * p, 3 * sd);
    }
}

TEST(Decode, ContinuousAffine) {
    VariableSpec v{"x", ContinuousUniform{-2.0, 6.0}};
    EXPECT_DOUBLE_EQ(decode_variable(v, 0.25), 0.0);
    EXPECT_DOUBLE_EQ(decode_variable(v, 1.0), 6.0);
}

TEST(SpaceModel, A1Structure) {
    const auto set = a1();
    const auto& vars = set.space.variables();
    auto count_role = [&](VariableRole role) {
        return std::count_if(vars.begin(), vars.end(), [&](const VariableSpec& v) { return v.role == role; });
    };
    EXPECT_EQ(count_role(VariableRole::Switch), 0);
    EXPECT_EQ(count_role(VariableRole::Class), 1);
    EXPECT_EQ(count_role(VariableRole::Partition), 1);
    EXPECT_EQ(count_role(VariableRole::Permutation), 1);
    const auto& perm = vars[static_cast<std::size_t>(set.space.role_index(VariableRole::Permutation))];
    EXPECT_EQ(std::get<Categorical>(perm.kind).cardinality, factorial(set.space.n_transforms()));
    const auto& cls = vars[static_cast<std::size_t>(set.space.role_index(VariableRole::Class))];
    EXPECT_EQ(std::get<Categorical>(cls.kind).cardinality, set.space.class_count());
    const auto& part = vars[static_cast<std::size_t>(set.space.role_index(VariableRole::Partition))];
    EXPECT_EQ(std::get<Categorical>(part.kind).cardinality, 2u);
    EXPECT_EQ(set.space.group_count(), 8u);

    const auto ss = a1(Scheme::SpikeSlab);
    const auto& vs = ss.space.variables();
    EXPECT_EQ(std::count_if(vs.begin(), vs.end(), [](const VariableSpec& v) { return v.role == VariableRole::Switch; }),
              static_cast<long>(ss.space.n_transforms()));
}

TEST(SpaceModel, RejectsBadSupports) {
    EXPECT_THROW(InputSpaceModel::generic({{"x", ContinuousUniform{1.0, 1.0}}}), DomainError);
    EXPECT_THROW(InputSpaceModel::generic({{"k", Categorical{1}}}), DomainError);
    EXPECT_THROW(InputSpaceModel::generic({{"s", Switch{1.0}}}), DomainError);
}

TEST(Scheme2, GateFrequencyAndPointMass) {
    for (double tau : {0.5, 0.8}) {
        const auto set = a1(Scheme::SpikeSlab, tau);
        const auto& vars = set.space.variables();
        const std::size_t n = 100000;
        std::vector<std::size_t> on(set.space.n_transforms(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            StreamEngine rng(5, stream_id(0x55, i));
            const auto r = scheme2_draw(set.space, rng);
            for (std::size_t t = 0; t < on.size(); ++t) on[t] += r.gates[t];
            for (std::size_t v = 0; v < vars.size(); ++v) {
                if (vars[v].role == VariableRole::Parameter && r.gates[static_cast<std::size_t>(vars[v].transform)] == 0) {
                    ASSERT_EQ(r.values[v], vars[v].default_value);
                }
            }
        }
        const double p = 1 - tau, sd = std::sqrt(n * p * (1 - p));
        for (std::size_t c : on) EXPECT_NEAR(static_cast<double>(c), n * p, 3 * sd);
    }
}

TEST(Scheme2, HighThresholdMostlyIdentity) {
    const auto set = a1(Scheme::SpikeSlab, 0.99);
    const std::size_t n = 20000;
    std::size_t all_off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        StreamEngine rng(6, stream_id(0x56, i));
        const auto r = scheme2_draw(set.space, rng);
        all_off += std::all_of(r.gates.begin(), r.gates.end(), [](int g) { return g == 0; });
    }
    const double expected = std::pow(0.99, static_cast<double>(set.space.n_transforms()));
    EXPECT_NEAR(static_cast<double>(all_off) / n, expected, 0.01);
    EXPECT_GE(std::pow(0.99, 5.0), 0.95);
}
