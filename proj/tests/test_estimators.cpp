#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "augsens/error.hpp"
#include "augsens/estimators.hpp"
#include "augsens/exact.hpp"
#include "augsens/inputspace.hpp"
#include "test_util.hpp"

using namespace augsens;
using augsens::testing::random_table;

namespace {

using Model = std::function<void(std::span<const double> x, std::span<double> out)>;

std::vector<double> evaluate(const SamplePlan& plan, const InputSpaceModel& space, std::size_t units, const Model& f) {
    std::vector<double> out(plan.budget * units);
    std::vector<double> x(plan.dim);
    for (std::size_t r = 0; r < plan.budget; ++r) {
        const auto row = plan.row(r);
        for (std::size_t k = 0; k < plan.dim; ++k) x[k] = decode_variable(space.variables()[k], row[k]);
        f(x, std::span<double>(out.data() + r * units, units));
    }
    return out;
}

InputSpaceModel discrete_space(const std::vector<std::size_t>& cards) {
    std::vector<VariableSpec> vars;
    for (std::size_t i = 0; i < cards.size(); ++i) vars.push_back({"x" + std::to_string(i), Categorical{cards[i]}});
    return InputSpaceModel::generic(vars);
}

InputSpaceModel unit_space(std::size_t d) {
    std::vector<VariableSpec> vars;
    for (std::size_t i = 0; i < d; ++i) vars.push_back({"x" + std::to_string(i), ContinuousUniform{0.0, 1.0}});
    return InputSpaceModel::generic(vars);
}

Model table_model(const TabulatedFunction& t) {
    return [&t](std::span<const double> x, std::span<double> out) {
        std::vector<std::size_t> idx(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) idx[i] = static_cast<std::size_t>(x[i]);
        out[0] = t.values[t.flat_index(idx)];
    };
}

// Sobol g-function first-order indices from the product-form variance.
std::vector<double> g_function_indices(const std::vector<double>& a) {
    std::vector<double> vi;
    double prod = 1;
    for (double ai : a) {
        vi.push_back(1.0 / (3.0 * (1 + ai) * (1 + ai)));
        prod *= 1 + vi.back();
    }
    for (double& v : vi) v /= prod - 1;
    return vi;
}

}  // namespace

// ---- exact oracle ---------------------------------------------------------------------------

TEST(ExactOracle, DecompositionIdentities) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto t = random_table({2, 3, 2, 3}, s);
        const auto dec = exact_oracle(t);
        const double sum = std::accumulate(dec.partial_variance.begin(), dec.partial_variance.end(), 0.0);
        EXPECT_NEAR(sum, dec.variance, 1e-10);
        for (std::size_t a = 1; a < dec.components.size(); ++a) {
            const double m = std::accumulate(dec.components[a].begin(), dec.components[a].end(), 0.0) /
                             static_cast<double>(dec.components[a].size());
            EXPECT_NEAR(m, 0.0, 1e-10);
        }
        // residual f - sum f_alpha vanishes pointwise
        for (std::size_t p = 0; p < t.grid_size(); ++p) {
            double acc = dec.mean;
            for (std::size_t a = 1; a < dec.components.size(); ++a) acc += dec.components[a][p];
            EXPECT_NEAR(acc, t.values[p], 1e-10);
        }
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_LE(0.0, dec.first_order(i));
            EXPECT_LE(dec.first_order(i), dec.total(i));
            EXPECT_LE(dec.total(i), 1.0);
        }
    }
}

TEST(ExactOracle, ConstantIsDegenerate) {
    const auto t = TabulatedFunction::from({2, 2}, [](std::span<const std::size_t>) { return 3.0; });
    const auto dec = exact_oracle(t);
    EXPECT_TRUE(dec.degenerate);
    EXPECT_EQ(dec.variance, 0.0);
    EXPECT_EQ(dec.first_order(0), 0.0);
    EXPECT_EQ(dec.total(1), 0.0);
}

TEST(ExactOracle, PureInteraction) {
    const auto t = TabulatedFunction::from({2, 2}, [](std::span<const std::size_t> i) {
        return (i[0] ? 1.0 : -1.0) * (i[1] ? 1.0 : -1.0);
    });
    const auto dec = exact_oracle(t);
    EXPECT_NEAR(dec.first_order(0), 0.0, 1e-12);
    EXPECT_NEAR(dec.first_order(1), 0.0, 1e-12);
    EXPECT_NEAR(dec.total(0), 1.0, 1e-12);
    EXPECT_NEAR(dec.total(1), 1.0, 1e-12);
}

// ---- exact Shapley ----------------------------------------------------------------------------

TEST(ExactShapley, WeightsSumToOne) {
    for (std::size_t d = 1; d <= 6; ++d) {
        double s = 0;
        for (std::size_t k = 0; k < d; ++k) {
            double binom = 1;
            for (std::size_t j = 0; j < k; ++j) binom = binom * static_cast<double>(d - 1 - j) / static_cast<double>(j + 1);
            s += binom * shapley_weight(d, k);
        }
        EXPECT_NEAR(s, 1.0, 1e-12) << d;
    }
}

TEST(ExactShapley, SubsetEqualsPermutation) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto t = random_table({3, 2, 3, 2}, 100 + s);
        for (ShapleyCost c : {ShapleyCost::Total, ShapleyCost::Closed}) {
            const auto a = subset_shapley_exact(t, c);
            const auto b = permutation_shapley_exact(t, c);
            for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
        }
        // both costs give the same effects for independent inputs, summing to V
        const auto tot = subset_shapley_exact(t, ShapleyCost::Total);
        const auto clo = subset_shapley_exact(t, ShapleyCost::Closed);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(tot[i], clo[i], 1e-10);
        EXPECT_NEAR(std::accumulate(tot.begin(), tot.end(), 0.0), exact_oracle(t).variance, 1e-10);
        EXPECT_EQ(exact_cost(t, 0, ShapleyCost::Total), 0.0);
        EXPECT_EQ(exact_cost(t, 0, ShapleyCost::Closed), 0.0);
    }
}

TEST(ExactShapley, CombinatorialGuard) {
    const auto t = TabulatedFunction::from(std::vector<std::size_t>(9, 2), [](std::span<const std::size_t>) { return 1.0; });
    EXPECT_THROW(exact_oracle(t), RefusalError);
}

// ---- Monte-Carlo Sobol --------------------------------------------------------------------------

TEST(Sobol, MatchesOracleOnTables) {
    for (std::uint64_t s = 0; s < 4; ++s) {
        const std::vector<std::size_t> cards{3, 2, 3};
        const auto t = random_table(cards, 300 + s);
        const auto space = discrete_space(cards);
        const auto plan = saltelli_plan(space, 1 << 14, s + 1);
        const auto est = sobol_estimate(plan, evaluate(plan, space, 1, table_model(t)), 1);
        const auto dec = exact_oracle(t);
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_NEAR(est.first_at(i, 0), dec.first_order(i), 0.02);
            EXPECT_NEAR(est.total_at(i, 0), dec.total(i), 0.02);
        }
    }
}

TEST(Sobol, InertVariable) {
    const auto space = unit_space(2);
    const auto plan = saltelli_plan(space, 1 << 14, 3);
    const auto est = sobol_estimate(plan, evaluate(plan, space, 1, [](auto x, auto out) { out[0] = x[0]; }), 1);
    EXPECT_NEAR(est.first_at(0, 0), 1.0, 0.02);
    EXPECT_NEAR(est.first_at(1, 0), 0.0, 0.02);
    EXPECT_NEAR(est.total_at(1, 0), 0.0, 0.02);
    EXPECT_TRUE(est.group_inert[1]);
    EXPECT_FALSE(est.group_inert[0]);
    EXPECT_EQ(est.total_at(1, 0), 0.0);
}

TEST(Sobol, GFunctionAgainstAnalytic) {
    const std::vector<double> a{0, 1, 4.5, 9};
    const auto space = unit_space(4);
    const auto plan = saltelli_plan(space, 1 << 14, 5);
    const auto est = sobol_estimate(plan, evaluate(plan, space, 1, [&](auto x, auto out) {
        double p = 1;
        for (std::size_t i = 0; i < 4; ++i) p *= (std::abs(4 * x[i] - 2) + a[i]) / (1 + a[i]);
        out[0] = p;
    }), 1);
    const auto s = g_function_indices(a);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(est.first_at(i, 0), s[i], 0.02) << i;
}

TEST(Sobol, DeadUnitsFlaggedNotNan) {
    const auto space = unit_space(2);
    const auto plan = saltelli_plan(space, 64, 1);
    const auto est = sobol_estimate(plan, evaluate(plan, space, 2, [](auto x, auto out) {
        out[0] = 7.0;
        out[1] = x[0];
    }), 2);
    EXPECT_TRUE(est.dead[0]);
    EXPECT_FALSE(est.dead[1]);
    EXPECT_EQ(est.first_at(0, 0), 0.0);
    EXPECT_EQ(est.total_at(1, 0), 0.0);
}

TEST(Sobol, AffineInvariance) {
    const auto t = random_table({3, 3, 2}, 400);
    const auto space = discrete_space({3, 3, 2});
    const auto plan = saltelli_plan(space, 1024, 2);
    const auto base = evaluate(plan, space, 1, table_model(t));
    std::vector<double> scaled(base);
    for (double& v : scaled) v = 3.5 * v - 11.0;
    const auto a = sobol_estimate(plan, base, 1), b = sobol_estimate(plan, scaled, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(a.first_at(i, 0), b.first_at(i, 0), 1e-9);
        EXPECT_NEAR(a.total_at(i, 0), b.total_at(i, 0), 1e-9);
    }
}

TEST(Sobol, ErrorShrinksWithBudget) {
    const std::vector<std::size_t> cards{3, 2, 3};
    auto rms = [&](std::size_t n) {
        double acc = 0;
        int count = 0;
        for (std::uint64_t s = 0; s < 8; ++s) {
            const auto t = random_table(cards, 500 + s);
            const auto dec = exact_oracle(t);
            const auto space = discrete_space(cards);
            for (std::uint64_t shift = 1; shift <= 4; ++shift) {
                const auto plan = saltelli_plan(space, n, shift * 97);
                const auto est = sobol_estimate(plan, evaluate(plan, space, 1, table_model(t)), 1);
                double worst = 0;
                for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(est.first_at(i, 0) - dec.first_order(i)));
                acc += worst * worst;
                ++count;
            }
        }
        return std::sqrt(acc / count);
    };
    const double ratio = rms(256) / rms(1024);
    EXPECT_GE(ratio, 1.3);
    EXPECT_LE(ratio, 3.0);
}

TEST(Sobol, StreamingMatchesBatchAcrossJobs) {
    const auto space = unit_space(3);
    const auto plan = saltelli_plan(space, 128, 4);
    const std::size_t units = 5;
    const auto out = evaluate(plan, space, units, [](auto x, auto o) {
        for (std::size_t u = 0; u < 5; ++u) o[u] = std::sin(x[0] * (u + 1)) + x[1] * x[2] * static_cast<double>(u);
    });
    const auto batch = sobol_estimate(plan, out, units);
    SaltelliAccumulator acc(plan, units, 4);
    for (std::size_t j = 0; j < plan.n_base; ++j) {
        acc.add_block(std::span<const double>(out.data() + j * plan.block_size() * units, plan.block_size() * units));
    }
    const auto streamed = acc.finish();
    EXPECT_EQ(batch.first, streamed.first);
    EXPECT_EQ(batch.total, streamed.total);
    EXPECT_EQ(batch.variance, streamed.variance);
}

// ---- Monte-Carlo Shapley ------------------------------------------------------------------------

TEST(Shapley, AdditiveModelSplitsEqually) {
    const auto space = unit_space(4);
    const auto plan = shapley_plan(space, 24, 1024, 8, 6);
    const auto est = shapley_estimate(plan, evaluate(plan, space, 1, [](auto x, auto out) {
        out[0] = x[0] + x[1] + x[2] + x[3];
    }), 1);
    EXPECT_TRUE(est.pooled);
    const double V = 4.0 / 12.0;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(est.value_at(i, 0), V / 4, 0.05 * V / 4) << i;
}

TEST(Shapley, SinglePlayerAbsorbsVariance) {
    const auto space = unit_space(1);
    const auto plan = shapley_plan(space, 1, 16, 4, 7);
    const auto est = shapley_estimate(plan, evaluate(plan, space, 1, [](auto x, auto out) { out[0] = x[0] * x[0]; }), 1);
    EXPECT_EQ(est.value_at(0, 0), est.total_variance[0]);
}

TEST(Shapley, EfficiencyOnRandomQuadratics) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        StreamEngine rng(s, stream_id(0x9a));
        std::vector<double> q(16);
        for (double& v : q) v = rng.normal();
        const auto space = unit_space(4);
        const auto plan = shapley_plan(space, 10, 16, 4, s);
        const auto est = shapley_estimate(plan, evaluate(plan, space, 1, [&](auto x, auto out) {
            double acc = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                for (std::size_t j = 0; j < 4; ++j) acc += q[i * 4 + j] * x[i] * x[j];
            }
            out[0] = acc;
        }), 1);
        double sum = 0;
        for (std::size_t i = 0; i < 4; ++i) sum += est.value_at(i, 0);
        EXPECT_NEAR(sum / est.total_variance[0], 1.0, 0.02);
    }
}

TEST(Shapley, StreamingMatchesBatch) {
    const auto space = unit_space(3);
    const auto plan = shapley_plan(space, 4, 8, 3, 8);
    const auto out = evaluate(plan, space, 2, [](auto x, auto o) {
        o[0] = x[0] * x[1] + x[2];
        o[1] = std::exp(x[2]);
    });
    const auto batch = shapley_estimate(plan, out, 2);
    ShapleyAccumulator acc(plan, 2, 3);
    for (std::size_t c = 0; c < plan.budget / plan.n_inner; ++c) {
        acc.add_cell(std::span<const double>(out.data() + c * plan.n_inner * 2, plan.n_inner * 2));
    }
    EXPECT_EQ(acc.finish().values, batch.values);
}

// ---- moments ----------------------------------------------------------------------------------

TEST(Moments, VarianceAndCov) {
    const std::vector<double> s{1.0, 3.0};
    const auto st = variance_cov(s, 2, 1);
    EXPECT_DOUBLE_EQ(st[0].mean, 2.0);
    EXPECT_DOUBLE_EQ(st[0].variance, 2.0);
    ASSERT_TRUE(st[0].cov.has_value());
    EXPECT_DOUBLE_EQ(*st[0].cov, std::sqrt(2.0) / 2.0);
    const std::vector<double> zero{0.0, 0.0, 0.0};
    const auto z = variance_cov(zero, 3, 1);
    EXPECT_EQ(z[0].variance, 0.0);
    EXPECT_FALSE(z[0].cov.has_value());
    const std::vector<double> constant{4.0, 4.0};
    EXPECT_EQ(*variance_cov(constant, 2, 1)[0].cov, 0.0);

    MomentAccumulator m(1);
    for (double v : s) m.add(std::span<const double>(&v, 1));
    EXPECT_DOUBLE_EQ(m.finish()[0].variance, 2.0);
}

TEST(Maps, SplitByLayout) {
    const auto space = unit_space(2);
    const auto plan = saltelli_plan(space, 16, 1);
    const std::vector<UnitLayout> layout{{"a", {2, 1, 1}}, {"b", {3}}};
    const auto est = sobol_estimate(plan, evaluate(plan, space, 5, [](auto x, auto o) {
        for (std::size_t u = 0; u < 5; ++u) o[u] = x[u % 2];
    }), 5);
    const auto maps = split_sobol(est, layout, {"x0", "x1"});
    ASSERT_EQ(maps.size(), 8u);
    EXPECT_EQ(maps[0].values.shape(), (Shape{2, 1, 1}));
    EXPECT_EQ(maps[0].kind, SensitivityKind::SobolFirst);
    EXPECT_EQ(maps.back().kind, SensitivityKind::SobolTotal);
    EXPECT_EQ(layout_units(layout), 5u);
}
