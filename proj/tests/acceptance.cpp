// Acceptance harness: one PASS/FAIL line per criterion, details indented below.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "augsens/augment.hpp"
#include "augsens/classsense.hpp"
#include "augsens/dataset.hpp"
#include "augsens/error.hpp"
#include "augsens/estimators.hpp"
#include "augsens/exact.hpp"
#include "augsens/inputspace.hpp"
#include "augsens/maskeval.hpp"
#include "augsens/pipeline.hpp"
#include "augsens/rng.hpp"
#include "augsens/statan.hpp"

using namespace augsens;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> details;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
    void info(const std::string& what) { details.push_back("     " + what); }
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}
std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}
std::string fmt(const char* f, double a, double b, double c) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

TabulatedFunction random_table(const std::vector<std::size_t>& cards, std::uint64_t seed) {
    StreamEngine rng(seed, stream_id(0xacc1));
    return TabulatedFunction::from(cards, [&](std::span<const std::size_t>) { return rng.normal(); });
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

// ---- 1 ----------------------------------------------------------------------------------

Outcome oracle_equivalence(std::size_t jobs) {
    Outcome o;
    const auto t0 = Clock::now();
    double worst_sum = 0, worst_mc = 0;
    bool ordered = true;
    std::size_t tables = 0;
    for (std::uint64_t s = 0; s < 24; ++s) {
        // d in 1..4, supports in 2..3
        StreamEngine shape_rng(s, stream_id(0xacc2));
        const std::size_t d = 1 + shape_rng.below(4);
        std::vector<std::size_t> cards(d);
        for (auto& c : cards) c = 2 + shape_rng.below(2);
        const auto t = random_table(cards, s);
        const auto dec = exact_oracle(t);
        if (dec.degenerate) continue;
        ++tables;
        const double sum = std::accumulate(dec.partial_variance.begin(), dec.partial_variance.end(), 0.0);
        worst_sum = std::max(worst_sum, std::abs(sum - dec.variance));
        for (std::size_t i = 0; i < d; ++i) {
            const double si = dec.first_order(i), ti = dec.total(i);
            ordered = ordered && 0.0 <= si && si <= ti && ti <= 1.0;
        }
        const auto space = discrete_space(cards);
        const auto plan = saltelli_plan(space, std::size_t{1} << 14, s + 1);
        std::vector<double> out(plan.budget);
        std::vector<std::size_t> idx(d);
        for (std::size_t r = 0; r < plan.budget; ++r) {
            const auto row = plan.row(r);
            for (std::size_t k = 0; k < d; ++k) idx[k] = static_cast<std::size_t>(decode_variable(space.variables()[k], row[k]));
            out[r] = t.values[t.flat_index(idx)];
        }
        const auto est = sobol_estimate(plan, out, 1, {}, jobs);
        for (std::size_t i = 0; i < d; ++i) {
            worst_mc = std::max({worst_mc, std::abs(est.first_at(i, 0) - dec.first_order(i)),
                                 std::abs(est.total_at(i, 0) - dec.total(i))});
        }
    }
    const double secs = seconds_since(t0);
    o.check(tables >= 20, fmt("%.0f non-degenerate tables (need >= 20)", double(tables)));
    o.check(worst_sum <= 1e-10, fmt("max |sum V_alpha - V| = %.3g (tol 1e-10)", worst_sum));
    o.check(ordered, "0 <= S_i <= S_i^T <= 1 on every table");
    o.check(worst_mc <= 0.02, fmt("max |MC - oracle| at n_base 2^14 = %.4f (tol 0.02)", worst_mc));
    o.check(secs < 120, fmt("runtime %.1f s (limit 120 s)", secs));
    return o;
}

// ---- 2 ----------------------------------------------------------------------------------

ExperimentConfig desk_config(const fs::path& out) {
    ExperimentConfig c;
    c.name = "acceptance";
    c.per_class = 40;
    c.output = out;
    return c;
}

Outcome shapley_correctness(const fs::path& work, std::size_t jobs) {
    Outcome o;
    double worst = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto t = random_table({3, 2, 3, 2}, 500 + s);
        const auto a = subset_shapley_exact(t);
        const auto b = permutation_shapley_exact(t);
        for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    o.check(worst <= 1e-10, fmt("subset vs permutation form, d = 4: max diff %.3g (tol 1e-10)", worst));

    auto cfg = desk_config(work / "shapley");
    cfg.design = "shapley";
    cfg.n_perm = 16;
    cfg.n_outer = 8;
    cfg.n_inner = 4;
    Pipeline p(cfg, jobs);
    p.plan();
    p.sample();
    p.infer();
    const auto est = p.estimate();
    const auto ar = p.store().read_archive("estimate", est.hash, "maps.aswt");
    const auto maps = p.load_maps(SensitivityKind::Shapley);
    std::size_t live = 0, within = 0;
    double worst_rel = 0;
    for (const auto& l : p.layout()) {
        // independent route: unbiased variance from the streamed moments of the full-prefix rows
        const auto var = ar.values_f64("variance/" + l.checkpoint);
        std::vector<double> sum(var.size(), 0.0);
        std::vector<std::uint8_t> dead;
        for (const auto& m : maps) {
            if (m.checkpoint != l.checkpoint) continue;
            for (std::size_t u = 0; u < sum.size(); ++u) sum[u] += m.values[u];
            dead = m.dead;
        }
        for (std::size_t u = 0; u < var.size(); ++u) {
            if (dead[u]) continue;
            ++live;
            // values are stored as f32
            const double rel = std::abs(sum[u] - var[u]) / var[u];
            worst_rel = std::max(worst_rel, rel);
            within += rel <= 0.02;
        }
    }
    const double frac = live ? static_cast<double>(within) / static_cast<double>(live) : 0.0;
    o.check(live > 0 && frac >= 0.99,
            fmt("desk pipeline: %.2f%% of %.0f live units have |sum v_i / V - 1| <= 2%% (need 99%%)", 100 * frac,
                double(live)));
    o.info(fmt("worst relative efficiency gap %.3g", worst_rel));
    return o;
}

// ---- 3 ----------------------------------------------------------------------------------

Outcome threshold_reproduction(std::size_t jobs) {
    Outcome o;
    auto t0 = Clock::now();
    const auto a = mc_threshold(1000, 5, 50, 1000000, 1, jobs);
    o.info(fmt("N=1000 n=5 s=50: %.1f s", seconds_since(t0)));
    o.check(std::abs(a.q1 / 0.00273 - 1) <= 0.05, fmt("q1 = %.6f (0.00273 +- 5%%)", a.q1));
    o.check(std::abs(a.q3 / 0.00284 - 1) <= 0.05, fmt("q3 = %.6f (0.00284 +- 5%%)", a.q3));
    o.check(std::abs(a.tau / 0.003 - 1) <= 0.10, fmt("tau = %.6f (0.003 +- 10%%)", a.tau));
    t0 = Clock::now();
    const auto b = mc_threshold(365, 5, 100, 1000000, 1, jobs);
    const double secs = seconds_since(t0);
    o.check(std::abs(b.tau / 0.0081 - 1) <= 0.10, fmt("N=365 n=5 s=100: tau = %.6f (0.0081 +- 10%%)", b.tau));
    o.check(secs < 60, fmt("N=365 run at 1e6 trials: %.1f s (limit 60 s)", secs));
    return o;
}

// ---- 4 ----------------------------------------------------------------------------------

Outcome budget_formulas() {
    Outcome o;
    const std::vector<std::pair<std::size_t, std::size_t>> saltelli{{1, 1},  {2, 3},   {4, 5},  {8, 8},   {16, 12},
                                                                    {32, 7}, {64, 14}, {128, 2}, {256, 9}, {1024, 4}};
    bool ok = true;
    for (auto [n, d] : saltelli) {
        const std::size_t want = n * (2 * d + 2);
        const bool formula = budget(SaltelliBudget{n, d}) == want;
        const auto plan = saltelli_plan(unit_space(d), n, 0);
        const bool plan_ok = plan.budget == want && plan.rows.size() == want * d;
        if (!(formula && plan_ok)) o.info(fmt("saltelli n=%.0f d=%.0f mismatch", double(n), double(d)));
        ok = ok && formula && plan_ok;
    }
    o.check(ok, "Saltelli n(2d+2): 10 tuples, formula and generated plan");

    struct S {
        std::size_t n_perm, d, n_outer, n_inner;
    };
    // n_perm < d! so the plan samples permutations instead of enumerating them
    const std::vector<S> shapley{{1, 2, 1, 2}, {2, 3, 2, 2}, {5, 3, 3, 4},  {10, 4, 2, 3}, {20, 4, 1, 2},
                                 {7, 5, 4, 5}, {30, 5, 2, 2}, {12, 6, 3, 3}, {100, 6, 1, 2}, {3, 8, 2, 8}};
    ok = true;
    for (const auto& s : shapley) {
        const std::size_t want = s.n_perm * s.d * s.n_outer * s.n_inner;
        const bool formula = budget(ShapleyBudget{s.n_perm, s.d, s.n_outer, s.n_inner}) == want;
        const auto plan = shapley_plan(unit_space(s.d), s.n_perm, s.n_outer, s.n_inner, 1);
        const bool plan_ok = plan.budget == want && plan.rows.size() == want * s.d;
        if (!(formula && plan_ok)) o.info(fmt("shapley n_perm=%.0f d=%.0f mismatch", double(s.n_perm), double(s.d)));
        ok = ok && formula && plan_ok;
    }
    o.check(ok, "Shapley n_perm d n_outer n_inner: 10 tuples, formula and generated plan");

    struct R {
        std::size_t n_aug, n_theta, m, k, classes;
    };
    const std::vector<R> screening{{5, 0, 3, 10, 10}, {0, 5, 3, 10, 10},   {2, 3, 4, 5, 1000}, {7, 0, 1, 1, 365},
                                   {1, 1, 1, 1, 1},   {3, 4, 10, 20, 100}, {0, 0, 5, 7, 3},    {6, 6, 2, 50, 10},
                                   {4, 1, 8, 3, 365}, {10, 2, 3, 100, 2}};
    ok = true;
    for (const auto& r : screening) {
        const std::size_t want = (1 + r.n_aug + r.m * r.n_theta) * r.k * r.classes;
        ok = ok && budget(ScreeningBudget{r.n_aug, r.n_theta, r.m, r.k, r.classes}) == want;
    }
    o.check(ok, "screening (1 + n_aug + m n_aug_theta) k N_classes: 10 tuples");
    return o;
}

// ---- 5 ----------------------------------------------------------------------------------

Image test_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    Image img(3, h, w);
    StreamEngine rng(seed, stream_id(0xacc5));
    for (float& v : img.pixels.storage()) v = static_cast<float>(rng.uniform());
    return img;
}

Outcome augmentation_algebra() {
    Outcome o;
    const Image img = test_image(24, 24, 1);
    bool identity = true;
    for (TransformKind k : all_transform_kinds()) {
        const bool same = apply_transform(img, identity_spec(k)) == img;
        if (!same) o.info("identity parameters change the image: " + to_string(k));
        identity = identity && same;
    }
    o.check(identity && all_transform_kinds().size() == 12, "identity parameters are exact no-ops for all 12 transforms");

    const TransformSpec flip{TransformKind::HFlip, {{"apply", 1.0}}};
    o.check(apply_transform(apply_transform(img, flip), flip) == img, "hflip o hflip = id");
    const TransformSpec gray{TransformKind::Grayscale, {{"apply", 1.0}}};
    const Image g = apply_transform(img, gray);
    o.check(apply_transform(g, gray) == g, "grayscale idempotent");
    const TransformSpec roll{TransformKind::Rolling, {{"dy", 24.0}, {"dx", 24.0}}};
    o.check(apply_transform(img, roll) == img, "rolling by the full period = id");

    const std::vector<TransformSpec> specs{{TransformKind::Erase, {{"cx", 0.3}, {"cy", 0.3}, {"w", 0.3}, {"h", 0.3}}},
                                           {TransformKind::RotateCrop, {{"angle", 30.0}}}};
    const std::vector<std::size_t> er{0, 1}, re{1, 0};
    const double gap = max_abs_diff(compose_ordered(img, specs, er).pixels, compose_ordered(img, specs, re).pixels);
    o.check(gap > 0, fmt("erase-then-rotate vs rotate-then-erase: L_inf = %.4f (> 0)", gap));

    double worst = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Image x = test_image(16, 16, 100 + s);
        worst = std::max(worst, max_abs_diff(hsv_to_rgb(rgb_to_hsv(x)).pixels, x.pixels));
    }
    o.check(worst <= 1e-5, fmt("HSV round trip max error %.3g (tol 1e-5)", worst));
    return o;
}

// ---- 6 ----------------------------------------------------------------------------------

Outcome masking_suite() {
    Outcome o;
    Network net = tinynet_a(10, 7);
    fit_readout(net, desk_dataset({11, 10, 20, 32, 32}));
    MaskSet ones;
    std::map<std::string, Tensor> maps;
    std::uint64_t seed = 1;
    for (const auto& c : net.checkpoints()) {
        if (!c.convolutional) continue;
        const Shape shape = net.checkpoint_shape(c.name);
        ones[c.name] = Tensor(shape, 1.0f);
        Tensor m(shape);
        StreamEngine rng(seed++, stream_id(0xacc6));
        for (float& v : m.storage()) v = static_cast<float>(rng.uniform());
        maps[c.name] = m;
    }
    bool exact = true, thr_raw = true;
    for (std::uint64_t s = 0; s < 8; ++s) {
        const Tensor x = test_image(32, 32, 600 + s).pixels;
        const auto plain = forward_with_checkpoints(net, x);
        const auto masked = forward_with_checkpoints(net, x, &ones);
        exact = exact && plain.logits == masked.logits;
        for (std::size_t i = 0; i < plain.records.size(); ++i) exact = exact && plain.records[i].tensor == masked.records[i].tensor;
        const auto raw = masked_forward(net, x, build_masks(net, maps, {MaskMode::Raw}));
        for (double q : {0.5, 0.6, 0.7, 0.8, 0.9}) {
            thr_raw = thr_raw && masked_forward(net, x, build_masks(net, maps, {MaskMode::Threshold, 1.0, q})) == raw;
        }
    }
    o.check(exact, "all-ones masks reproduce logits and checkpoints bit-exactly");
    o.check(thr_raw, "thr(alpha=1, q) equals raw masking for q in 0.5..0.9");

    const auto grid = study_grid();
    std::size_t raw = 0, inv = 0, thr = 0;
    bool grid_ok = grid.size() == 17;
    for (const auto& v : grid) {
        raw += v.mode == MaskMode::Raw;
        inv += v.mode == MaskMode::Inverted;
        if (v.mode == MaskMode::Threshold) {
            ++thr;
            grid_ok = grid_ok && (v.alpha == 0.0 || v.alpha == 0.5 || v.alpha == 1.5) && v.q >= 0.5 && v.q <= 0.9;
        }
    }
    o.check(grid_ok && raw == 1 && inv == 1 && thr == 15, fmt("study grid has %.0f variants (raw, inverted, %.0f thresholds)",
                                                              double(grid.size()), double(thr)));

    bool below = true;
    for (const auto& [name, m] : maps) {
        for (const auto& v : grid) {
            if (v.mode != MaskMode::Threshold) continue;
            const Tensor t = build_mask(m, v);
            const double cut = nearest_rank_quantile(m.data(), v.q);
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (m[i] <= cut) below = below && t[i] == m[i];
            }
        }
    }
    o.check(below, "entries at or below the q-quantile are bit-identical under thresholding");
    return o;
}

// ---- 7 ----------------------------------------------------------------------------------

struct Span1 {
    double start = 0, jump = 1, size = 1;
};

// Per checkpoint, the input rows/cols seen by output index i: [start + i jump, start + i jump + size).
std::map<std::string, Span1> receptive_fields(const Network& net) {
    std::map<std::string, Span1> out;
    Span1 s;
    std::map<std::size_t, std::string> taps;
    for (const auto& c : net.checkpoints()) taps[c.layer] = c.name;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const Layer& l = net.layers()[i];
        if (const auto* c = std::get_if<Conv2d>(&l)) {
            const double ke = static_cast<double>((c->k_h - 1) * (c->dilation + 1) + 1);
            s.start -= static_cast<double>(c->padding) * s.jump;
            s.size += (ke - 1) * s.jump;
            s.jump *= static_cast<double>(c->stride);
        } else if (const auto* p = std::get_if<MaxPool>(&l)) {
            s.size += static_cast<double>(p->k - 1) * s.jump;
            s.jump *= static_cast<double>(p->stride);
        }
        if (taps.count(i)) out[taps[i]] = s;
    }
    return out;
}

Outcome planted_sensitivity(const fs::path& work) {
    Outcome o;
    const auto t0 = Clock::now();
    auto cfg = desk_config(work / "planted");
    cfg.n_base = 128;
    cfg.mask_images_per_class = 4;
    cfg.mc_trials = 1000;
    // single-threaded on purpose: the runtime bound is for one thread
    Pipeline p(cfg, 1);
    p.plan();
    p.sample();
    p.infer();
    p.estimate();
    const auto me = p.mask_eval();
    const auto rf = receptive_fields(p.network());
    const Rect marker = desk_marker(cfg.height, cfg.width);

    std::size_t top_total = 0, top_in = 0, units = 0, in_r = 0;
    for (const auto& m : p.load_maps(SensitivityKind::SobolFirst)) {
        if (m.group != "erase" || !p.network().find_checkpoint(m.checkpoint).convolutional) continue;
        const auto& f = rf.at(m.checkpoint);
        const std::size_t C = m.values.dim(0), H = m.values.dim(1), W = m.values.dim(2);
        std::vector<std::pair<double, std::size_t>> ranked;
        std::vector<std::uint8_t> overlaps(m.values.size());
        std::size_t ck_in = 0;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t y = 0; y < H; ++y) {
                for (std::size_t x = 0; x < W; ++x) {
                    const std::size_t u = (c * H + y) * W + x;
                    const double y0 = f.start + static_cast<double>(y) * f.jump, x0 = f.start + static_cast<double>(x) * f.jump;
                    overlaps[u] = y0 < static_cast<double>(marker.y1) && y0 + f.size > static_cast<double>(marker.y0) &&
                                  x0 < static_cast<double>(marker.x1) && x0 + f.size > static_cast<double>(marker.x0);
                    if (m.dead[u]) continue;
                    ranked.emplace_back(m.values[u], u);
                    ck_in += overlaps[u];
                }
            }
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first > b.first; });
        const std::size_t decile = std::max<std::size_t>(1, ranked.size() / 10);
        std::size_t ck_top_in = 0;
        for (std::size_t k = 0; k < decile; ++k) ck_top_in += overlaps[ranked[k].second];
        const double ck_ratio = (static_cast<double>(ck_top_in) / decile) / (static_cast<double>(ck_in) / ranked.size());
        o.info(m.checkpoint + fmt(": top-decile share %.3f vs baseline %.3f (ratio %.2f)", double(ck_top_in) / decile,
                                  double(ck_in) / ranked.size(), ck_ratio));
        top_total += decile;
        top_in += ck_top_in;
        units += ranked.size();
        in_r += ck_in;
    }
    const double ratio = (static_cast<double>(top_in) / top_total) / (static_cast<double>(in_r) / units);
    o.check(ratio >= 2.0, fmt("erase first-order map, pooled conv checkpoints: mass ratio %.2f (need >= 2)", ratio));

    // match matrix: erase row, erase column below the row median
    std::istringstream csv(p.store().read_text("mask-eval", me.hash, "match.csv"));
    std::string line, header;
    std::getline(csv, header);
    std::vector<std::string> cols;
    {
        std::stringstream hs(header);
        std::string cell;
        while (std::getline(hs, cell, ',')) cols.push_back(cell);
    }
    bool found = false;
    while (std::getline(csv, line)) {
        std::stringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        if (cell != "erase") continue;
        std::vector<double> row;
        double diag = std::nan("");
        for (std::size_t c = 1; std::getline(ls, cell, ','); ++c) {
            if (cell == "NA") continue;
            const double v = std::stod(cell);
            row.push_back(v);
            if (cols[c] == "erase") diag = v;
        }
        std::sort(row.begin(), row.end());
        const double median = row.size() % 2 ? row[row.size() / 2] : 0.5 * (row[row.size() / 2 - 1] + row[row.size() / 2]);
        found = true;
        o.check(diag < median, fmt("match correlation erase/erase = %.3f, row median %.3f", diag, median));
    }
    if (!found) o.check(false, "match matrix has no erase row");
    const double secs = seconds_since(t0);
    o.check(secs < 900, fmt("single-threaded runtime %.1f s (limit 900 s)", secs));
    return o;
}

// ---- 8 ----------------------------------------------------------------------------------

Outcome statistics_suite(std::size_t jobs) {
    Outcome o;
    double worst_rho = 0;
    for (std::uint64_t s = 0; s < 30; ++s) {
        StreamEngine rng(s, stream_id(0xacc8));
        const std::size_t n = 5 + 5 * s;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = s % 2 ? static_cast<double>(rng.below(5)) : rng.normal();
            y[i] = rng.normal() + 0.5 * x[i];
        }
        // rank by counting, Pearson on ranks
        auto ranks = [&](const std::vector<double>& v) {
            std::vector<double> r(n);
            for (std::size_t i = 0; i < n; ++i) {
                double less = 0, eq = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    less += v[j] < v[i];
                    eq += v[j] == v[i];
                }
                r[i] = 1 + less + (eq - 1) / 2;
            }
            return r;
        };
        const auto rx = ranks(x), ry = ranks(y);
        const double m = (n + 1) / 2.0;
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sxy += (rx[i] - m) * (ry[i] - m);
            sxx += (rx[i] - m) * (rx[i] - m);
            syy += (ry[i] - m) * (ry[i] - m);
        }
        worst_rho = std::max(worst_rho, std::abs(*spearman(x, y) - sxy / std::sqrt(sxx * syy)));
    }
    o.check(worst_rho <= 1e-12, fmt("Spearman vs brute-force ranks: max diff %.3g (tol 1e-12)", worst_rho));

    double worst_h = 0;
    bool monotone = true, same_tree = true;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const std::size_t n = 4 + 2 * s;
        StreamEngine rng(s, stream_id(0xacc9));
        DistanceMatrix d{std::vector<std::string>(n, "v"), std::vector<double>(n * n, 0.0), std::vector<std::uint8_t>(n * n, 0)};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) d.values[i * n + j] = d.values[j * n + i] = rng.uniform();
        const auto got = average_linkage(d);
        // O(n^3): recompute every cluster average from its leaves
        std::vector<std::vector<std::size_t>> members;
        for (std::size_t i = 0; i < n; ++i) members.push_back({i});
        for (std::size_t k = 0; k + 1 < n; ++k) {
            double best = 1e300;
            std::size_t bi = 0, bj = 0;
            for (std::size_t i = 0; i < members.size(); ++i) {
                for (std::size_t j = i + 1; j < members.size(); ++j) {
                    double sum = 0;
                    for (auto a : members[i])
                        for (auto b : members[j]) sum += d.values[a * n + b];
                    const double link = sum / static_cast<double>(members[i].size() * members[j].size());
                    if (link < best) {
                        best = link;
                        bi = i;
                        bj = j;
                    }
                }
            }
            worst_h = std::max(worst_h, std::abs(got.merges[k].height - best));
            same_tree = same_tree && got.merges[k].size == members[bi].size() + members[bj].size();
            if (k > 0) monotone = monotone && got.merges[k].height >= got.merges[k - 1].height;
            members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
            members.erase(members.begin() + static_cast<std::ptrdiff_t>(bj));
        }
    }
    o.check(worst_h <= 1e-12 && same_tree, fmt("average-linkage heights vs O(n^3) reference: max diff %.3g (tol 1e-12)", worst_h));
    o.check(monotone, "merge heights are non-decreasing");

    const std::size_t K = 2, per = 30, dims = 4;
    std::vector<double> f;
    std::vector<std::size_t> labels;
    StreamEngine rng(5, stream_id(0xacca));
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < per; ++i) {
            labels.push_back(k);
            // class means at -5 and +5 sigma along the first axis
            for (std::size_t j = 0; j < dims; ++j) f.push_back(rng.normal() + (j == 0 ? (k == 0 ? -5.0 : 5.0) : 0.0));
        }
    }
    const auto cm = lda_confusion(f, dims, labels, {"minus", "plus"}, {5, 100, 3, 1e-3, jobs});
    o.check(cm.accuracy() >= 0.99, fmt("LDA on +-5 sigma classes, 5 folds x 100 repeats: accuracy %.4f (need 0.99)", cm.accuracy()));
    return o;
}

// ---- 9 ----------------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), root).string()] = ss.str();
    }
    return files;
}

Outcome determinism(const fs::path& work, std::size_t jobs) {
    Outcome o;
    auto run = [&](const std::string& tag, std::size_t j, const std::string& design) {
        auto cfg = desk_config(work / ("det-" + tag));
        cfg.per_class = 10;
        cfg.design = design;
        cfg.n_base = 16;
        cfg.n_perm = 4;
        cfg.n_outer = 2;
        cfg.n_inner = 2;
        cfg.mask_images_per_class = 1;
        cfg.condition_repeats = 1;
        cfg.mc_trials = 2000;
        cfg.lda_folds = 2;
        cfg.lda_repeats = 3;
        cfg.persist_activations = true;
        fs::remove_all(cfg.output);
        Pipeline p(cfg, j);
        p.plan();
        p.sample();
        p.infer();
        p.estimate();
        p.mask_eval();
        p.class_sense();
        p.segment();
        p.report();
        return snapshot(cfg.output);
    };
    for (const std::string design : {"saltelli", "shapley"}) {
        const auto a = run(design + "-1", 1, design);
        const auto b = run(design + "-1b", 1, design);
        const auto c = run(design + "-n", std::max<std::size_t>(jobs, 2), design);
        std::size_t diff_ab = 0, diff_ac = 0;
        for (const auto& [name, bytes] : a) {
            diff_ab += !b.count(name) || b.at(name) != bytes;
            diff_ac += !c.count(name) || c.at(name) != bytes;
        }
        const double n_jobs = static_cast<double>(std::max<std::size_t>(jobs, 2));
        o.check(a.size() == b.size() && diff_ab == 0,
                design + fmt(": repeated run, %.0f files, %.0f differ", double(a.size()), double(diff_ab)));
        o.check(a.size() == c.size() && diff_ac == 0, design + fmt(": jobs 1 vs jobs %.0f, %.0f differ", n_jobs, double(diff_ac)));
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::size_t jobs = 1;
    std::string work = (fs::temp_directory_path() / "augsens-acceptance").string();
    std::vector<int> only;
    app.add_option("--jobs", jobs, "worker threads where the criterion allows it");
    app.add_option("--work", work, "scratch directory for pipeline stores");
    app.add_option("--only", only, "run a subset of criteria");
    CLI11_PARSE(app, argc, argv);
    fs::remove_all(work);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"oracle equivalence", [&] { return oracle_equivalence(jobs); }},
        {"Shapley correctness", [&] { return shapley_correctness(work, jobs); }},
        {"null-threshold reproduction", [&] { return threshold_reproduction(jobs); }},
        {"budget formulas", [] { return budget_formulas(); }},
        {"augmentation algebra", [] { return augmentation_algebra(); }},
        {"masking suite", [] { return masking_suite(); }},
        {"planted sensitivity end-to-end", [&] { return planted_sensitivity(work); }},
        {"statistics suite", [&] { return statistics_suite(jobs); }},
        {"determinism", [&] { return determinism(work, jobs); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        std::printf("%s %d %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), seconds_since(t0));
        for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed;
}
