#include "augsens/classsense.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "augsens/error.hpp"
#include "augsens/parallel.hpp"
#include "augsens/rng.hpp"

namespace augsens {

namespace {

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double log_choose(std::size_t n, std::size_t k) {
    return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
           std::lgamma(static_cast<double>(n - k) + 1);
}

// numpy's default (linear) quantile on sorted data
double linear_quantile(const std::vector<double>& sorted, double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<std::size_t> topk_sensitive(std::span<const double> values, std::size_t k) {
    if (k > values.size()) throw DomainError("k exceeds the class count");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    idx.resize(k);
    return idx;
}

std::vector<std::size_t> topk_sensitive(const SensitivityMap& map, std::size_t k) {
    if (map.values.rank() != 1) throw ShapeError("class sensitivity needs a map over the logits checkpoint");
    const auto data = map.values.data();
    std::vector<double> v(data.begin(), data.end());
    return topk_sensitive(v, k);
}

double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    const std::set<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t common = 0;
    for (std::size_t x : sa) common += sb.count(x);
    return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

double hypergeometric_pmf(std::size_t N, std::size_t n, std::size_t k) {
    if (n > N) throw DomainError("subset size exceeds the population");
    if (k > n || n - k > N - n) return 0.0;
    return std::exp(log_choose(n, k) + log_choose(N - n, n - k) - log_choose(N, n));
}

double null_mean_jaccard(std::size_t N, std::size_t n) {
    double m = 0;
    for (std::size_t k = 0; k <= n; ++k) m += hypergeometric_pmf(N, n, k) * static_cast<double>(k) / static_cast<double>(2 * n - k);
    return m;
}

double null_jaccard_variance(std::size_t N, std::size_t n) {
    const double m = null_mean_jaccard(N, n);
    double s = 0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double j = static_cast<double>(k) / static_cast<double>(2 * n - k);
        s += hypergeometric_pmf(N, n, k) * (j - m) * (j - m);
    }
    return s;
}

ThresholdResult mc_threshold(std::size_t N, std::size_t n, std::size_t s, std::size_t trials, std::uint64_t seed,
                             std::size_t jobs) {
    if (n == 0 || n > N) throw DomainError("top-k size must lie in [1, N]");
    if (s == 0) throw DomainError("samples per class must be positive");
    if (trials < 2) throw DomainError("at least two trials are needed for quantiles");
    const std::size_t draws = s * N;
    std::vector<double> pmf(n + 1), jac(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        pmf[k] = hypergeometric_pmf(N, n, k);
        jac[k] = static_cast<double>(k) / static_cast<double>(2 * n - k);
    }
    // Each trial draws the overlap counts of all pairs at once: a multinomial
    // over k, sampled as sequential conditional binomials from the largest k down.
    std::vector<double> means(trials);
    parallel_for(trials, jobs, [&](std::size_t t) {
        StreamEngine rng(seed, stream_id(0x0d, t));
        std::size_t left = draws;
        double mass = 1.0;
        long double acc = 0;
        for (std::size_t k = n; k >= 1 && left > 0; --k) {
            const double p = std::clamp(pmf[k] / mass, 0.0, 1.0);
            std::binomial_distribution<std::size_t> bin(left, p);
            const std::size_t c = bin(rng);
            acc += static_cast<long double>(c) * jac[k];
            left -= c;
            mass = std::max(mass - pmf[k], 0.0);
        }
        means[t] = static_cast<double>(acc / static_cast<long double>(draws));
    });
    ThresholdResult r{N, n, s, trials};
    long double total = 0;
    for (double m : means) total += m;
    r.simulated_mean = static_cast<double>(total / static_cast<long double>(trials));
    std::sort(means.begin(), means.end());
    r.q1 = linear_quantile(means, 0.25);
    r.q3 = linear_quantile(means, 0.75);
    r.tau = r.q3 + 1.5 * (r.q3 - r.q1);
    return r;
}

std::vector<MaskVariant> bias_grid() {
    std::vector<MaskVariant> grid;
    for (bool inv : {false, true}) {
        for (double q : {0.5, 0.6, 0.7, 0.8, 0.9}) grid.push_back({MaskMode::Threshold, 1.5, q, inv});
    }
    return grid;
}

JaccardReport bias_report(const Network& net, const std::vector<Image>& images, const std::string& augmentation,
                          SensitivityKind kind, const std::vector<std::size_t>& sensitive,
                          const std::vector<std::pair<MaskVariant, MaskSet>>& masks, const ThresholdResult& threshold,
                          std::size_t jobs) {
    if (images.empty()) throw DomainError("bias report needs a non-empty dataset");
    if (kind == SensitivityKind::SobolTotal) throw DomainError("total Sobol maps are not used for class sensitivity");
    if (sensitive.empty() || sensitive.size() > net.class_count()) throw DomainError("sensitive set size out of range");
    const std::size_t k = sensitive.size();
    JaccardReport rep{augmentation, kind, sensitive, threshold, {}};
    for (const auto& [variant, mask] : masks) {
        std::vector<double> j(images.size());
        parallel_for(images.size(), jobs, [&](std::size_t i) {
            const Tensor logits = masked_forward(net, images[i].pixels, mask);
            const auto top = predict_topk(logits.data(), k);
            j[i] = jaccard(top, sensitive);
        });
        long double sum = 0;
        for (double x : j) sum += x;
        const double mean = static_cast<double>(sum / static_cast<long double>(j.size()));
        rep.cells.push_back({variant, mean, mean > threshold.tau});
    }
    return rep;
}

std::string jaccard_csv(const std::vector<JaccardReport>& reports) {
    std::ostringstream os;
    os << "augmentation,kind,sensitive,mask,mean_jaccard,tau,q1,q3,flagged\n";
    for (const auto& r : reports) {
        std::string sens;
        for (std::size_t c : r.sensitive) sens += (sens.empty() ? "" : " ") + std::to_string(c);
        for (const auto& c : r.cells) {
            os << r.augmentation << "," << to_string(r.kind) << "," << sens << ",\"" << c.variant.label() << "\","
               << csv_num(c.mean_jaccard) << "," << csv_num(r.threshold.tau) << "," << csv_num(r.threshold.q1) << ","
               << csv_num(r.threshold.q3) << "," << (c.flagged ? "true" : "false") << "\n";
        }
    }
    return os.str();
}

}  // namespace augsens
