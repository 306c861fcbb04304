#include "augsens/statan.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "augsens/error.hpp"
#include "augsens/parallel.hpp"
#include "augsens/rng.hpp"

namespace augsens {

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArityError("spearman needs equally long samples");
    if (x.size() < 2) return std::nullopt;
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mean = (static_cast<double>(x.size()) + 1.0) / 2.0;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double a = rx[i] - mean, b = ry[i] - mean;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx == 0 || syy == 0) return std::nullopt;
    return static_cast<double>(std::clamp(sxy / std::sqrt(sxx * syy), -1.0L, 1.0L));
}

CorrelationMatrix spearman_matrix(std::span<const double> features, std::size_t units,
                                  const std::vector<std::string>& labels) {
    const std::size_t n = labels.size();
    if (units < 3) throw DomainError("spearman_matrix needs at least 3 units");
    if (features.size() != units * n) throw ShapeError("feature table does not match units x variables");
    std::vector<std::vector<double>> cols(n, std::vector<double>(units));
    for (std::size_t u = 0; u < units; ++u) {
        for (std::size_t v = 0; v < n; ++v) cols[v][u] = features[u * n + v];
    }
    CorrelationMatrix m{labels, std::vector<double>(n * n, 0.0), std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const auto r = spearman(cols[i], cols[j]);
            for (auto k : {i * n + j, j * n + i}) {
                m.values[k] = r.value_or(0.0);
                m.undefined[k] = r ? 0 : 1;
            }
        }
    }
    return m;
}

std::vector<std::optional<double>> spatial_corr_map(const Tensor& sensitivity, const Tensor& cov) {
    if (sensitivity.shape() != cov.shape() || sensitivity.rank() != 3) {
        throw ShapeError("spatial_corr_map needs two C x H x W maps of equal shape");
    }
    const std::size_t C = sensitivity.dim(0), H = sensitivity.dim(1), W = sensitivity.dim(2);
    if (C < 3) throw DomainError("spatial_corr_map needs at least 3 channels");
    std::vector<std::optional<double>> out(H * W);
    std::vector<double> a(C), b(C);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t c = 0; c < C; ++c) {
                a[c] = sensitivity.at(c, y, x);
                b[c] = cov.at(c, y, x);
            }
            out[y * W + x] = spearman(a, b);
        }
    }
    return out;
}

double corr_distance(double rho) { return std::sqrt(std::max(0.0, 1.0 - std::abs(rho))); }

DistanceMatrix corr_to_distance(const CorrelationMatrix& rho) {
    DistanceMatrix d{rho.labels, std::vector<double>(rho.values.size(), 0.0), rho.undefined};
    for (std::size_t k = 0; k < rho.values.size(); ++k) {
        if (!rho.undefined[k]) d.values[k] = corr_distance(rho.values[k]);
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
        d.values[i * d.size() + i] = 0.0;
        d.undefined[i * d.size() + i] = 0;
    }
    return d;
}

Dendrogram average_linkage(const DistanceMatrix& d) {
    const std::size_t n = d.size();
    if (n == 0) throw DomainError("average_linkage needs at least one leaf");
    bool any_defined = n == 1;
    for (std::size_t i = 0; i < n && !any_defined; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) any_defined = any_defined || d.is_defined(i, j);
    }
    if (!any_defined) throw DomainError("average_linkage: every distance is undefined");

    // Active clusters keep the sum and count of defined leaf-pair distances to each other.
    std::vector<std::size_t> id(n), size(n, 1);
    std::iota(id.begin(), id.end(), 0);
    std::vector<std::vector<double>> sum(n, std::vector<double>(n, 0.0));
    std::vector<std::vector<std::size_t>> cnt(n, std::vector<std::size_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && d.is_defined(i, j)) {
                sum[i][j] = d.at(i, j);
                cnt[i][j] = 1;
            }
        }
    }
    std::vector<char> active(n, 1);
    Dendrogram out{d.labels, {}, true};
    for (std::size_t step = 0; step + 1 < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = n, bj = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!active[j] || cnt[i][j] == 0) continue;
                const double link = sum[i][j] / static_cast<double>(cnt[i][j]);
                // slots are ordered by creation, ties resolved by the smaller cluster ids
                const std::pair<std::size_t, std::size_t> key = std::minmax(id[i], id[j]);
                const std::pair<std::size_t, std::size_t> best_key =
                    bi < n ? std::pair<std::size_t, std::size_t>(std::minmax(id[bi], id[bj])) : std::pair{n * 2, n * 2};
                if (link < best || (link == best && key < best_key)) {
                    best = link;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (bi == n) {
            out.complete = false;
            break;
        }
        const auto a = std::min(id[bi], id[bj]), b = std::max(id[bi], id[bj]);
        out.merges.push_back({a, b, best, size[bi] + size[bj]});
        // merged cluster lives in slot bi
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            sum[bi][k] = sum[k][bi] = sum[bi][k] + sum[bj][k];
            cnt[bi][k] = cnt[k][bi] = cnt[bi][k] + cnt[bj][k];
        }
        active[bj] = 0;
        size[bi] += size[bj];
        id[bi] = n + step;
    }
    return out;
}

std::vector<double> ConfusionMatrix::rates() const {
    const std::size_t k = size();
    std::vector<double> r(counts.size(), 0.0);
    for (std::size_t t = 0; t < k; ++t) {
        double row = 0;
        for (std::size_t p = 0; p < k; ++p) row += count(t, p);
        if (row > 0) {
            for (std::size_t p = 0; p < k; ++p) r[t * k + p] = count(t, p) / row;
        }
    }
    return r;
}

double ConfusionMatrix::accuracy() const {
    double diag = 0, all = 0;
    for (std::size_t t = 0; t < size(); ++t) {
        for (std::size_t p = 0; p < size(); ++p) {
            all += count(t, p);
            if (t == p) diag += count(t, p);
        }
    }
    return all > 0 ? diag / all : 0.0;
}

// ---- LDA ----------------------------------------------------------------------------------------

ShrinkageLda::ShrinkageLda(std::span<const double> features, std::size_t dims, std::span<const std::size_t> labels,
                           std::size_t classes, double shrinkage)
    : dims_(dims), classes_(classes) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    const std::size_t n = labels.size();
    if (features.size() != n * dims) throw ShapeError("LDA features do not match samples x dims");
    if (n <= classes) throw DomainError("LDA needs more samples than classes");
    const auto p = static_cast<Eigen::Index>(dims);

    MatrixXd means = MatrixXd::Zero(static_cast<Eigen::Index>(classes), p);
    std::vector<std::size_t> count(classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= classes) throw DomainError("LDA label out of range");
        ++count[labels[i]];
        means.row(static_cast<Eigen::Index>(labels[i])) +=
            Eigen::Map<const VectorXd>(features.data() + i * dims, p).transpose();
    }
    for (std::size_t k = 0; k < classes; ++k) {
        if (count[k] == 0) throw DomainError("LDA training fold lacks a class");
        means.row(static_cast<Eigen::Index>(k)) /= static_cast<double>(count[k]);
    }
    MatrixXd centered(static_cast<Eigen::Index>(n), p);
    for (std::size_t i = 0; i < n; ++i) {
        centered.row(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const VectorXd>(features.data() + i * dims, p).transpose() -
            means.row(static_cast<Eigen::Index>(labels[i]));
    }
    const double dof = static_cast<double>(n - classes);
    const double trace = centered.squaredNorm() / dof;
    // Sigma = (1 - l) Xc'Xc / dof + l (tr / p) I; a floor keeps it invertible.
    const double lambda = std::clamp(shrinkage, 0.0, 1.0);
    double s = lambda * trace / static_cast<double>(p);
    if (!(s > 0.0)) s = std::max(lambda, 1e-12);
    const double c = (1.0 - lambda) / dof;

    // Sigma^-1 M' for all class means
    MatrixXd solved;
    const MatrixXd mt = means.transpose();  // p x classes
    if (static_cast<std::size_t>(p) <= n) {
        MatrixXd sigma = c * (centered.transpose() * centered);
        sigma.diagonal().array() += s;
        solved = sigma.ldlt().solve(mt);
    } else {
        // Woodbury: (sI + c X'X)^-1 = (1/s)[I - c X' (sI + c X X')^-1 X]
        MatrixXd inner = c * (centered * centered.transpose());
        inner.diagonal().array() += s;
        solved = (mt - c * centered.transpose() * inner.ldlt().solve(centered * mt)) / s;
    }
    coef_.resize(classes * dims);
    intercept_.resize(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        const VectorXd w = solved.col(static_cast<Eigen::Index>(k));
        for (std::size_t j = 0; j < dims; ++j) coef_[k * dims + j] = w(static_cast<Eigen::Index>(j));
        intercept_[k] = -0.5 * means.row(static_cast<Eigen::Index>(k)).dot(w) +
                        std::log(static_cast<double>(count[k]) / static_cast<double>(n));
    }
}

std::size_t ShrinkageLda::predict(std::span<const double> x) const {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < classes_; ++k) {
        double score = intercept_[k];
        for (std::size_t j = 0; j < dims_; ++j) score += coef_[k * dims_ + j] * x[j];
        if (score > best_score) {
            best_score = score;
            best = k;
        }
    }
    return best;
}

ConfusionMatrix lda_confusion(std::span<const double> features, std::size_t dims, std::span<const std::size_t> labels,
                              const std::vector<std::string>& class_names, const LdaOptions& o) {
    const std::size_t n = labels.size();
    const std::size_t K = class_names.size();
    if (K < 2) throw DomainError("LDA needs at least 2 classes");
    if (o.folds < 2) throw DomainError("LDA cross-validation needs at least 2 folds");
    if (o.repeats < 1) throw DomainError("LDA cross-validation needs at least 1 repeat");
    if (features.size() != n * dims) throw ShapeError("LDA features do not match samples x dims");
    std::vector<std::vector<std::size_t>> by_class(K);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= K) throw DomainError("LDA label out of range");
        by_class[labels[i]].push_back(i);
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (by_class[k].size() < o.folds) {
            throw DomainError("class '" + class_names[k] + "' has fewer samples than folds");
        }
    }

    std::vector<std::vector<double>> per_repeat(o.repeats, std::vector<double>(K * K, 0.0));
    parallel_for(o.repeats, o.jobs, [&](std::size_t r) {
        // stratified fold assignment: shuffled positions within each class, dealt round-robin
        std::vector<std::size_t> fold(n);
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<std::size_t> members = by_class[k];
            StreamEngine rng(o.seed, stream_id(0x1da, r, k));
            for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
            for (std::size_t i = 0; i < members.size(); ++i) fold[members[i]] = i % o.folds;
        }
        for (std::size_t f = 0; f < o.folds; ++f) {
            std::vector<double> train_x;
            std::vector<std::size_t> train_y;
            for (std::size_t i = 0; i < n; ++i) {
                if (fold[i] == f) continue;
                train_x.insert(train_x.end(), features.begin() + static_cast<std::ptrdiff_t>(i * dims),
                               features.begin() + static_cast<std::ptrdiff_t>((i + 1) * dims));
                train_y.push_back(labels[i]);
            }
            const ShrinkageLda lda(train_x, dims, train_y, K, o.shrinkage);
            for (std::size_t i = 0; i < n; ++i) {
                if (fold[i] != f) continue;
                const std::size_t pred = lda.predict(features.subspan(i * dims, dims));
                per_repeat[r][labels[i] * K + pred] += 1.0;
            }
        }
    });
    ConfusionMatrix cm{class_names, std::vector<double>(K * K, 0.0), o.folds, o.repeats};
    for (const auto& m : per_repeat) {
        for (std::size_t k = 0; k < K * K; ++k) cm.counts[k] += m[k];
    }
    for (double& v : cm.counts) v /= static_cast<double>(o.repeats);
    return cm;
}

}  // namespace augsens
