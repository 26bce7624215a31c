#include "rafkit/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "rafkit/errors.hpp"
#include "rafkit/rng.hpp"

namespace raf {

namespace {

void check_same_dim(const SampleSet& x, const SampleSet& y, const char* what) {
    if (x.dim != y.dim) {
        throw dimension_mismatch(std::string(what) + ": dims " + std::to_string(x.dim) +
                                 " vs " + std::to_string(y.dim));
    }
}

double squared_distance(const FeatureVector& a, const FeatureVector& b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return acc;
}

Eigen::MatrixXd to_matrix(const SampleSet& set) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(set.size()),
                      static_cast<Eigen::Index>(set.dim));
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (std::size_t j = 0; j < set.dim; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = set.samples[i][j];
        }
    }
    return m;
}

}  // namespace

SampleSet bank_features(const ExpressionBank& bank) {
    SampleSet set;
    set.dim = bank.dim();
    set.samples.reserve(bank.size());
    for (const auto& e : bank.entries()) set.samples.push_back(e.feature);
    return set;
}

SampleSet concat(const SampleSet& a, const SampleSet& b) {
    check_same_dim(a, b, "concat");
    SampleSet out;
    out.dim = a.dim;
    out.samples = a.samples;
    out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
    return out;
}

double median_bandwidth(const SampleSet& pooled) {
    if (pooled.size() < 2) throw too_few_samples("median bandwidth needs >= 2 samples");
    std::vector<double> dists;
    dists.reserve(pooled.size() * (pooled.size() - 1) / 2);
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        for (std::size_t j = i + 1; j < pooled.size(); ++j) {
            double sq = squared_distance(pooled.samples[i], pooled.samples[j]);
            if (sq > 0.0) dists.push_back(std::sqrt(sq));
        }
    }
    if (dists.empty()) throw degenerate_set("all pooled points are identical");
    std::sort(dists.begin(), dists.end());
    std::size_t n = dists.size();
    if (n % 2 == 1) return dists[n / 2];
    return 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
}

double rbf_mmd(const SampleSet& x, const SampleSet& y, double bandwidth) {
    if (x.size() == 0 || y.size() == 0) throw too_few_samples("rbf_mmd needs non-empty sets");
    check_same_dim(x, y, "rbf_mmd");
    if (!(bandwidth > 0.0)) throw non_positive_bandwidth("rbf_mmd bandwidth must be > 0");

    // Canonicalize the argument order so the cross-kernel accumulation runs
    // identically for (X, Y) and (Y, X); the formula is symmetric, this
    // makes the floating-point result symmetric too.
    const SampleSet* a = &x;
    const SampleSet* b = &y;
    if (a->size() > b->size() || (a->size() == b->size() && b->samples < a->samples)) {
        std::swap(a, b);
    }

    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    auto kernel_sum = [inv](const SampleSet& s, const SampleSet& t) {
        double sum = 0.0;
        for (const auto& si : s.samples) {
            for (const auto& tj : t.samples) {
                sum += std::exp(-squared_distance(si, tj) * inv);
            }
        }
        return sum;
    };

    const double m = static_cast<double>(a->size());
    const double n = static_cast<double>(b->size());
    double v = kernel_sum(*a, *a) / (m * m) + kernel_sum(*b, *b) / (n * n) -
               2.0 * kernel_sum(*a, *b) / (m * n);
    return std::sqrt(std::max(0.0, v));
}

PcaModel pca_fit(const SampleSet& fit_on, std::size_t n_components) {
    const std::size_t n = fit_on.size();
    const std::size_t d = fit_on.dim;
    if (n < 2) throw too_few_samples("PCA needs >= 2 samples");
    if (n_components < 1 || n_components > std::min(d, n - 1)) {
        throw bad_component_count("n_components " + std::to_string(n_components) +
                                  " outside [1, min(dim, n-1)] = [1, " +
                                  std::to_string(std::min(d, n - 1)) + "]");
    }

    Eigen::MatrixXd data = to_matrix(fit_on);
    Eigen::RowVectorXd mean = data.colwise().mean();
    data.rowwise() -= mean;
    Eigen::MatrixXd cov = (data.transpose() * data) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw degenerate_set("eigendecomposition failed");

    PcaModel model;
    model.mean.assign(mean.data(), mean.data() + d);
    // Eigen returns eigenvalues ascending; take from the back.
    for (std::size_t c = 0; c < n_components; ++c) {
        Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
        Eigen::VectorXd v = solver.eigenvectors().col(col);
        // Deterministic sign: largest-|.| coordinate made positive.
        Eigen::Index argmax = 0;
        v.cwiseAbs().maxCoeff(&argmax);
        if (v(argmax) < 0.0) v = -v;
        model.components.emplace_back(v.data(), v.data() + d);
        model.explained_variance.push_back(std::max(0.0, solver.eigenvalues()(col)));
    }
    return model;
}

SampleSet pca_project(const PcaModel& model, const SampleSet& set) {
    if (set.dim != model.mean.size()) {
        throw dimension_mismatch("pca_project: set dim " + std::to_string(set.dim) +
                                 " vs model dim " + std::to_string(model.mean.size()));
    }
    SampleSet out;
    out.dim = model.components.size();
    out.samples.reserve(set.size());
    for (const auto& x : set.samples) {
        FeatureVector z(out.dim, 0.0);
        for (std::size_t c = 0; c < out.dim; ++c) {
            double dot = 0.0;
            for (std::size_t j = 0; j < set.dim; ++j) {
                dot += (x[j] - model.mean[j]) * model.components[c][j];
            }
            z[c] = dot;
        }
        out.samples.push_back(std::move(z));
    }
    return out;
}

FeatureVector pca_reconstruct(const PcaModel& model, const FeatureVector& projected) {
    FeatureVector x = model.mean;
    for (std::size_t c = 0; c < model.components.size(); ++c) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] += projected[c] * model.components[c][j];
        }
    }
    return x;
}

std::pair<PcaModel, SampleSet> pca_fit_project(const SampleSet& fit_on,
                                               const SampleSet& project,
                                               std::size_t n_components) {
    PcaModel model = pca_fit(fit_on, n_components);
    SampleSet projected = pca_project(model, project);
    return {std::move(model), std::move(projected)};
}

namespace {

// Diagonal Gaussian KDE with Scott's-rule bandwidths, evaluated in log
// space via log-sum-exp.
class GaussianKde {
public:
    GaussianKde(const SampleSet& samples, KdeRule rule) : data_(samples) {
        (void)rule;  // Scott is the only rule
        const std::size_t n = samples.size();
        const std::size_t d = samples.dim;
        if (n < 2) throw too_few_samples("KDE needs >= 2 samples");
        const double factor = std::pow(static_cast<double>(n),
                                       -1.0 / (static_cast<double>(d) + 4.0));
        bandwidths_.resize(d);
        log_norm_ = -std::log(static_cast<double>(n));
        for (std::size_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (const auto& s : samples.samples) mean += s[j];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (const auto& s : samples.samples) {
                double diff = s[j] - mean;
                var += diff * diff;
            }
            var /= static_cast<double>(n - 1);
            double h = std::max(std::sqrt(var), 1e-12) * factor;
            bandwidths_[j] = h;
            log_norm_ -= std::log(h) + 0.5 * std::log(2.0 * M_PI);
        }
    }

    double log_density(const FeatureVector& x) const {
        double max_exponent = -std::numeric_limits<double>::infinity();
        std::vector<double> exponents;
        exponents.reserve(data_.size());
        for (const auto& s : data_.samples) {
            double e = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                double z = (x[j] - s[j]) / bandwidths_[j];
                e -= 0.5 * z * z;
            }
            exponents.push_back(e);
            max_exponent = std::max(max_exponent, e);
        }
        double sum = 0.0;
        for (double e : exponents) sum += std::exp(e - max_exponent);
        double log_dens = log_norm_ + max_exponent + std::log(sum);
        // Density floor keeps the log finite far from any kernel.
        return std::max(log_dens, std::log(1e-300));
    }

private:
    SampleSet data_;
    std::vector<double> bandwidths_;
    double log_norm_ = 0.0;
};

}  // namespace

double kde_kl(const SampleSet& p_samples, const SampleSet& q_samples, std::size_t pca_dims,
              KdeRule rule) {
    check_same_dim(p_samples, q_samples, "kde_kl");
    if (p_samples.size() < 2 || q_samples.size() < 2) {
        throw too_few_samples("kde_kl needs >= 2 samples per side");
    }
    PcaModel model = pca_fit(concat(p_samples, q_samples), pca_dims);
    SampleSet p_proj = pca_project(model, p_samples);
    SampleSet q_proj = pca_project(model, q_samples);

    GaussianKde p_kde(p_proj, rule);
    GaussianKde q_kde(q_proj, rule);

    double acc = 0.0;
    for (const auto& x : p_proj.samples) {
        acc += p_kde.log_density(x) - q_kde.log_density(x);
    }
    return acc / static_cast<double>(p_proj.size());
}

double b2t_distance(const SampleSet& test, const SampleSet& train) {
    if (test.size() == 0 || train.size() == 0) {
        throw too_few_samples("b2t_distance needs non-empty sets");
    }
    check_same_dim(test, train, "b2t_distance");
    double acc = 0.0;
    for (const auto& t : test.samples) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : train.samples) {
            best = std::min(best, squared_distance(t, s));
        }
        acc += std::sqrt(best);
    }
    return acc / static_cast<double>(test.size());
}

SampleSet build_mixed_set(const ExpressionBank& train, const Index& index, double fraction,
                          std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw bad_probability("fraction must lie in [0, 1]");
    }
    if (train.empty()) throw too_few_samples("build_mixed_set needs a non-empty train set");

    const std::size_t n = train.size();
    const auto n_replace =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

    // Seeded draw without replacement of the rows to substitute.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(seed, stream_id(RngPurpose::MixSelect));
    for (std::size_t k = 0; k + 1 < n; ++k) {
        std::size_t j = k + rng.next_below(n - k);
        std::swap(order[k], order[j]);
    }
    std::vector<bool> replace(n, false);
    for (std::size_t k = 0; k < n_replace; ++k) replace[order[k]] = true;

    SampleSet out;
    out.dim = train.dim();
    out.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = train.entry(i);
        if (replace[i]) {
            QueryConstraint constraint{e.identity_id};
            auto nn = index.knn_search(e.feature, 1, constraint);
            out.samples.push_back(index.bank().entry(nn.front().entry_index).feature);
        } else {
            out.samples.push_back(e.feature);
        }
    }
    return out;
}

CoveragePair coverage_report(const ExpressionBank& train, const SampleSet& test,
                             const Index& index, const CoverageConfig& config) {
    SampleSet train_set = bank_features(train);
    if (train_set.dim != test.dim) {
        throw dimension_mismatch("coverage_report: train dim " + std::to_string(train_set.dim) +
                                 " vs test dim " + std::to_string(test.dim));
    }

    CoveragePair pair;
    pair.config = config;
    pair.mmd_bandwidth_used =
        config.mmd_bandwidth ? *config.mmd_bandwidth : median_bandwidth(concat(train_set, test));

    SampleSet mixed = build_mixed_set(train, index, config.fraction, config.seed);

    pair.vanilla.mmd = rbf_mmd(train_set, test, pair.mmd_bandwidth_used);
    pair.vanilla.kl = kde_kl(train_set, test, config.pca_dims, config.kde_rule);
    pair.vanilla.b2t = b2t_distance(test, train_set);

    pair.raf.mmd = rbf_mmd(mixed, test, pair.mmd_bandwidth_used);
    pair.raf.kl = kde_kl(mixed, test, config.pca_dims, config.kde_rule);
    pair.raf.b2t = b2t_distance(test, mixed);

    return pair;
}

std::vector<ScatterRow> export_pca_scatter(const ExpressionBank& bank,
                                           const std::vector<FeatureVector>& queries,
                                           std::size_t k) {
    if (bank.empty()) throw empty_bank("pca scatter needs a non-empty bank");
    if (k < 1) throw usage_error("k must be >= 1");

    SampleSet bank_set = bank_features(bank);
    PcaModel model = pca_fit(bank_set, 2);
    SampleSet bank_2d = pca_project(model, bank_set);

    // Neighbor labels come from the original feature space; first query to
    // claim an entry keeps it.
    std::vector<std::string> label(bank.size());
    Index index(bank);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto results = index.knn_search(queries[q], k, QueryConstraint{});
        for (const auto& r : results) {
            if (label[r.entry_index].empty()) {
                label[r.entry_index] = "q" + std::to_string(q);
            }
        }
    }

    std::vector<ScatterRow> rows;
    rows.reserve(bank.size() + queries.size());
    for (std::size_t i = 0; i < bank.size(); ++i) {
        ScatterRow row;
        row.x = bank_2d.samples[i][0];
        row.y = bank_2d.samples[i][1];
        row.kind = label[i].empty() ? "bank" : "neighbor";
        row.query_id = label[i];
        row.identity_id = bank.entry(i).identity_id;
        row.frame_id = bank.entry(i).frame_id;
        rows.push_back(std::move(row));
    }
    SampleSet query_set{bank.dim(), queries};
    SampleSet query_2d = pca_project(model, query_set);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        ScatterRow row;
        row.x = query_2d.samples[q][0];
        row.y = query_2d.samples[q][1];
        row.kind = "query";
        row.query_id = "q" + std::to_string(q);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace raf
