#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rafkit/feature_bank.hpp"
#include "rafkit/retrieval.hpp"

namespace raf {

struct SampleSet {
    std::size_t dim = 0;
    std::vector<FeatureVector> samples;

    std::size_t size() const noexcept { return samples.size(); }
};

SampleSet bank_features(const ExpressionBank& bank);
SampleSet concat(const SampleSet& a, const SampleSet& b);

struct PcaModel {
    FeatureVector mean;
    std::vector<FeatureVector> components;  // orthonormal rows, variance-descending
    std::vector<double> explained_variance;
};

enum class KdeRule { Scott };

// Median of all nonzero pairwise Euclidean distances (even count: mean of
// the two middle values). Throws DegenerateSet when every point coincides.
double median_bandwidth(const SampleSet& pooled);

// sqrt(max(0, V)) for the biased V-statistic MMD^2 under the RBF kernel
// k(a,b) = exp(-|a-b|^2 / (2 sigma^2)). Symmetric in X/Y; exactly 0 when
// X == Y because all three kernel sums run the same loop.
double rbf_mmd(const SampleSet& x, const SampleSet& y, double bandwidth);

PcaModel pca_fit(const SampleSet& fit_on, std::size_t n_components);
SampleSet pca_project(const PcaModel& model, const SampleSet& set);
FeatureVector pca_reconstruct(const PcaModel& model, const FeatureVector& projected);
std::pair<PcaModel, SampleSet> pca_fit_project(const SampleSet& fit_on,
                                               const SampleSet& project,
                                               std::size_t n_components);

// Plug-in estimate of KL(P||Q) evaluated at P's samples, with Gaussian
// KDEs in the space spanned by a PCA fitted on the union of both sets.
// Densities are floored at 1e-300 before the log.
double kde_kl(const SampleSet& p_samples, const SampleSet& q_samples, std::size_t pca_dims,
              KdeRule rule = KdeRule::Scott);

// Mean over test samples of the distance to their nearest train sample.
double b2t_distance(const SampleSet& test, const SampleSet& train);

// Replaces round(fraction*N) seeded-chosen rows of the train set with their
// Top1 cross-identity neighbor from the bank behind `index`; other rows stay
// native. Output keeps size and order.
SampleSet build_mixed_set(const ExpressionBank& train, const Index& index, double fraction,
                          std::uint64_t seed);

struct CoverageConfig {
    double fraction = 0.5;
    std::optional<double> mmd_bandwidth;  // default: median heuristic on train+test
    std::size_t pca_dims = 5;
    KdeRule kde_rule = KdeRule::Scott;
    std::uint64_t seed = 0;
};

struct CoverageReport {
    double mmd = 0.0;
    double kl = 0.0;
    double b2t = 0.0;
};

struct CoveragePair {
    CoverageReport vanilla;
    CoverageReport raf;
    double mmd_bandwidth_used = 0.0;  // resolved once on train+test, shared by both
    CoverageConfig config;
};

// Vanilla report compares train vs test; the raf report swaps in the mixed
// set. One resolved bandwidth and one metric configuration serve both, so
// the two rows are directly comparable.
CoveragePair coverage_report(const ExpressionBank& train, const SampleSet& test,
                             const Index& index, const CoverageConfig& config);

struct ScatterRow {
    double x = 0.0;
    double y = 0.0;
    std::string kind;      // "bank" | "neighbor" | "query"
    std::string query_id;  // empty for unlabeled bank rows
    std::string identity_id;
    std::string frame_id;
};

// 2-D PCA of the bank (fitted on the bank itself) with, per query, its k
// nearest bank entries labeled. Neighbors are computed in the original
// feature space before projection; an entry claimed by several queries
// keeps the first query's label. Emits one row per bank entry plus one per
// query.
std::vector<ScatterRow> export_pca_scatter(const ExpressionBank& bank,
                                           const std::vector<FeatureVector>& queries,
                                           std::size_t k);

}  // namespace raf
