#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rafkit/feature_bank.hpp"

namespace raf {

struct NeighborResult {
    std::size_t entry_index = 0;
    double distance = 0.0;  // Euclidean
};

// Cross-identity exclusion: when set, no returned entry may carry this
// identity_id.
struct QueryConstraint {
    std::optional<std::string> exclude_identity;

    bool admits(const std::string& identity) const {
        return !exclude_identity || *exclude_identity != identity;
    }
};

struct SubstituteMode {
    enum class Kind { Top1, TopKUniform };
    Kind kind = Kind::Top1;
    std::size_t k = 1;

    static SubstituteMode top1() { return {Kind::Top1, 1}; }
    static SubstituteMode top_k_uniform(std::size_t k) { return {Kind::TopKUniform, k}; }
};

// Exact k-NN index over a bank. Read-only after build; concurrent queries
// are safe. The bank must outlive the index. Results are guaranteed to
// match brute_force_knn exactly: candidate distances use the same kernel
// and accumulation order, and selection only prunes candidates whose
// partial sum already exceeds the current k-th distance.
class Index {
public:
    explicit Index(const ExpressionBank& bank);

    std::vector<NeighborResult> knn_search(const FeatureVector& query, std::size_t k,
                                           const QueryConstraint& constraint) const;

    const ExpressionBank& bank() const noexcept { return *bank_; }

private:
    const ExpressionBank* bank_;
    std::vector<double> features_;  // row-major copy, cache-friendly scan order
};

Index build_index(const ExpressionBank& bank);

// Oracle path: full linear scan + stable sort. Identical contract to
// Index::knn_search.
std::vector<NeighborResult> brute_force_knn(const ExpressionBank& bank,
                                            const FeatureVector& query, std::size_t k,
                                            const QueryConstraint& constraint);

// Draws the substitution feature for one query. Top1 is deterministic;
// TopKUniform picks uniformly among the k nearest constrained neighbors
// with a counter RNG keyed by (seed, draw_index), so draws are reproducible
// and independent of evaluation order.
std::pair<FeatureVector, NeighborResult> sample_substitute(
    const Index& index, const FeatureVector& query,
    const std::optional<std::string>& exclude_identity, SubstituteMode mode,
    std::uint64_t seed, std::uint64_t draw_index);

}  // namespace raf
